import json
import subprocess
import sys

import numpy as np
import pytest

from gazetrack.cli import EXIT_ENV, EXIT_INPUT, EXIT_OK, main
from gazetrack.detect import DEFAULT_ANCHORS, FeatureMap, write_feature_map

CONFIG = """
scenario:
  duration: 3
  fps: 30
  seed: 7
  detector: {p_miss: 0.01, fp_rate: 0.5}
  targets:
    - {id: 1, size: [80, 60], circular: {center: [960, 540], radius: 300, omega: 0.5}, occlusions: [[40, 50]]}
    - {id: 2, size: [50, 50], linear: {start: [200, 300], velocity: [3, 0.5]}}
tracker:
  max_age: 30
pipeline:
  profile: optimized
  accelerator_workers: 2
"""

OUTPUTS = ("timing.csv", "gimbal.csv", "metrics.json", "summary.txt", "groundtruth.txt", "detections.txt")


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "sim.yaml"
    p.write_text(CONFIG)
    return p


def simulate(config, out, *extra):
    return main(["simulate", str(config), "--out", str(out), *extra])


class TestSimulate:
    def test_writes_artifacts(self, config, tmp_path, capsys):
        assert simulate(config, tmp_path / "o") == EXIT_OK
        for name in OUTPUTS:
            assert (tmp_path / "o" / name).stat().st_size > 0
        metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
        assert set(metrics) >= {"recognition_rate", "id_switches", "latency"}
        assert (tmp_path / "o" / "timing.csv").read_text().startswith(
            "frame,preprocess,transfer,inference,tracking,total_ms\n")
        assert "wall-clock" in capsys.readouterr().out

    def test_byte_identical(self, config, tmp_path):
        simulate(config, tmp_path / "a", "--seed", "5")
        simulate(config, tmp_path / "b", "--seed", "5")
        simulate(config, tmp_path / "c", "--seed", "5", "--threaded")
        for name in OUTPUTS:
            a = (tmp_path / "a" / name).read_bytes()
            assert a == (tmp_path / "b" / name).read_bytes()
            assert a == (tmp_path / "c" / name).read_bytes()

    def test_seed_changes_output(self, config, tmp_path):
        simulate(config, tmp_path / "a", "--seed", "1")
        simulate(config, tmp_path / "b", "--seed", "2")
        assert (tmp_path / "a" / "timing.csv").read_bytes() != (tmp_path / "b" / "timing.csv").read_bytes()

    def test_csv_metrics_and_profile(self, config, tmp_path):
        assert simulate(config, tmp_path / "o", "--format", "csv", "--profile", "baseline") == EXIT_OK
        text = (tmp_path / "o" / "metrics.csv").read_text()
        assert "recognition_rate" in text and "latency.total_ms.mean" in text

    def test_separate_files(self, tmp_path):
        scen = tmp_path / "scen.yaml"
        scen.write_text("duration: 1\nfps: 30\ntargets:\n  - {id: 1, size: [40, 40], linear: {start: [900, 500]}}\n")
        trk = tmp_path / "trk.yaml"
        trk.write_text("tracker:\n  n_init: 2\n")
        pipe = tmp_path / "pipe.yaml"
        pipe.write_text("stages:\n  - {name: all, executor: host, latency: {constant: 75}}\n")
        out = tmp_path / "o"
        assert main(["simulate", str(scen), "--tracker", str(trk), "--pipeline", str(pipe),
                     "--out", str(out)]) == EXIT_OK
        rows = (out / "timing.csv").read_text().splitlines()
        assert rows[0] == "frame,all,total_ms" and rows[1] == "0,75.000000,75.000000"

    def test_missing_fps(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text(CONFIG.replace("  fps: 30\n", ""))
        assert simulate(p, tmp_path / "o") == EXIT_INPUT
        assert "fps" in capsys.readouterr().err

    def test_unknown_section(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text(CONFIG + "extras: {}\n")
        assert simulate(p, tmp_path / "o") == EXIT_INPUT
        assert "extras" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert simulate(tmp_path / "nope.yaml", tmp_path / "o") == EXIT_ENV

    def test_unwritable_output(self, config, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert simulate(config, blocker / "sub") == EXIT_ENV


def detections_file(tmp_path, n_frames=20, lines=None):
    p = tmp_path / "dets.txt"
    if lines is None:
        lines = [f"{k},1,{100 + 2 * k}.000000,200.000000,40.000000,30.000000,0.900000" for k in range(n_frames)]
    p.write_text("\n".join(lines) + ("\n" if lines else ""))
    return p


class TestTrack:
    def test_single_target_one_id(self, tmp_path):
        out = tmp_path / "tracks.csv"
        assert main(["track", str(detections_file(tmp_path)), "--out", str(out)]) == EXIT_OK
        rows = out.read_text().splitlines()
        assert rows[0] == "frame,track_id,cx,cy,w,h,status"
        assert {r.split(",")[1] for r in rows[1:]} == {"1"}
        assert rows[-1].endswith("confirmed")

    def test_empty_file(self, tmp_path, capsys):
        assert main(["track", str(detections_file(tmp_path, lines=[]))]) == EXIT_OK
        assert capsys.readouterr().out == "frame,track_id,cx,cy,w,h,status\n"

    def test_truncated_line(self, tmp_path, capsys):
        lines = [f"{k},1,100,200,40,30,0.9" for k in range(20)]
        lines[16] = "16,1,100,200"
        assert main(["track", str(detections_file(tmp_path, lines=lines))]) == EXIT_INPUT
        assert "line 17" in capsys.readouterr().err

    def test_json(self, tmp_path, capsys):
        assert main(["track", str(detections_file(tmp_path, 3)), "--format", "json"]) == EXIT_OK
        rows = json.loads(capsys.readouterr().out)
        assert rows[0]["track_id"] == 1 and rows[0]["status"] == "tentative"

    def test_tracker_config(self, tmp_path):
        cfg = tmp_path / "t.yaml"
        cfg.write_text("n_init: 1\n")
        out = tmp_path / "o.csv"
        main(["track", str(detections_file(tmp_path, 2)), "--tracker", str(cfg), "--out", str(out)])
        assert out.read_text().splitlines()[1].endswith("confirmed")


def timing_file(tmp_path, name, totals):
    p = tmp_path / name
    p.write_text("frame,a,total_ms\n" + "".join(f"{k},{v},{v}\n" for k, v in enumerate(totals)))
    return p


class TestReport:
    def test_constant(self, tmp_path, capsys):
        assert main(["report", str(timing_file(tmp_path, "t.csv", [75.0] * 10)), "--format", "json"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["total_ms"]["mean"] == 75.0 and doc["total_ms"]["std"] == 0.0

    def test_reduction(self, tmp_path, capsys):
        after = timing_file(tmp_path, "after.csv", [75.0] * 4)
        before = timing_file(tmp_path, "before.csv", [214.3] * 4)
        assert main(["report", str(after), "--baseline", str(before)]) == EXIT_OK
        assert "reduction 65.00%" in capsys.readouterr().out

    def test_csv_output(self, tmp_path, capsys):
        after = timing_file(tmp_path, "after.csv", [70.0, 80.0])
        main(["report", str(after), "--format", "csv"])
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "stage,n,mean,std,min,max,p50,p95,p99"
        assert lines[-1].startswith("total,2,75.000000,7.071068")

    def test_header_only(self, tmp_path):
        assert main(["report", str(timing_file(tmp_path, "t.csv", []))]) == EXIT_INPUT

    def test_malformed(self, tmp_path, capsys):
        p = tmp_path / "t.csv"
        p.write_text("frame,a,total_ms\n0,1\n")
        assert main(["report", str(p)]) == EXIT_INPUT
        assert "line 2" in capsys.readouterr().err


class TestDecode:
    def test_decode_dump(self, tmp_path, capsys):
        raw = np.full((3, 8, 8, 6), -12.0)
        raw[0, 4, 5] = [0, 0, 0, 0, 12, 12]
        path = tmp_path / "h16.bin"
        write_feature_map(path, FeatureMap(8, 8, 16, DEFAULT_ANCHORS[16], raw.reshape(-1)))
        assert main(["decode", str(path), "--input-size", "128"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines == ["cx,cy,w,h,confidence,class_id", "88.000,72.000,30.000,61.000,0.999988,0"]

    def test_bad_dump(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"nope")
        assert main(["decode", str(p)]) == EXIT_INPUT


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gazetrack.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("gazetrack ")
