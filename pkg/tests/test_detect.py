import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gazetrack.detect import (
    DEFAULT_ANCHORS,
    DecodeParams,
    FeatureMap,
    QuantizedTensor,
    decode_heads,
    dequantize,
    hard_swish,
    nms,
    quantize,
    read_feature_map,
    silu,
    write_feature_map,
)
from gazetrack.errors import InvalidTensorError, MalformedHeadError
from gazetrack.geometry import BBox, iou
from gazetrack.tracker import Detection
from heads import random_heads
from oracles import greedy_nms, reference_decode


def silu_ref(x):
    return x / (1.0 + math.exp(-x))


def hard_swish_ref(x):
    if x >= 3:
        return x
    if x <= -3:
        return 0.0
    return x * (x / 6 + 0.5)


class TestActivations:
    @pytest.mark.parametrize("x,expected", [(0.0, 0.0), (1.0, 0.731059)])
    def test_silu_values(self, x, expected):
        assert silu(x) == pytest.approx(expected, abs=1e-6)

    def test_silu_saturates(self):
        assert abs(silu(20.0) - 20.0) < 1e-6
        assert abs(silu(-800.0)) < 1e-12

    def test_silu_non_monotonic(self):
        assert silu(-1.0) < silu(-0.5) < 0
        assert silu(-1.0) < silu(-4.0) < 0

    @pytest.mark.parametrize("x,expected", [(3.0, 3.0), (-3.0, 0.0), (1.0, 2 / 3), (10.0, 10.0), (-7.0, 0.0)])
    def test_hard_swish_values(self, x, expected):
        assert hard_swish(x) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("edge", [-3.0, 3.0])
    def test_hard_swish_continuity(self, edge):
        left, right = hard_swish(edge - 1e-12), hard_swish(edge + 1e-12)
        assert abs(left - right) < 1e-11

    def test_array_in_array_out(self):
        x = np.linspace(-6, 6, 7)
        assert isinstance(silu(x), np.ndarray) and isinstance(hard_swish(x), np.ndarray)
        assert isinstance(silu(0.5), float) and isinstance(hard_swish(0.5), float)

    def test_corridor_between_variants(self):
        xs = np.round(np.arange(-600, 601) / 100.0, 2)
        gap = max(abs(silu_ref(x) - hard_swish_ref(x)) for x in xs)
        # the oracle bound first, then the library against it
        assert gap < 0.25
        assert np.max(np.abs(silu(xs) - hard_swish(xs))) == pytest.approx(gap, abs=1e-12)

    @given(st.floats(-50, 50))
    def test_match_scalar_oracles(self, x):
        assert silu(x) == pytest.approx(silu_ref(x), rel=1e-12, abs=1e-15)
        assert hard_swish(x) == pytest.approx(hard_swish_ref(x), rel=1e-12, abs=1e-15)


def single_cell_head(stride=16, grid=8, nc=1, cell=(4, 5), anchor=0, obj=12.0):
    raw = np.full((3, grid, grid, 5 + nc), -12.0)
    raw[anchor, cell[0], cell[1], :4] = 0.0
    raw[anchor, cell[0], cell[1], 4] = obj
    raw[anchor, cell[0], cell[1], 5:] = 12.0
    return FeatureMap(grid, grid, stride, DEFAULT_ANCHORS[stride], raw.reshape(-1), nc)


class TestDecode:
    def test_nothing_confident(self):
        raw = np.full(3 * 4 * 4 * 6, -50.0)
        fm = FeatureMap(4, 4, 16, DEFAULT_ANCHORS[16], raw)
        assert decode_heads([fm], DecodeParams(input_size=64)) == []

    def test_single_cell_hand_decode(self):
        fm = single_cell_head()
        (d,) = decode_heads([fm], DecodeParams(input_size=640))
        # zero offsets squash to 0.5: center at cell + 0.5, size = anchor * (2 * 0.5)^2
        assert d.bbox.cx == pytest.approx((5 + 0.5) * 16)
        assert d.bbox.cy == pytest.approx((4 + 0.5) * 16)
        assert (d.bbox.w, d.bbox.h) == pytest.approx(DEFAULT_ANCHORS[16][0])
        assert d.confidence == pytest.approx(1.0, abs=1e-4)

    def test_neighbors_suppressed(self):
        raw = np.full((3, 4, 4, 6), -12.0)
        raw[0, 1, 1, :] = [2.0, 0.0, 0.0, 0.0, 12.0, 12.0]
        raw[0, 1, 2, :] = [-2.0, 0.0, 0.0, 0.0, 11.0, 12.0]
        fm = FeatureMap(4, 4, 16, [(60, 60)] * 3, raw.reshape(-1))
        out = decode_heads([fm], DecodeParams(input_size=64))
        assert len(out) == 1
        assert out[0].bbox.cx == pytest.approx((1 + 1 / (1 + math.exp(-2))) * 16)

    def test_clamped_to_input(self):
        fm = single_cell_head(stride=32, grid=2, cell=(0, 0), anchor=2)
        (d,) = decode_heads([fm], DecodeParams(input_size=64))
        x1, y1, x2, y2 = d.bbox.corners
        assert x1 >= 0 and y1 >= 0 and x2 <= 64 and y2 <= 64

    def test_shape_mismatch(self):
        fm = FeatureMap(4, 4, 16, DEFAULT_ANCHORS[16], np.zeros(10))
        with pytest.raises(MalformedHeadError):
            decode_heads([fm], DecodeParams())

    def test_duplicate_strides(self):
        with pytest.raises(MalformedHeadError):
            decode_heads([single_cell_head(), single_cell_head()], DecodeParams())

    def test_class_count_mismatch(self):
        with pytest.raises(MalformedHeadError):
            decode_heads([single_cell_head(nc=2)], DecodeParams(n_classes=1))

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        maps, nc = random_heads(rng)
        p = DecodeParams(128, 0.3, 0.45, nc)
        got = decode_heads([fm for fm, _ in maps], p)
        ref = reference_decode([(raw, fm.stride, fm.anchors) for fm, raw in maps], 128, 0.3, 0.45)
        assert len(got) == len(ref)
        for d, r in zip(got, ref):
            assert d.bbox.corners == pytest.approx(r[:4], abs=1e-9)
            assert d.confidence == pytest.approx(r[4], abs=1e-12)
            assert d.class_id == r[5]

    @pytest.mark.parametrize("seed", range(10))
    def test_output_invariants(self, seed):
        rng = np.random.default_rng(100 + seed)
        maps, nc = random_heads(rng, obj_bias=0.5)
        p = DecodeParams(128, 0.2, 0.5, nc)
        out = decode_heads([fm for fm, _ in maps], p)
        for d in out:
            assert d.confidence >= p.conf_threshold
            x1, y1, x2, y2 = d.bbox.corners
            assert 0 <= x1 < x2 <= 128 and 0 <= y1 < y2 <= 128
        for i, a in enumerate(out):
            for b in out[i + 1:]:
                assert a.class_id != b.class_id or iou(a.bbox, b.bbox) <= p.nms_iou_threshold


def dets_from(boxes, confs, classes=None):
    classes = classes or [0] * len(boxes)
    return [Detection(BBox(*b), c, k) for b, c, k in zip(boxes, confs, classes)]


class TestNMS:
    def test_identical_boxes(self):
        out = nms(dets_from([(0, 0, 10, 10), (0, 0, 10, 10)], [0.8, 0.9]), 0.5)
        assert [d.confidence for d in out] == [0.9]

    def test_disjoint_kept_in_confidence_order(self):
        out = nms(dets_from([(0, 0, 5, 5), (50, 0, 5, 5), (100, 0, 5, 5)], [0.2, 0.9, 0.5]), 0.5)
        assert [d.confidence for d in out] == [0.9, 0.5, 0.2]

    def test_chain_matches_greedy(self):
        boxes = [(6.0 * k, 0.0, 10.0, 10.0) for k in range(5)]
        confs = [0.5, 0.9, 0.6, 0.8, 0.7]
        out = nms(dets_from(boxes, confs), 0.2)
        keep = greedy_nms(boxes, confs, [0] * 5, 0.2)
        assert [d.bbox.as_tuple() for d in out] == [boxes[i] for i in keep]

    def test_classes_do_not_suppress_each_other(self):
        out = nms(dets_from([(0, 0, 10, 10), (0, 0, 10, 10)], [0.9, 0.8], [0, 1]), 0.5)
        assert len(out) == 2

    def test_empty(self):
        assert nms([], 0.5) == []

    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(2, 20),
                              st.integers(2, 20), st.floats(0, 1), st.integers(0, 1)), max_size=20),
           st.floats(0, 1))
    def test_subset_without_conflicts(self, raw, thr):
        dets = [Detection(BBox(x, y, w, h), c, k) for x, y, w, h, c, k in raw]
        out = nms(dets, thr)
        assert all(any(o is d for d in dets) for o in out)
        for i, a in enumerate(out):
            for b in out[i + 1:]:
                assert a.class_id != b.class_id or iou(a.bbox, b.bbox) <= thr
        keep = greedy_nms([d.bbox.as_tuple() for d in dets], [d.confidence for d in dets],
                          [d.class_id for d in dets], thr)
        assert [id(d) for d in out] == [id(dets[i]) for i in keep]


tensors = hnp.arrays(
    np.float64,
    hnp.array_shapes(min_dims=1, max_dims=3, max_side=12),
    elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, allow_subnormal=False),
)


class TestQuantize:
    def test_zeros(self):
        q = quantize(np.zeros(5))
        assert q.position == 0 and q.scale == 1.0 and not q.data.any()
        assert not dequantize(q).any()

    def test_peak_maps_to_full_range(self):
        q = quantize([0.1, -3.7, 2.0])
        assert q.data.tolist()[1] == -127

    @pytest.mark.parametrize("bad", [[], [1.0, math.nan], [math.inf]])
    def test_invalid(self, bad):
        with pytest.raises(InvalidTensorError):
            quantize(bad)

    def test_shape_preserved(self):
        t = np.arange(12.0).reshape(3, 4) - 5
        q = quantize(t)
        assert q.data.shape == (3, 4) and q.data.dtype == np.int8
        assert dequantize(q).shape == (3, 4)

    def test_scale_covers_peak(self):
        q = quantize([5.0, -1.0])
        assert q.scale * 2.0 ** q.position * 127 >= 5.0 * (1 - 1e-15)

    def test_dequantize_definition(self):
        q = QuantizedTensor(np.array([1, -2, 127], dtype=np.int8), 3, 0.75)
        assert dequantize(q).tolist() == [6.0, -12.0, 762.0]

    @pytest.mark.parametrize("seed", range(20))
    def test_roundtrip_random(self, seed):
        rng = np.random.default_rng(seed)
        t = rng.normal(0, 10.0 ** rng.uniform(-4, 4), 1000)
        q = quantize(t)
        assert np.all(np.abs(t - dequantize(q)) <= 0.5 * q.step * (1 + 1e-9))
        rel = np.max(np.abs(t - dequantize(q))) / np.max(np.abs(t))
        assert rel <= 1 / 127 * 0.5 + 1e-12

    @given(tensors)
    def test_roundtrip_property(self, t):
        q = quantize(t)
        assert np.all(np.abs(q.data.astype(int)) <= 127)
        assert np.all(np.abs(t - dequantize(q)) <= 0.5 * q.step * (1 + 1e-9))

    @given(tensors)
    def test_requantize_fixed_point(self, t):
        q = quantize(t)
        again = quantize(dequantize(q))
        assert np.array_equal(again.data, q.data)


class TestFeatureMapIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        fm = FeatureMap(2, 3, 16, DEFAULT_ANCHORS[16], rng.normal(size=3 * 2 * 3 * 7).astype(np.float32), 2)
        path = tmp_path / "head.bin"
        write_feature_map(path, fm)
        back = read_feature_map(path)
        assert (back.grid_h, back.grid_w, back.stride, back.n_classes) == (2, 3, 16.0, 2)
        assert back.anchors == fm.anchors
        assert np.array_equal(back.raw, fm.raw)

    @pytest.mark.parametrize("blob", [b"", b"XXXX" + bytes(20), b"YHFM" + bytes(10)])
    def test_bad_files(self, tmp_path, blob):
        path = tmp_path / "bad.bin"
        path.write_bytes(blob)
        with pytest.raises(MalformedHeadError):
            read_feature_map(path)

    def test_truncated_payload(self, tmp_path):
        fm = single_cell_head()
        path = tmp_path / "h.bin"
        write_feature_map(path, fm)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(MalformedHeadError):
            read_feature_map(path)
