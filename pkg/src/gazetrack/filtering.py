"""Constant-velocity Kalman filter over the 7-dim box state (u, v, s, r, du, dv, ds).

The aspect ratio r has no velocity term. Noise is diagonal throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateWeightsError, InvalidStateError
from .geometry import BBox, bbox_to_state

__all__ = [
    "MotionModel",
    "KalmanTrackState",
    "initiate",
    "predict",
    "update",
    "gating_distance",
    "scalar_fuse",
    "CHI2_95_4DOF",
]

# 0.95 quantile of chi-square with 4 degrees of freedom
CHI2_95_4DOF = 9.4877


def _noise_for_box(w: float, h: float):
    s = w * h
    r = w / h
    q = [
        (0.02 * h) ** 2, (0.02 * h) ** 2, (0.02 * s) ** 2, 1e-4 * r * r,
        (0.3 * h) ** 2, (0.3 * h) ** 2, (0.1 * s) ** 2,
    ]
    meas = [(0.05 * h) ** 2, (0.05 * h) ** 2, (0.1 * s) ** 2, (0.05 * r) ** 2]
    p0 = [
        (0.1 * h) ** 2, (0.1 * h) ** 2, (0.2 * s) ** 2, (0.1 * r) ** 2,
        (2.0 * h) ** 2, (2.0 * h) ** 2, (0.5 * s) ** 2,
    ]
    return q, meas, p0


@dataclass
class MotionModel:
    """Frame period and diagonal noise variances.

    Velocities are in state units per second, so ``dt`` is in seconds. The
    default noise levels are scaled to a reference box (``for_box``); the
    plain constructor uses a 64 x 64 px reference at 30 fps.
    """

    dt: float = 1.0 / 30.0
    q_diag: np.ndarray = field(default_factory=lambda: np.array(_noise_for_box(64.0, 64.0)[0]))
    r_diag: np.ndarray = field(default_factory=lambda: np.array(_noise_for_box(64.0, 64.0)[1]))
    p0_diag: np.ndarray = field(default_factory=lambda: np.array(_noise_for_box(64.0, 64.0)[2]))

    def __post_init__(self):
        self.q_diag = np.asarray(self.q_diag, dtype=np.float64).reshape(7)
        self.r_diag = np.asarray(self.r_diag, dtype=np.float64).reshape(4)
        self.p0_diag = np.asarray(self.p0_diag, dtype=np.float64).reshape(7)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name in ("q_diag", "r_diag", "p0_diag"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} entries must be >= 0")

    @classmethod
    def for_box(cls, w: float, h: float, dt: float = 1.0 / 30.0) -> MotionModel:
        q, meas, p0 = _noise_for_box(float(w), float(h))
        return cls(dt=dt, q_diag=np.array(q), r_diag=np.array(meas), p0_diag=np.array(p0))


@dataclass
class KalmanTrackState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(7)
        self.cov = np.asarray(self.cov, dtype=np.float64).reshape(7, 7)

    @classmethod
    def wrap(cls, mean: np.ndarray, cov: np.ndarray) -> KalmanTrackState:
        """Adopt float64 arrays of shape (7,) and (7, 7) as-is, views included."""
        obj = cls.__new__(cls)
        obj.mean = mean
        obj.cov = cov
        return obj

    def copy(self) -> KalmanTrackState:
        return KalmanTrackState.wrap(self.mean.copy(), self.cov.copy())

    @property
    def measurement(self) -> np.ndarray:
        """Projected measurement (u, v, s, r)."""
        return self.mean[:4].copy()


def initiate(box: BBox, model: MotionModel) -> KalmanTrackState:
    mean = np.zeros(7)
    mean[:4] = bbox_to_state(box)
    return KalmanTrackState(mean, np.diag(model.p0_diag))


def predict(state: KalmanTrackState, model: MotionModel) -> KalmanTrackState:
    means = state.mean.reshape(1, 7).copy()
    covs = state.cov.reshape(1, 7, 7).copy()
    kernels.kf_predict(means, covs, model.dt, model.q_diag)
    return KalmanTrackState(means[0], covs[0])


def _check_measurement(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).reshape(4)
    if not (z[2] > 0 and z[3] > 0):
        raise InvalidStateError(f"measurement needs s > 0 and r > 0, got {z}")
    return z


def update(state: KalmanTrackState, z, model: MotionModel) -> KalmanTrackState:
    """Fuse measurement ``z = (u, v, s, r)``.

    Raises SingularUpdateError when the innovation covariance is numerically
    singular.
    """
    z = _check_measurement(z)
    means = state.mean.reshape(1, 7).copy()
    covs = state.cov.reshape(1, 7, 7).copy()
    kernels.kf_update(means, covs, z.reshape(1, 4), model.r_diag)
    return KalmanTrackState(means[0], covs[0])


def gating_distance(state: KalmanTrackState, z, model: MotionModel) -> float:
    """Squared Mahalanobis distance of ``z`` under the projected state."""
    z = np.asarray(z, dtype=np.float64).reshape(1, 4)
    d = kernels.gating_matrix(
        np.ascontiguousarray(state.mean.reshape(1, 7)),
        np.ascontiguousarray(state.cov.reshape(1, 7, 7)),
        model.r_diag,
        z,
    )
    return float(d[0, 0])


def scalar_fuse(pred: float, conf_pred: float, meas: float, conf_meas: float) -> float:
    """Confidence-weighted average of a prediction and a measurement."""
    total = conf_pred + conf_meas
    if not total > 0:
        raise DegenerateWeightsError("confidence weights must not sum to zero")
    w = conf_meas / total
    return (1.0 - w) * pred + w * meas
