"""Constant-velocity Kalman filter over the 7-dim box state.

State layout: ``[x, y, s, r, vx, vy, vs]``. The aspect ratio ``r`` carries no
velocity term, so prediction never changes it. The measurement is the first
four components (a :class:`~nearfar.geom.StateBox`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .geom import StateBox

DIM_X = 7
DIM_Z = 4

# r must stay strictly positive for the projected box to be valid
_R_FLOOR = 1e-6


def _transition() -> np.ndarray:
    F = np.eye(DIM_X)
    F[0, 4] = F[1, 5] = F[2, 6] = 1.0
    return F


F = _transition()
H = np.eye(DIM_Z, DIM_X)


@dataclass(frozen=True)
class KalmanConfig:
    p0_diag: tuple[float, ...] = (10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4)
    q_diag: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4)
    r_diag: tuple[float, ...] = (1.0, 1.0, 10.0, 10.0)
    s_min: float = 1.0

    def __post_init__(self):
        for name, n in (("p0_diag", DIM_X), ("q_diag", DIM_X), ("r_diag", DIM_Z)):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if len(vals) != n:
                raise ConfigError(f"kalman.{name} needs {n} entries, got {len(vals)}")
            if not all(np.isfinite(v) for v in vals):
                raise ConfigError(f"kalman.{name} must be finite")
        if any(v <= 0 for v in self.p0_diag):
            raise ConfigError("kalman.p0_diag entries must be > 0")
        if any(v < 0 for v in self.q_diag):
            raise ConfigError("kalman.q_diag entries must be >= 0")
        if any(v <= 0 for v in self.r_diag):
            raise ConfigError("kalman.r_diag entries must be > 0 (R positive definite)")
        if not (np.isfinite(self.s_min) and self.s_min > 0):
            raise ConfigError("kalman.s_min must be > 0")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "cov", _frozen(self.cov))
        if self.mean.shape != (DIM_X,) or self.cov.shape != (DIM_X, DIM_X):
            raise ValueError("KalmanState needs a 7-vector mean and 7x7 covariance")

    def measurement(self) -> StateBox:
        return StateBox(*(float(v) for v in self.mean[:DIM_Z]))


def init_state(z: StateBox, config: KalmanConfig = KalmanConfig()) -> KalmanState:
    mean = np.zeros(DIM_X)
    mean[:DIM_Z] = z.as_array()
    return KalmanState(mean, np.diag(config.p0_diag))


def predict(k: KalmanState, config: KalmanConfig = KalmanConfig()) -> tuple[KalmanState, StateBox]:
    """Advance one frame. Returns the new state and its projected measurement."""
    mean = F @ k.mean
    mean[2] = max(mean[2], config.s_min)
    mean[3] = max(mean[3], _R_FLOOR)
    cov = F @ k.cov @ F.T + np.diag(config.q_diag)
    cov = (cov + cov.T) / 2.0
    new = KalmanState(mean, cov)
    return new, new.measurement()


def update(k: KalmanState, z: StateBox, config: KalmanConfig = KalmanConfig()) -> KalmanState:
    """Measurement update (Joseph form, re-symmetrized)."""
    R = np.diag(config.r_diag)
    P = k.cov
    S = H @ P @ H.T + R
    PHt = P @ H.T
    try:
        K = np.linalg.solve(S, PHt.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular innovation covariance: {exc}") from exc
    innovation = z.as_array() - H @ k.mean
    mean = k.mean + K @ innovation
    mean[2] = max(mean[2], config.s_min)
    mean[3] = max(mean[3], _R_FLOOR)
    A = np.eye(DIM_X) - K @ H
    cov = A @ P @ A.T + K @ R @ K.T
    cov = (cov + cov.T) / 2.0
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NumericalError("non-finite Kalman state after update")
    return KalmanState(mean, cov)
