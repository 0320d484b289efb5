"""Noise-prediction model interface and an analytic Gaussian stand-in.

Every solver consumes a model through :func:`eval_noise`, which returns the
noise prediction and the data prediction derived from it.  The data
prediction is never computed independently, so the two parameterizations
cannot drift apart.

:class:`GaussianModel` treats the data distribution as
``Normal(z, spread**2 I)`` where ``z`` is the conditioning vector.  Its
marginals stay Gaussian at every time, which gives a closed-form score and a
closed-form probability-flow transport for testing solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .schedule import NoiseSchedule

__all__ = [
    "LatentState",
    "ModelEval",
    "NoiseModel",
    "GaussianModel",
    "eval_noise",
    "data_prediction",
    "exact_flow_map",
]


def _finite_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class LatentState:
    """A state vector ``x`` at a (possibly fractional) schedule time."""

    x: np.ndarray
    time_index: float

    def __post_init__(self):
        object.__setattr__(self, "x", _finite_vector(self.x, "state"))

    @property
    def dim(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class ModelEval:
    """Noise and data predictions at one evaluation point."""

    eps_hat: np.ndarray
    x0_hat: np.ndarray
    time_index: float


@runtime_checkable
class NoiseModel(Protocol):
    """Anything that predicts the noise component of ``x`` at time ``t``."""

    schedule: NoiseSchedule

    def predict_noise(self, x: np.ndarray, z: np.ndarray, t: float) -> np.ndarray: ...


def data_prediction(x, eps_hat, alpha: float, sigma: float) -> np.ndarray:
    """``x0 = (x - sigma * eps) / alpha``; returns ``x`` itself at ``sigma == 0``."""
    if sigma == 0.0:
        return np.array(x, dtype=float, copy=True)
    return (x - sigma * eps_hat) / alpha


@dataclass(frozen=True)
class GaussianModel:
    """Conditional Gaussian model with mean ``z`` and per-coordinate std ``spread``.

    If ``dim`` is set, conditioning vectors are zero-padded or truncated to
    that length; otherwise ``z`` must match the state dimension.
    """

    schedule: NoiseSchedule
    spread: float = 1.0
    dim: int | None = None

    def __post_init__(self):
        if not (self.spread > 0 and np.isfinite(self.spread)):
            raise ValueError("spread must be a positive finite number")
        if self.dim is not None and self.dim < 1:
            raise ValueError("dim must be >= 1")

    def mean(self, z, d: int) -> np.ndarray:
        z = _finite_vector(z, "conditioning")
        if self.dim is not None:
            if d != self.dim:
                raise ValueError(f"state dimension {d} != model dimension {self.dim}")
            if z.shape[0] >= d:
                return z[:d]
            return np.concatenate([z, np.zeros(d - z.shape[0])])
        if z.shape[0] != d:
            raise ValueError(f"conditioning dimension {z.shape[0]} != state dimension {d}")
        return z

    def marginal_var(self, t: float) -> float:
        a, s = self.schedule.alpha_sigma_at(t)
        return a * a * self.spread**2 + s * s

    def predict_noise(self, x, z, t: float) -> np.ndarray:
        x = _finite_vector(x, "state")
        mu = self.mean(z, x.shape[0])
        a, s = self.schedule.alpha_sigma_at(t)
        if s == 0.0:
            return np.zeros_like(x)
        return s * (x - a * mu) / (a * a * self.spread**2 + s * s)


def eval_noise(model: NoiseModel, state: LatentState, z) -> ModelEval:
    """Evaluate ``model`` at ``state`` and derive the data prediction."""
    t = state.time_index
    eps = np.asarray(model.predict_noise(state.x, z, t), dtype=float)
    if eps.shape != state.x.shape:
        raise ValueError("model returned a noise prediction of the wrong shape")
    a, s = model.schedule.alpha_sigma_at(t)
    if s == 0.0:
        eps = np.zeros_like(state.x)
    return ModelEval(eps_hat=eps, x0_hat=data_prediction(state.x, eps, a, s), time_index=t)


def exact_flow_map(model: GaussianModel, state: LatentState, z, t_target: float) -> LatentState:
    """Closed-form probability-flow transport of ``state`` to ``t_target``.

    The flow preserves Gaussian quantiles coordinate-wise:
    ``x_t = a_t z + sqrt(v_t) (x_s - a_s z) / sqrt(v_s)`` with
    ``v = a**2 spread**2 + sigma**2``.
    """
    mu = model.mean(z, state.dim)
    a_s, _ = model.schedule.alpha_sigma_at(state.time_index)
    a_t, _ = model.schedule.alpha_sigma_at(t_target)
    if t_target == state.time_index:
        return LatentState(state.x.copy(), float(t_target))
    scale = np.sqrt(model.marginal_var(t_target) / model.marginal_var(state.time_index))
    x_t = a_t * mu + scale * (state.x - a_s * mu)
    return LatentState(x_t, float(t_target))
