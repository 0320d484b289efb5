"""Discrete variance-preserving noise schedule and its log-SNR geometry.

The schedule is defined on integer indices ``0..N_T`` with a linear beta
ramp.  Continuous queries interpolate the log-SNR linearly between integer
knots and recover ``(alpha, sigma)`` from it, so ``alpha**2 + sigma**2 == 1``
holds at every query point, not only at the knots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoiseSchedule",
    "TimeGrid",
    "build_schedule",
    "make_time_grid",
    "T_FLOOR",
    "FD_STEP",
]

# Smallest queryable continuous time; lambda diverges at index 0.
T_FLOOR = 1.0
# Central finite-difference step (index units) for drift/diffusion.
FD_STEP = 1e-3


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _log_alpha_of_lambda(lam):
    # log(alpha) with alpha = 1/sqrt(1 + exp(-2 lam)); stable for large |lam|
    return -0.5 * np.logaddexp(0.0, -2.0 * lam)


def _sigma2_of_lambda(lam):
    # sigma^2 = 1/(1 + exp(2 lam))
    return np.exp(-np.logaddexp(0.0, 2.0 * lam))


def _softplus(v: float) -> float:
    return v + math.log1p(math.exp(-v)) if v > 0 else math.log1p(math.exp(v))


def _alpha_sigma_scalar(lam: float) -> tuple[float, float]:
    return math.exp(-0.5 * _softplus(-2.0 * lam)), math.exp(-0.5 * _softplus(2.0 * lam))


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta VP schedule tabulated on integer indices.

    Arrays are indexed ``0..N_T``. ``beta[0]`` is NaN (undefined) and
    ``lambda_[0]`` is ``+inf``; neither is ever used in arithmetic.
    """

    n_steps_total: int
    beta_min: float
    beta_max: float
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    lambda_: np.ndarray = field(repr=False)

    @property
    def t_floor(self) -> float:
        return T_FLOOR

    # -- continuous-time queries ------------------------------------------

    def _check_range(self, t, lo: float = T_FLOOR) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError("time must be finite")
        if np.any(t < lo) or np.any(t > self.n_steps_total):
            raise ValueError(
                f"time {t} outside queryable range [{lo}, {self.n_steps_total}]"
            )
        return t

    def log_snr(self, t):
        """Log-SNR at continuous time ``t``, linear between integer knots.

        Raises ``ValueError`` below ``t_floor`` where lambda diverges.
        """
        if np.ndim(t) == 0:
            t = float(t)
            if not T_FLOOR <= t <= self.n_steps_total:
                raise ValueError(
                    f"time {t} outside queryable range [{T_FLOOR}, {self.n_steps_total}]"
                )
            i = min(int(t), self.n_steps_total - 1)
            return self._lambda_on_piece(t, i)
        tt = self._check_range(t)
        knots = np.arange(1, self.n_steps_total + 1, dtype=float)
        return np.interp(tt, knots, self.lambda_[1:])

    def alpha_sigma_at(self, t):
        """Return ``(alpha, sigma)`` at continuous time ``t``.

        Integer times return the tabulated values exactly.  ``t == 0`` is
        accepted and returns the clean endpoint ``(1, 0)``; any other time
        below ``t_floor`` is rejected.
        """
        if np.ndim(t) == 0:
            t = float(t)
            if t == 0.0:
                return 1.0, 0.0
            if t.is_integer() and 1 <= t <= self.n_steps_total:
                i = int(t)
                return float(self.alpha[i]), float(self.sigma[i])
            lam = self.log_snr(t)
            return _alpha_sigma_scalar(lam)
        tt = np.asarray(t, dtype=float)
        zero = tt == 0.0
        self._check_range(np.where(zero, T_FLOOR, tt))
        lam = np.asarray(self.log_snr(np.where(zero, T_FLOOR, tt)))
        a = np.exp(_log_alpha_of_lambda(lam))
        s = np.sqrt(_sigma2_of_lambda(lam))
        integral = (tt == np.floor(tt)) & ~zero
        idx = tt[integral].astype(int)
        a[integral] = self.alpha[idx]
        s[integral] = self.sigma[idx]
        a[zero] = 1.0
        s[zero] = 0.0
        return a, s

    def _lambda_on_piece(self, t: float, piece: int) -> float:
        # linear extension of the knot segment [piece, piece + 1]
        l0 = float(self.lambda_[piece])
        l1 = float(self.lambda_[piece + 1])
        return l0 + (t - piece) * (l1 - l0)

    def drift_diffusion(self, t: float, piece: int | None = None) -> tuple[float, float]:
        """Drift ``f(t) = d log(alpha)/dt`` and squared diffusion ``g(t)**2``.

        Derivatives are central finite differences with step ``FD_STEP`` on
        the interpolated schedule.  Stencils that would leave
        ``[t_floor, N_T]`` are rejected.

        If ``piece`` is given, the differences are taken on the linear
        extension of the segment ``[piece, piece + 1]`` instead, so the
        stencil never straddles a knot.  The reference integrator uses this
        form to keep the right-hand side smooth within each step.
        """
        h = FD_STEP
        t = float(t)
        if piece is None:
            if t - h < T_FLOOR or t + h > self.n_steps_total:
                raise ValueError(
                    f"t={t} too close to the schedule boundary for central differences"
                )
            lam_m = self.log_snr(t - h)
            lam_p = self.log_snr(t + h)
            lam_0 = self.log_snr(t)
        else:
            if not 1 <= piece < self.n_steps_total:
                raise ValueError(f"piece {piece} outside 1..{self.n_steps_total - 1}")
            if not piece - h <= t <= piece + 1 + h:
                raise ValueError(f"t={t} not on piece [{piece}, {piece + 1}]")
            lam_m = self._lambda_on_piece(t - h, piece)
            lam_p = self._lambda_on_piece(t + h, piece)
            lam_0 = self._lambda_on_piece(t, piece)
        log_a_p, log_a_m = -0.5 * _softplus(-2.0 * lam_p), -0.5 * _softplus(-2.0 * lam_m)
        s2_p, s2_m = math.exp(-_softplus(2.0 * lam_p)), math.exp(-_softplus(2.0 * lam_m))
        f = (log_a_p - log_a_m) / (2 * h)
        ds2 = (s2_p - s2_m) / (2 * h)
        g2 = ds2 - 2.0 * f * math.exp(-_softplus(2.0 * lam_0))
        return f, g2

    def make_time_grid(self, n: int) -> "TimeGrid":
        return make_time_grid(self, n)


def build_schedule(
    n_steps_total: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02
) -> NoiseSchedule:
    """Tabulate the linear-beta schedule.

    ``beta_i = beta_min + (i - 1) (beta_max - beta_min) / N_T`` for
    ``i = 1..N_T`` and ``alpha_i**2 = prod_{n<=i} (1 - beta_n)``.
    """
    if int(n_steps_total) != n_steps_total or n_steps_total < 2:
        raise ValueError("n_steps_total must be an integer >= 2")
    if not (0.0 < beta_min < beta_max < 1.0):
        raise ValueError("require 0 < beta_min < beta_max < 1")
    n = int(n_steps_total)
    i = np.arange(1, n + 1, dtype=float)
    beta = beta_min + (i - 1.0) * (beta_max - beta_min) / n
    # log(alpha^2) accumulated in log space; sigma^2 via expm1 keeps the
    # small-sigma end accurate.
    log_a2 = np.concatenate([[0.0], np.cumsum(np.log1p(-beta))])
    alpha = np.exp(0.5 * log_a2)
    sigma = np.sqrt(-np.expm1(log_a2))
    with np.errstate(divide="ignore"):
        lam = np.log(alpha) - np.log(sigma)
    lam[0] = np.inf
    beta_full = np.concatenate([[np.nan], beta])
    return NoiseSchedule(
        n_steps_total=n,
        beta_min=float(beta_min),
        beta_max=float(beta_max),
        beta=_readonly(beta_full),
        alpha=_readonly(alpha),
        sigma=_readonly(sigma),
        lambda_=_readonly(lam),
    )


@dataclass(frozen=True)
class TimeGrid:
    """Ascending integer knots ``0 = tau_0 < ... < tau_n = N_T``."""

    indices: np.ndarray
    n: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or len(idx) != self.n + 1:
            raise ValueError("grid must have n + 1 knots")
        if idx[0] != 0:
            raise ValueError("grid must start at index 0")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("grid knots must be strictly increasing")
        object.__setattr__(self, "indices", _readonly(idx.copy()))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(int(i) for i in self.indices)

    @property
    def end(self) -> int:
        return int(self.indices[-1])


def make_time_grid(schedule: NoiseSchedule, n: int) -> TimeGrid:
    """Place ``n`` solver steps on evenly spaced integer indices.

    ``tau_k = floor(k * N_T / n + 1/2)``; a collision is resolved by bumping
    to the next free integer (unreachable for ``n <= N_T`` but kept as a
    guard).
    """
    total = schedule.n_steps_total
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if n > total:
        raise ValueError(f"n={n} exceeds N_T={total}")
    n = int(n)
    taus = []
    for k in range(n + 1):
        tau = (2 * k * total + n) // (2 * n)
        if taus and tau <= taus[-1]:
            tau = taus[-1] + 1
        taus.append(tau)
    if taus[-1] != total:
        raise RuntimeError("grid construction overran N_T")
    return TimeGrid(indices=np.array(taus, dtype=np.int64), n=n)
