"""Probability-flow ODE stepping rules and traversals.

All exponential-integrator steps use ``h = lambda(target) - lambda(source)``.
Backward (sampling) steps have ``h > 0``, forward (encoding) steps ``h < 0``.
Steps that touch the clean endpoint (index 0, where ``sigma == 0`` and
lambda is infinite) are written in the parameterized form
``x_u = alpha_u * x0_hat + sigma_u * eps_hat``, which is algebraically equal
to the exponential-integrator form wherever both sigmas are positive.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import LatentState, ModelEval, NoiseModel, eval_noise
from .schedule import NoiseSchedule, TimeGrid

__all__ = [
    "SolverKind",
    "Trajectory",
    "step_ddim",
    "step_dpmpp2m",
    "step_diffae_forward",
    "delta_discrepancy",
    "solve",
    "solve_reference",
]


class SolverKind(enum.Enum):
    BackwardDDIM = "ddim"
    BackwardDPMpp2M = "dpmpp2m"
    ForwardDiffAE = "diffae-forward"
    ForwardDDIM = "ddim-forward"
    ForwardDPMpp2M = "dpmpp2m-forward"
    ReferenceRK4 = "rk4"

    @property
    def is_forward(self) -> bool:
        return self in (SolverKind.ForwardDiffAE, SolverKind.ForwardDDIM, SolverKind.ForwardDPMpp2M)

    @property
    def is_backward(self) -> bool:
        return self in (SolverKind.BackwardDDIM, SolverKind.BackwardDPMpp2M)

    @classmethod
    def parse(cls, name: str) -> "SolverKind":
        for kind in cls:
            if name in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown solver {name!r}; choose from {[k.value for k in cls]}")


@dataclass(frozen=True)
class Trajectory:
    states: tuple[LatentState, ...]
    nfe: int

    @property
    def final(self) -> LatentState:
        return self.states[-1]

    def to_rows(self) -> list[list[float]]:
        """Rows of ``[knot, time_index, x_0, ..., x_{d-1}]`` for CSV export."""
        return [[k, s.time_index, *s.x.tolist()] for k, s in enumerate(self.states)]


def _knot(schedule: NoiseSchedule, t) -> int:
    tf = float(t)
    if not tf.is_integer() or not 0 <= tf <= schedule.n_steps_total:
        raise ValueError(f"time {t} is not an integer knot in 0..{schedule.n_steps_total}")
    return int(tf)


def _coeffs(schedule: NoiseSchedule, i: int) -> tuple[float, float]:
    return float(schedule.alpha[i]), float(schedule.sigma[i])


def _parameterized(schedule, x0_hat, eps_hat, u: int) -> np.ndarray:
    a_u, s_u = _coeffs(schedule, u)
    return a_u * x0_hat + s_u * eps_hat


def step_ddim(schedule: NoiseSchedule, model: NoiseModel, z, state: LatentState, u) -> LatentState:
    """First-order DDIM step from ``state`` to knot ``u`` (either direction)."""
    s = _knot(schedule, state.time_index)
    u = _knot(schedule, u)
    if s == u:
        raise ValueError("DDIM step needs distinct source and target knots")
    ev = eval_noise(model, state, z)
    return LatentState(_parameterized(schedule, ev.x0_hat, ev.eps_hat, u), u)


def step_dpmpp2m(
    schedule: NoiseSchedule,
    model: NoiseModel,
    z,
    state: LatentState,
    u,
    prev: ModelEval | None = None,
) -> tuple[LatentState, ModelEval]:
    """Second-order multistep (DPM++ 2M) step in data-prediction form.

    ``prev`` is the evaluation at the previously visited knot.  Without it,
    or when either endpoint has ``sigma == 0``, the step is the DDIM step.
    Returns the new state and the evaluation made at ``state`` so the caller
    can pass it on as the next ``prev``.
    """
    s = _knot(schedule, state.time_index)
    u = _knot(schedule, u)
    if s == u:
        raise ValueError("step needs distinct source and target knots")
    ev = eval_noise(model, state, z)
    a_u, sig_u = _coeffs(schedule, u)
    _, sig_s = _coeffs(schedule, s)
    if prev is None or sig_s == 0.0 or sig_u == 0.0:
        return LatentState(_parameterized(schedule, ev.x0_hat, ev.eps_hat, u), u), ev

    p = _knot(schedule, prev.time_index)
    if not (p < s < u or p > s > u):
        raise ValueError(f"knots {p}, {s}, {u} are not monotone")
    lam = schedule.lambda_
    h = lam[u] - lam[s]
    r = (lam[s] - lam[p]) / h
    D = (1.0 + 0.5 / r) * ev.x0_hat - (0.5 / r) * prev.x0_hat
    x_u = (sig_u / sig_s) * state.x - a_u * math.expm1(-h) * D
    return LatentState(x_u, u), ev


def step_diffae_forward(schedule: NoiseSchedule, model: NoiseModel, z, state: LatentState, u) -> LatentState:
    """DiffAE-style encoder step ``x_u = (sig_u/sig_s)(x_s + a_s (e^h - 1) x0_hat)``.

    Requires an ascending step from a knot with positive sigma.
    """
    s = _knot(schedule, state.time_index)
    u = _knot(schedule, u)
    if u < s:
        raise ValueError("DiffAE forward step must ascend in time")
    a_s, sig_s = _coeffs(schedule, s)
    if sig_s == 0.0:
        raise ValueError("DiffAE forward step is undefined at sigma == 0")
    ev = eval_noise(model, state, z)
    _, sig_u = _coeffs(schedule, u)
    h = schedule.lambda_[u] - schedule.lambda_[s]
    x_u = (sig_u / sig_s) * (state.x + a_s * math.expm1(h) * ev.x0_hat)
    return LatentState(x_u, u)


def delta_discrepancy(schedule: NoiseSchedule, x0_hat_value, s, u) -> np.ndarray:
    """Printed local-difference formula between the DiffAE and DDIM forward steps.

    ``|((sig_u/sig_s) a_s (e^h - 1) - a_u (e^-h - 1)) x0_hat|`` with
    ``h = lambda_u - lambda_s``.
    """
    s = _knot(schedule, s)
    u = _knot(schedule, u)
    if u < s:
        raise ValueError("discrepancy is defined for ascending steps")
    a_s, sig_s = _coeffs(schedule, s)
    if sig_s == 0.0:
        raise ValueError("discrepancy is undefined at sigma == 0")
    a_u, sig_u = _coeffs(schedule, u)
    h = schedule.lambda_[u] - schedule.lambda_[s]
    coef = (sig_u / sig_s) * a_s * math.expm1(h) - a_u * math.expm1(-h)
    return np.abs(coef * np.asarray(x0_hat_value, dtype=float))


# -- reference integrator -------------------------------------------------


def _pf_ode_rhs(schedule, model, z, x, t: float, piece: int) -> np.ndarray:
    f, g2 = schedule.drift_diffusion(t, piece=piece)
    _, sig = schedule.alpha_sigma_at(t)
    eps = model.predict_noise(x, z, t)
    return f * x + (g2 / (2.0 * sig)) * eps


def _rk4_pieces(schedule, model, z, x, t_from: float, t_to: float, n_substeps: int):
    """Classical RK4 with steps aligned to integer knots.

    The interpolated log-SNR has a kink at every integer, so each knot
    segment is integrated separately with a uniform step no longer than
    ``|t_to - t_from| / n_substeps``.
    """
    span = abs(t_to - t_from)
    sign = 1.0 if t_to > t_from else -1.0
    lo, hi = min(t_from, t_to), max(t_from, t_to)
    inner = list(range(math.floor(lo) + 1, math.ceil(hi)))
    cuts = [lo, *inner, hi]
    if sign < 0:
        cuts = cuts[::-1]
    nfe = 0
    for a, b in zip(cuts[:-1], cuts[1:]):
        piece = min(math.floor(min(a, b)), schedule.n_steps_total - 1)
        m = max(1, math.ceil(n_substeps * abs(b - a) / span - 1e-9))
        dt = (b - a) / m
        t = a
        for j in range(m):
            k1 = _pf_ode_rhs(schedule, model, z, x, t, piece)
            k2 = _pf_ode_rhs(schedule, model, z, x + 0.5 * dt * k1, t + 0.5 * dt, piece)
            k3 = _pf_ode_rhs(schedule, model, z, x + 0.5 * dt * k2, t + 0.5 * dt, piece)
            t_next = b if j == m - 1 else a + (j + 1) * dt
            k4 = _pf_ode_rhs(schedule, model, z, x + dt * k3, t_next, piece)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t_next
            nfe += 4
    return x, nfe


def solve_reference(
    schedule: NoiseSchedule,
    model: NoiseModel,
    z,
    x_init: LatentState,
    t_to: float,
    n_substeps: int = 1000,
) -> LatentState:
    """Integrate the probability-flow ODE with fixed-step RK4 in continuous time.

    Uses ``dx/dt = f(t) x + g(t)**2 / (2 sigma_t) * eps(x, z, t)``.  Both
    endpoints must lie in ``[t_floor, N_T]``.
    """
    x, _ = _reference(schedule, model, z, x_init, t_to, n_substeps)
    return x


def _reference(schedule, model, z, x_init, t_to, n_substeps):
    if n_substeps < 100:
        raise ValueError("reference integration needs at least 100 substeps")
    t_from = float(x_init.time_index)
    t_to = float(t_to)
    for t in (t_from, t_to):
        if not schedule.t_floor <= t <= schedule.n_steps_total:
            raise ValueError(f"time {t} outside [{schedule.t_floor}, {schedule.n_steps_total}]")
    if t_from == t_to:
        return LatentState(x_init.x.copy(), t_to), 0
    x, nfe = _rk4_pieces(schedule, model, z, x_init.x.copy(), t_from, t_to, int(n_substeps))
    return LatentState(x, t_to), nfe


# -- traversals -----------------------------------------------------------


def solve(
    schedule: NoiseSchedule,
    model: NoiseModel,
    z,
    x_init: LatentState,
    grid: TimeGrid | Sequence[int],
    kind: SolverKind,
    n_substeps: int = 100,
) -> Trajectory:
    """Run ``kind`` across consecutive knots of ``grid``.

    ``grid`` holds ascending knots (a :class:`TimeGrid` or any increasing
    integer sequence).  Forward kinds start at the first knot, backward kinds
    at the last.  ``ReferenceRK4`` starts at whichever end ``x_init`` sits on
    and integrates each knot interval with ``n_substeps`` RK4 steps; its
    knots must stay at or above ``t_floor``.
    """
    knots = [int(k) for k in (grid.indices if isinstance(grid, TimeGrid) else grid)]
    if len(knots) < 2 or any(b <= a for a, b in zip(knots[:-1], knots[1:])):
        raise ValueError("grid must hold at least two strictly increasing knots")
    t0 = x_init.time_index
    if kind is SolverKind.ReferenceRK4:
        if t0 == knots[-1]:
            knots = knots[::-1]
        elif t0 != knots[0]:
            raise ValueError("initial state is not at either end of the grid")
        states = [x_init]
        nfe = 0
        for u in knots[1:]:
            nxt, used = _reference(schedule, model, z, states[-1], u, n_substeps)
            states.append(nxt)
            nfe += used
        return Trajectory(tuple(states), nfe)

    if kind.is_backward:
        knots = knots[::-1]
    if t0 != knots[0]:
        direction = "backward" if kind.is_backward else "forward"
        raise ValueError(f"{direction} solver {kind.value} must start at knot {knots[0]}, got {t0}")

    states = [x_init]
    prev = None
    for u in knots[1:]:
        cur = states[-1]
        if kind in (SolverKind.BackwardDDIM, SolverKind.ForwardDDIM):
            nxt = step_ddim(schedule, model, z, cur, u)
        elif kind in (SolverKind.BackwardDPMpp2M, SolverKind.ForwardDPMpp2M):
            nxt, prev = step_dpmpp2m(schedule, model, z, cur, u, prev)
        else:
            # the DiffAE form divides by sigma_s: leave the clean endpoint with a DDIM step
            if schedule.sigma[int(cur.time_index)] == 0.0:
                nxt = step_ddim(schedule, model, z, cur, u)
            else:
                nxt = step_diffae_forward(schedule, model, z, cur, u)
        states.append(nxt)
    return Trajectory(tuple(states), len(knots) - 1)
