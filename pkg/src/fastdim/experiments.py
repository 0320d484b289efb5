"""Convergence and roundtrip studies against the Gaussian oracle."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .metrics import recon_mse
from .model import GaussianModel, LatentState, exact_flow_map
from .schedule import NoiseSchedule, make_time_grid
from .solvers import SolverKind, Trajectory, solve

__all__ = [
    "random_unit",
    "sample_terminal",
    "fit_order",
    "global_error",
    "convergence_study",
    "roundtrip_mse",
    "roundtrip_study",
]


def random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def sample_terminal(model: GaussianModel, z, rng: np.random.Generator) -> LatentState:
    """Draw ``x_T`` from the model's marginal at ``N_T``."""
    z = np.asarray(z, dtype=float)
    t = model.schedule.n_steps_total
    a, _ = model.schedule.alpha_sigma_at(t)
    x = a * z + np.sqrt(model.marginal_var(t)) * rng.standard_normal(z.shape)
    return LatentState(x, t)


def fit_order(ns: Sequence[int], errors: Sequence[float]) -> float:
    """Negative least-squares slope of ``log(error)`` against ``log(N)``."""
    slope = np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(errors, float)), 1)[0]
    return float(-slope)


def global_error(schedule, model, z, x_init: LatentState, n: int, kind: SolverKind) -> tuple[float, Trajectory]:
    """Relative error of an ``n``-step traversal against the exact flow map."""
    grid = make_time_grid(schedule, n)
    traj = solve(schedule, model, z, x_init, grid, kind)
    exact = exact_flow_map(model, x_init, z, traj.final.time_index)
    err = np.linalg.norm(traj.final.x - exact.x) / np.linalg.norm(exact.x)
    return float(err), traj


def convergence_study(
    schedule: NoiseSchedule,
    model: GaussianModel,
    z,
    x_T: LatentState,
    x_0: LatentState,
    kinds: Iterable[SolverKind],
    ns: Sequence[int],
    keep_trajectories: bool = False,
):
    """Error, NFE and fitted order per (solver, N).

    Backward kinds start from ``x_T``, forward kinds from ``x_0``.  Returns
    ``(rows, trajectories)``; the latter is empty unless requested.
    """
    rows, trajs = [], {}
    for kind in kinds:
        if kind is SolverKind.ReferenceRK4:
            raise ValueError("the reference integrator is not a grid solver")
        start = x_0 if kind.is_forward else x_T
        errs = []
        for n in ns:
            err, traj = global_error(schedule, model, z, start, n, kind)
            errs.append(err)
            rows.append({"solver": kind.value, "n": int(n), "nfe": traj.nfe, "error": err})
            if keep_trajectories:
                trajs[(kind.value, int(n))] = traj
        order = fit_order(ns, errs) if len(ns) >= 2 else float("nan")
        for row in rows[-len(ns):]:
            row["order"] = order
    return rows, trajs


def roundtrip_mse(
    schedule: NoiseSchedule,
    model: GaussianModel,
    z,
    x0s: np.ndarray,
    forward_kind: SolverKind,
    n_forward: int,
    backward_kind: SolverKind = SolverKind.BackwardDDIM,
    n_backward: int | None = None,
):
    """Encode each row of ``x0s`` then decode it; returns a ReconReport."""
    fgrid = make_time_grid(schedule, n_forward)
    bgrid = make_time_grid(schedule, n_backward or n_forward)
    recons = []
    for x0 in np.atleast_2d(x0s):
        enc = solve(schedule, model, z, LatentState(x0, 0), fgrid, forward_kind).final
        recons.append(solve(schedule, model, z, enc, bgrid, backward_kind).final.x)
    return recon_mse(x0s, np.array(recons))


def roundtrip_study(
    schedule,
    model,
    z,
    x0s,
    forward_kinds: Iterable[SolverKind],
    n_forwards: Sequence[int],
    backward_kind: SolverKind = SolverKind.BackwardDDIM,
    n_backward: int | None = None,
) -> list[dict]:
    """Reconstruction MSE per (forward solver, N_F) with a fixed backward solver.

    ``n_backward=None`` decodes on the encoding grid.
    """
    rows = []
    for kind in forward_kinds:
        for nf in n_forwards:
            nb = n_backward or nf
            rep = roundtrip_mse(schedule, model, z, x0s, kind, nf, backward_kind, nb)
            rows.append(
                {
                    "forward_solver": kind.value,
                    "n_forward": int(nf),
                    "backward_solver": backward_kind.value,
                    "n_backward": int(nb),
                    "nfe": int(nf + nb),
                    "mse": rep.mse,
                }
            )
    return rows
