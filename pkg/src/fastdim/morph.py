"""DiM morph pipeline: encode two inputs, blend latents, decode the blend."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .model import LatentState, NoiseModel
from .schedule import NoiseSchedule, make_time_grid
from .solvers import SolverKind, solve

__all__ = [
    "MorphConfig",
    "MorphResult",
    "slerp",
    "dim_morph",
    "reconstruct",
    "noise_inject_morph",
    "PARALLEL_TOL",
]

# |cos theta| above 1 - PARALLEL_TOL counts as (anti)parallel
PARALLEL_TOL = 1e-7


@dataclass(frozen=True)
class MorphConfig:
    forward_kind: SolverKind = SolverKind.ForwardDDIM
    backward_kind: SolverKind = SolverKind.BackwardDPMpp2M
    n_forward: int = 100
    n_backward: int = 50
    blend: float = 0.5

    def __post_init__(self):
        if not self.forward_kind.is_forward:
            raise ValueError(f"{self.forward_kind.value} is not a forward solver")
        if not self.backward_kind.is_backward:
            raise ValueError(f"{self.backward_kind.value} is not a backward solver")
        if self.n_forward < 1 or self.n_backward < 1:
            raise ValueError("step counts must be positive")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["forward_kind"] = self.forward_kind.value
        d["backward_kind"] = self.backward_kind.value
        return d


@dataclass(frozen=True)
class MorphResult:
    """Output of a morph run.

    ``nfe_forward`` counts the encoding once, as if both inputs were batched
    together.  For noise-injection morphs there is no encoding: ``x_T_a`` and
    ``x_T_b`` are ``None`` and ``x_T_ab`` holds the noised starting state.
    """

    morphed: LatentState
    x_T_a: LatentState | None
    x_T_b: LatentState | None
    x_T_ab: LatentState
    z_ab: np.ndarray
    nfe_forward: int
    nfe_backward: int

    @property
    def nfe_total(self) -> int:
        return self.nfe_forward + self.nfe_backward


def slerp(u, v, gamma: float) -> np.ndarray:
    """Spherical interpolation from ``u`` (gamma=0) to ``v`` (gamma=1).

    Nearly parallel inputs fall back to linear interpolation; nearly
    antiparallel inputs have no unique great circle and raise ``ValueError``.
    The weights are evaluated as ``(1 - gamma, gamma)``, so
    ``slerp(u, v, g) == slerp(v, u, 1 - g)`` bitwise whenever ``1 - (1 - g)``
    rounds back to ``g`` (any ``g >= 0.5``, or a dyadic fraction).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("slerp inputs must have the same shape")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("slerp of a zero vector is undefined")
    cos = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
    wu, wv = 1.0 - gamma, gamma
    if cos < -(1.0 - PARALLEL_TOL):
        raise ValueError("slerp of antiparallel vectors is undefined")
    if cos > 1.0 - PARALLEL_TOL:
        return wu * u + wv * v
    theta = np.arccos(cos)
    sin_theta = np.sin(theta)
    return (np.sin(wu * theta) / sin_theta) * u + (np.sin(wv * theta) / sin_theta) * v


def _encode(schedule, model, x0, z, config) -> LatentState:
    grid = make_time_grid(schedule, config.n_forward)
    return solve(schedule, model, z, LatentState(x0, 0), grid, config.forward_kind).final


def _decode(schedule, model, x_T: LatentState, z, config) -> LatentState:
    grid = make_time_grid(schedule, config.n_backward)
    return solve(schedule, model, z, x_T, grid, config.backward_kind).final


def reconstruct(model: NoiseModel, schedule: NoiseSchedule, x0, z, config: MorphConfig) -> LatentState:
    """Encode ``x0`` and decode it again under the same conditioning."""
    x_T = _encode(schedule, model, x0, z, config)
    return _decode(schedule, model, x_T, z, config)


def dim_morph(
    model: NoiseModel,
    schedule: NoiseSchedule,
    x0_a,
    z_a,
    x0_b,
    z_b,
    config: MorphConfig = MorphConfig(),
) -> MorphResult:
    """Morph two inputs: slerp their encodings, average their conditionings, decode."""
    x0_a = np.asarray(x0_a, dtype=float)
    x0_b = np.asarray(x0_b, dtype=float)
    z_a = np.asarray(z_a, dtype=float)
    z_b = np.asarray(z_b, dtype=float)
    if x0_a.shape != x0_b.shape or z_a.shape != z_b.shape:
        raise ValueError("morph inputs must have matching dimensions")

    x_T_a = _encode(schedule, model, x0_a, z_a, config)
    x_T_b = _encode(schedule, model, x0_b, z_b, config)
    g = config.blend
    x_T_ab = LatentState(slerp(x_T_a.x, x_T_b.x, g), schedule.n_steps_total)
    z_ab = (1.0 - g) * z_a + g * z_b
    morphed = _decode(schedule, model, x_T_ab, z_ab, config)
    return MorphResult(
        morphed=morphed,
        x_T_a=x_T_a,
        x_T_b=x_T_b,
        x_T_ab=x_T_ab,
        z_ab=z_ab,
        nfe_forward=config.n_forward,
        nfe_backward=config.n_backward,
    )


def noise_inject_morph(
    model: NoiseModel,
    schedule: NoiseSchedule,
    x0_a,
    x0_b,
    z_ab,
    noise_level: float,
    rng_seed: int,
    config: MorphConfig = MorphConfig(),
) -> MorphResult:
    """Noise the pixel-wise average up to ``noise_level * N_T`` and denoise it.

    The start time is ``round(noise_level * N_T)`` snapped to the nearest knot
    of the backward grid (ties go to the later knot); the backward solver
    then runs over the grid knots at or below it.  Noise comes from a Philox
    generator seeded with ``rng_seed``.
    """
    if not 0.0 < noise_level <= 1.0:
        raise ValueError("noise_level must lie in (0, 1]")
    x0_a = np.asarray(x0_a, dtype=float)
    x0_b = np.asarray(x0_b, dtype=float)
    if x0_a.shape != x0_b.shape:
        raise ValueError("morph inputs must have matching dimensions")
    z_ab = np.asarray(z_ab, dtype=float)
    avg = (x0_a + x0_b) / 2.0

    knots = make_time_grid(schedule, config.n_backward).indices
    t_raw = int(np.floor(noise_level * schedule.n_steps_total + 0.5))
    dist = np.abs(knots - t_raw)
    t = int(knots[np.flatnonzero(dist == dist.min())[-1]])

    rng = np.random.Generator(np.random.Philox(rng_seed))
    eps = rng.standard_normal(avg.shape)
    if t == 0:
        start = LatentState(avg, 0)
        return MorphResult(start, None, None, start, z_ab, 0, 0)

    a_t, s_t = float(schedule.alpha[t]), float(schedule.sigma[t])
    start = LatentState(a_t * avg + s_t * eps, t)
    sub = knots[knots <= t]
    traj = solve(schedule, model, z_ab, start, sub, config.backward_kind)
    return MorphResult(traj.final, None, None, start, z_ab, 0, traj.nfe)
