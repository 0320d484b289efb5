"""Probability-flow ODE solvers and the DiM face-morph pipeline on an analytic model."""

from .metrics import ReconReport, ScoreMatrix, cosine_similarity, map_row, mmpmr, recon_mse, threshold_at_fmr
from .model import GaussianModel, LatentState, ModelEval, NoiseModel, eval_noise, exact_flow_map
from .morph import MorphConfig, MorphResult, dim_morph, noise_inject_morph, reconstruct, slerp
from .schedule import NoiseSchedule, TimeGrid, build_schedule, make_time_grid
from .solvers import (
    SolverKind,
    Trajectory,
    delta_discrepancy,
    solve,
    solve_reference,
    step_ddim,
    step_diffae_forward,
    step_dpmpp2m,
)

__version__ = "0.1.0"
