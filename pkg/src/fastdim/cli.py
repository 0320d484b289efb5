"""Command-line driver for schedule audits, solver studies, morphs and metrics.

Values resolve as: command-line flag, then ``--config`` file entry, then the
built-in default.  Failures exit with status 1 and a JSON error object on
stderr; outputs are only written once everything has been computed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .experiments import convergence_study, random_unit, roundtrip_study, sample_terminal
from .metrics import map_row, mmpmr
from .model import GaussianModel, LatentState
from .morph import MorphConfig, dim_morph, noise_inject_morph
from .schedule import build_schedule
from .solvers import SolverKind

DEFAULTS = {
    "n_total": "1000",
    "beta_min": "0.0001",
    "beta_max": "0.02",
    "dim": None,
    "spread": "0.5",
    "seed": "0",
    "format": "csv",
    "samples": "16",
    "blend": "0.5",
    "noise_level": None,
}

COMMAND_DEFAULTS = {
    "converge": {"solver": "ddim,dpmpp2m", "n_steps": "10,20,40,80", "dim": "16"},
    "roundtrip": {
        "forward_solver": "ddim-forward,diffae-forward,dpmpp2m-forward",
        "n_forward": "20,50,100,250",
        "solver": "ddim",
        "n_steps": None,
        "dim": "16",
    },
    "morph": {
        "forward_solver": "ddim-forward",
        "solver": "dpmpp2m",
        "n_forward": "100",
        "n_steps": "50",
    },
}


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output file (directory for morph)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--seed", type=int)
    p.add_argument("--n-total", type=int, dest="n_total", help="training discretization N_T")
    p.add_argument("--beta-min", type=float, dest="beta_min")
    p.add_argument("--beta-max", type=float, dest="beta_max")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int)
    p.add_argument("--spread", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fastdim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("schedule", help="audit the noise schedule")
    p.add_argument("action", choices=["dump"])
    _common(p)

    p = sub.add_parser("converge", help="solver error and fitted order against the oracle")
    _common(p)
    _model_flags(p)
    p.add_argument("--solver", help="comma-separated solver kinds")
    p.add_argument("--n-steps", dest="n_steps", help="comma-separated step counts (>= 3)")
    p.add_argument("--trajectory-dir", dest="trajectory_dir")

    p = sub.add_parser("roundtrip", help="encode/decode reconstruction error")
    _common(p)
    _model_flags(p)
    p.add_argument("--forward-solver", dest="forward_solver")
    p.add_argument("--n-forward", dest="n_forward", help="comma-separated N_F values")
    p.add_argument("--solver", help="backward solver kind")
    p.add_argument("--n-steps", dest="n_steps", help="backward steps (default: N_F)")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("morph", help="run the morph pipeline over a pair manifest")
    _common(p)
    _model_flags(p)
    p.add_argument("--manifest", required=False)
    p.add_argument("--forward-solver", dest="forward_solver")
    p.add_argument("--solver")
    p.add_argument("--n-forward", dest="n_forward", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--blend", type=float)
    p.add_argument("--noise-level", dest="noise_level", type=float)

    p = sub.add_parser("metrics", help="MMPMR and MAP from a score matrix")
    _common(p)
    p.add_argument("--scores")
    p.add_argument("--thresholds")
    return parser


class Settings:
    """Resolved view over flags, config file and defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = fio.read_config_file(args.config) if args.config else {}
        self.defaults = {**DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {})}

    def raw(self, key):
        v = getattr(self.args, key, None)
        if v is not None:
            return v
        if key in self.file:
            return self.file[key]
        return self.defaults.get(key)

    def get(self, key, conv=str, required=False):
        v = self.raw(key)
        if v is None:
            if required:
                raise CLIError(f"missing required setting {key.replace('_', '-')!r}")
            return None
        try:
            return conv(v)
        except ValueError as exc:
            raise CLIError(f"bad value for {key!r}: {v!r} ({exc})") from None

    def int_list(self, key):
        v = self.get(key, required=True)
        items = [int(x) for x in str(v).split(",") if x.strip()] if isinstance(v, str) else [int(v)]
        if not items:
            raise CLIError(f"{key} list is empty")
        return items

    def kinds(self, key):
        return [SolverKind.parse(s.strip()) for s in str(self.get(key, required=True)).split(",") if s.strip()]


def _schedule(st: Settings):
    return build_schedule(st.get("n_total", int), st.get("beta_min", float), st.get("beta_max", float))


def cmd_schedule(st: Settings) -> dict[Path, str]:
    sched = _schedule(st)
    out = Path(st.get("out", required=True))
    if st.get("format") == "json":
        rows = [dict(zip(fio.SCHEDULE_HEADER, r)) for r in fio.schedule_rows(sched)]
        return {out: fio.json_text(rows)}
    return {out: fio.schedule_csv(sched)}


def cmd_converge(st: Settings) -> dict[Path, str]:
    sched = _schedule(st)
    ns = st.int_list("n_steps")
    if len(ns) < 3:
        raise CLIError("converge needs at least three step counts")
    kinds = st.kinds("solver")
    d = st.get("dim", int)
    model = GaussianModel(sched, st.get("spread", float))
    rng = np.random.Generator(np.random.Philox(st.get("seed", int)))
    z = random_unit(rng, d)
    x_T = sample_terminal(model, z, rng)
    x_0 = LatentState(z + model.spread * rng.standard_normal(d), 0)
    tdir = st.get("trajectory_dir")
    rows, trajs = convergence_study(sched, model, z, x_T, x_0, kinds, ns, keep_trajectories=bool(tdir))
    outputs = {Path(st.get("out", required=True)): fio.records_text(rows, st.get("format"))}
    for (name, n), traj in trajs.items():
        outputs[Path(tdir) / f"{name}_n{n}.csv"] = fio.trajectory_csv(traj)
    return outputs


def cmd_roundtrip(st: Settings) -> dict[Path, str]:
    sched = _schedule(st)
    fkinds = st.kinds("forward_solver")
    bkind = SolverKind.parse(st.get("solver", required=True))
    if not bkind.is_backward:
        raise CLIError(f"{bkind.value} is not a backward solver")
    for k in fkinds:
        if not k.is_forward:
            raise CLIError(f"{k.value} is not a forward solver")
    d = st.get("dim", int)
    model = GaussianModel(sched, st.get("spread", float))
    rng = np.random.Generator(np.random.Philox(st.get("seed", int)))
    z = random_unit(rng, d)
    x0s = z + model.spread * rng.standard_normal((st.get("samples", int), d))
    rows = roundtrip_study(sched, model, z, x0s, fkinds, st.int_list("n_forward"), bkind, st.get("n_steps", int))
    return {Path(st.get("out", required=True)): fio.records_text(rows, st.get("format"))}


def cmd_morph(st: Settings) -> dict[Path, str]:
    sched = _schedule(st)
    pairs = fio.read_manifest(st.get("manifest", required=True))
    try:
        config = MorphConfig(
            forward_kind=SolverKind.parse(st.get("forward_solver")),
            backward_kind=SolverKind.parse(st.get("solver")),
            n_forward=st.get("n_forward", int),
            n_backward=st.get("n_steps", int),
            blend=st.get("blend", float),
        )
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    model = GaussianModel(sched, st.get("spread", float), dim=st.get("dim", int))
    noise_level = st.get("noise_level", float)
    seed = st.get("seed", int)
    out_dir = Path(st.get("out", required=True))
    echo = {**config.to_dict(), "spread": model.spread, "dim": model.dim, "noise_level": noise_level, "seed": seed}

    outputs, summary = {}, []
    for pair in pairs:
        g = config.blend
        if noise_level is None:
            res = dim_morph(model, sched, pair["x_a"], pair["z_a"], pair["x_b"], pair["z_b"], config)
        else:
            z_ab = (1.0 - g) * pair["z_a"] + g * pair["z_b"]
            res = noise_inject_morph(model, sched, pair["x_a"], pair["x_b"], z_ab, noise_level, seed, config)
        record = {
            "id": pair["id"],
            "config": echo,
            "morphed": res.morphed.x,
            "z_ab": res.z_ab,
            "nfe_forward": res.nfe_forward,
            "nfe_backward": res.nfe_backward,
            "nfe_total": res.nfe_total,
        }
        outputs[out_dir / f"{pair['id']}.json"] = fio.json_text(record)
        summary.append(
            {"id": pair["id"], "nfe_forward": res.nfe_forward, "nfe_backward": res.nfe_backward, "nfe_total": res.nfe_total}
        )
    fmt = st.get("format")
    outputs[out_dir / f"summary.{fmt}"] = fio.records_text(summary, fmt)
    return outputs


def cmd_metrics(st: Settings) -> dict[Path, str]:
    sm = fio.read_score_matrix(st.get("scores", required=True), st.get("thresholds", required=True))
    rows = [
        {"metric": "mmpmr", "key": vid, "value": mmpmr(sm, v), "percent": round(100 * mmpmr(sm, v), 2)}
        for v, vid in enumerate(sm.verifier_ids)
    ]
    rows += [
        {"metric": "map", "key": str(c), "value": float(val), "percent": round(100 * float(val), 2)}
        for c, val in enumerate(map_row(sm), start=1)
    ]
    fmt = st.get("format")
    if fmt == "json":
        text = fio.json_text(
            {
                "n_morphs": sm.n_morphs,
                "mmpmr": {r["key"]: r["value"] for r in rows if r["metric"] == "mmpmr"},
                "map": [r["value"] for r in rows if r["metric"] == "map"],
            }
        )
    else:
        text = fio.records_text(rows, "csv")
    return {Path(st.get("out", required=True)): text}


COMMANDS = {
    "schedule": cmd_schedule,
    "converge": cmd_converge,
    "roundtrip": cmd_roundtrip,
    "morph": cmd_morph,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        st = Settings(args)
        outputs = COMMANDS[args.command](st)
        for path, text in outputs.items():
            fio.atomic_write(path, text)
    except (CLIError, ValueError, OSError, KeyError, IndexError) as exc:
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
