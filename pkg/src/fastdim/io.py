"""File formats: schedule audit, trajectories, reports, score matrices."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import ScoreMatrix
from .schedule import NoiseSchedule
from .solvers import Trajectory

SCHEDULE_HEADER = ["i", "beta", "alpha", "sigma", "lambda"]
SCORE_HEADER = ["morph_id", "subject_id", "verifier_id", "score"]
THRESHOLD_HEADER = ["verifier_id", "delta"]


class FormatError(ValueError):
    """Malformed input file; the message carries the file and line number."""


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temp file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def records_text(rows: list[dict], fmt: str) -> str:
    """Render a list of flat dicts as CSV (column order from the first row) or JSON."""
    if fmt == "json":
        return json_text(rows)
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    header = list(rows[0]) if rows else []
    return csv_text(header, ([r[k] for k in header] for r in rows))


def schedule_rows(schedule: NoiseSchedule):
    for i in range(1, schedule.n_steps_total + 1):
        yield [i, schedule.beta[i], schedule.alpha[i], schedule.sigma[i], schedule.lambda_[i]]


def schedule_csv(schedule: NoiseSchedule) -> str:
    return csv_text(SCHEDULE_HEADER, schedule_rows(schedule))


def trajectory_csv(traj: Trajectory) -> str:
    d = traj.states[0].dim
    header = ["knot", "time_index", *(f"x{j}" for j in range(d))]
    return csv_text(header, traj.to_rows())


def _read_rows(path, header: Sequence[str]):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if [c.strip() for c in first] != list(header):
            raise FormatError(f"{path}:1: expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, [c.strip() for c in row]


def _float(path, line, text) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"{path}:{line}: not a number: {text!r}") from None
    if not np.isfinite(v):
        raise FormatError(f"{path}:{line}: non-finite value {text!r}")
    return v


def read_thresholds(path) -> dict[str, float]:
    out: dict[str, float] = {}
    for line, (vid, delta) in _read_rows(path, THRESHOLD_HEADER):
        if vid in out:
            raise FormatError(f"{path}:{line}: duplicate verifier {vid!r}")
        out[vid] = _float(path, line, delta)
    if not out:
        raise FormatError(f"{path}: no thresholds")
    return out


def read_score_matrix(scores_path, thresholds_path) -> ScoreMatrix:
    thresholds = read_thresholds(thresholds_path)
    records = []
    for line, (mid, sid, vid, score) in _read_rows(scores_path, SCORE_HEADER):
        if vid not in thresholds:
            raise FormatError(f"{scores_path}:{line}: verifier {vid!r} has no threshold")
        records.append((mid, sid, vid, _float(scores_path, line, score)))
    if not records:
        raise FormatError(f"{scores_path}: no scores (empty morph set)")
    try:
        return ScoreMatrix.from_records(records, thresholds)
    except ValueError as exc:
        raise FormatError(f"{scores_path}: {exc}") from None


def parse_vector(value, base_dir: Path | None = None) -> np.ndarray:
    """Inline list, ``;``/space separated string, or a ``.npy``/text file path."""
    if isinstance(value, (list, tuple)):
        return np.asarray(value, dtype=float)
    text = str(value).strip()
    candidate = Path(text)
    if base_dir is not None and not candidate.is_absolute():
        candidate = base_dir / candidate
    if text.endswith(".npy"):
        return np.load(candidate).astype(float).ravel()
    if text.endswith((".txt", ".csv")):
        return np.loadtxt(candidate, delimiter=None if text.endswith(".txt") else ",").ravel()
    parts = text.replace(";", " ").split()
    return np.array([float(p) for p in parts])


MANIFEST_FIELDS = ("id", "x_a", "z_a", "x_b", "z_b")


def read_manifest(path) -> list[dict]:
    """Morph pairs from a JSON list of objects or a CSV with id,x_a,z_a,x_b,z_b."""
    path = Path(path)
    base = path.parent
    pairs = []
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            items = json.load(fh)
        if not isinstance(items, list):
            raise FormatError(f"{path}: manifest must be a JSON list")
        for k, item in enumerate(items):
            missing = [f for f in MANIFEST_FIELDS if f not in item]
            if missing:
                raise FormatError(f"{path}: entry {k} lacks {missing}")
            pairs.append(
                {"id": str(item["id"]), **{f: parse_vector(item[f], base) for f in MANIFEST_FIELDS[1:]}}
            )
    else:
        for line, row in _read_rows(path, MANIFEST_FIELDS):
            try:
                pairs.append({"id": row[0], **{f: parse_vector(v, base) for f, v in zip(MANIFEST_FIELDS[1:], row[1:])}})
            except (ValueError, OSError) as exc:
                raise FormatError(f"{path}:{line}: {exc}") from None
    if not pairs:
        raise FormatError(f"{path}: no morph pairs")
    ids = [p["id"] for p in pairs]
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: duplicate pair ids")
    return pairs


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out
