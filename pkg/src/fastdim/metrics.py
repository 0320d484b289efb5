"""Morph-vulnerability metrics computed from supplied similarity scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ScoreMatrix",
    "ReconReport",
    "mmpmr",
    "acceptance_matrix",
    "map_row",
    "recon_mse",
    "cosine_similarity",
    "threshold_at_fmr",
]


@dataclass(frozen=True)
class ScoreMatrix:
    """Similarity scores per morph, subject and verifier.

    ``scores[m]`` is an array of shape ``(N_m, V)``: one row per contributing
    subject of morph ``m``.  ``thresholds[v]`` is the decision threshold of
    verifier ``v``.  Morph and verifier identifiers are kept for reporting.
    """

    scores: tuple[np.ndarray, ...]
    thresholds: np.ndarray
    morph_ids: tuple[str, ...] = ()
    verifier_ids: tuple[str, ...] = ()

    def __post_init__(self):
        scores = tuple(np.asarray(s, dtype=float) for s in self.scores)
        thr = np.asarray(self.thresholds, dtype=float)
        if not scores:
            raise ValueError("score matrix has no morphs")
        if thr.ndim != 1:
            raise ValueError("thresholds must be a 1-D array")
        n_ver = thr.shape[0]
        for m, s in enumerate(scores):
            if s.ndim != 2 or s.shape[1] != n_ver:
                raise ValueError(f"morph {m}: expected shape (N_m, {n_ver}), got {s.shape}")
            if s.shape[0] < 2:
                raise ValueError(f"morph {m} has fewer than two contributing subjects")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"morph {m} has non-finite scores")
        morph_ids = self.morph_ids or tuple(str(i) for i in range(len(scores)))
        verifier_ids = self.verifier_ids or tuple(str(i) for i in range(n_ver))
        if len(morph_ids) != len(scores) or len(verifier_ids) != n_ver:
            raise ValueError("identifier lists do not match the score shapes")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "morph_ids", tuple(morph_ids))
        object.__setattr__(self, "verifier_ids", tuple(verifier_ids))

    @property
    def n_morphs(self) -> int:
        return len(self.scores)

    @property
    def n_verifiers(self) -> int:
        return self.thresholds.shape[0]

    @classmethod
    def from_records(
        cls,
        records: Iterable[tuple[str, str, str, float]],
        thresholds: Mapping[str, float],
    ) -> "ScoreMatrix":
        """Build from ``(morph_id, subject_id, verifier_id, score)`` rows.

        Every (morph, subject) pair must have a score for every verifier that
        has a threshold.  Identifiers are ordered by first appearance.
        """
        verifiers = list(thresholds)
        table: dict[str, dict[str, dict[str, float]]] = {}
        for morph_id, subject_id, verifier_id, score in records:
            if verifier_id not in thresholds:
                raise ValueError(f"no threshold for verifier {verifier_id!r}")
            subj = table.setdefault(morph_id, {}).setdefault(subject_id, {})
            if verifier_id in subj:
                raise ValueError(
                    f"duplicate score for morph {morph_id!r}, subject {subject_id!r}, "
                    f"verifier {verifier_id!r}"
                )
            subj[verifier_id] = float(score)
        arrays = []
        for morph_id, subjects in table.items():
            rows = []
            for subject_id, per_v in subjects.items():
                missing = [v for v in verifiers if v not in per_v]
                if missing:
                    raise ValueError(
                        f"morph {morph_id!r}, subject {subject_id!r} lacks scores for {missing}"
                    )
                rows.append([per_v[v] for v in verifiers])
            arrays.append(np.array(rows))
        return cls(
            scores=tuple(arrays),
            thresholds=np.array([thresholds[v] for v in verifiers], dtype=float),
            morph_ids=tuple(table),
            verifier_ids=tuple(verifiers),
        )


def acceptance_matrix(scores: ScoreMatrix) -> np.ndarray:
    """Boolean ``(M, V)``: verifier ``v`` matches every subject of morph ``m``.

    A match needs the score to exceed the threshold strictly; ties reject.
    """
    mins = np.stack([s.min(axis=0) for s in scores.scores])
    return mins > scores.thresholds[None, :]


def mmpmr(scores: ScoreMatrix, verifier: int = 0) -> float:
    """Fraction of morphs whose worst subject score beats the verifier threshold."""
    if not 0 <= verifier < scores.n_verifiers:
        raise IndexError(f"verifier index {verifier} out of range")
    return float(acceptance_matrix(scores)[:, verifier].mean())


def map_row(scores: ScoreMatrix) -> np.ndarray:
    """``MAP[1, c]`` for ``c = 1..V`` (entry ``c - 1`` of the returned array).

    Entry ``c`` is the fraction of morphs accepted for all their subjects by
    at least ``c`` verifiers.
    """
    counts = acceptance_matrix(scores).sum(axis=1)
    return np.array([(counts >= c).mean() for c in range(1, scores.n_verifiers + 1)])


@dataclass(frozen=True)
class ReconReport:
    mse: float
    per_sample: np.ndarray


def recon_mse(originals, reconstructions) -> ReconReport:
    """Mean squared error per sample and averaged over samples."""
    a = np.atleast_2d(np.asarray(originals, dtype=float))
    b = np.atleast_2d(np.asarray(reconstructions, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("no samples")
    per = ((a - b) ** 2).mean(axis=1)
    return ReconReport(mse=float(per.mean()), per_sample=per)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def threshold_at_fmr(impostor_scores: Sequence[float], fmr: float) -> float:
    """Threshold whose strict-``>`` false match rate does not exceed ``fmr``.

    Uses the empirical ``1 - fmr`` quantile, taking the higher sample at ties.
    """
    s = np.asarray(impostor_scores, dtype=float)
    if s.size == 0:
        raise ValueError("need at least one impostor score")
    if not 0.0 <= fmr <= 1.0:
        raise ValueError("fmr must lie in [0, 1]")
    return float(np.quantile(s, 1.0 - fmr, method="higher"))
