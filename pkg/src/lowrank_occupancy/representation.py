"""Finite feature-candidate sets and estimation over their union classes.

Every union operation fits each candidate independently and takes the best
one, breaking ties by candidate index after rounding scores at 1e-10.  With a
single candidate each operation returns exactly what its known-feature
counterpart returns.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleClass, ShapeMismatch
from .estimators import LinearDensityClass, WeightClass, fit_weight, mle_fit
from .linearize import l1_linearize

TIE_DECIMALS = 10


@dataclass(frozen=True)
class FeatureCandidateSet:
    """``levels[h]`` lists candidate density features for level h, each of shape (X, d)."""

    levels: tuple
    truth_index: int | None = None

    def __post_init__(self):
        levels = []
        for cands in self.levels:
            mats = []
            for c in cands:
                a = np.array(c, dtype=np.float64)
                if a.ndim != 2:
                    raise ShapeMismatch("each candidate must be a (states, d) matrix")
                a.setflags(write=False)
                mats.append(a)
            if not mats:
                raise ShapeMismatch("every level needs at least one candidate")
            levels.append(tuple(mats))
        object.__setattr__(self, "levels", tuple(levels))

    def __getitem__(self, h):
        return self.levels[h]

    def __len__(self):
        return len(self.levels)

    @property
    def max_size(self) -> int:
        return max(len(c) for c in self.levels)

    @classmethod
    def known(cls, mu):
        """Singleton candidate sets holding the given per-level features."""
        return cls(tuple((np.asarray(m),) for m in mu), truth_index=0)

    def b_mu(self) -> float:
        return max(float(np.abs(c).sum()) for cands in self.levels for c in cands)

    def to_json(self) -> dict:
        return {"levels": [{"candidates": [c.tolist() for c in cands]} for cands in self.levels],
                "truth_index": self.truth_index}

    @classmethod
    def from_json(cls, doc) -> "FeatureCandidateSet":
        return cls(tuple(tuple(np.asarray(c) for c in lvl["candidates"]) for lvl in doc["levels"]),
                   doc.get("truth_index"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _first_best(scores, maximize):
    r = np.round(np.asarray(scores, dtype=np.float64), TIE_DECIMALS)
    if maximize:
        r = -r
    return int(np.argmin(r))  # argmin returns the first index among ties


@dataclass(frozen=True)
class UnionMle:
    fit: object  # MleFit of the chosen candidate
    index: int
    fits: tuple  # per-candidate MleFit, or None where infeasible


def union_mle_density(samples, candidates, tol: float = 1e-9, bound: float = 1.0) -> UnionMle:
    fits, witnesses = [], {}
    for i, feat in enumerate(candidates):
        cls = feat if isinstance(feat, LinearDensityClass) else LinearDensityClass(feat, bound)
        try:
            fits.append(mle_fit(samples, cls, tol))
        except InfeasibleClass as e:
            fits.append(None)
            witnesses[i] = e.witness
    if len(witnesses) == len(fits):
        raise InfeasibleClass(witnesses, f"every candidate is infeasible; witnesses by candidate: {witnesses}")
    scores = [f.loglik if f is not None else -np.inf for f in fits]
    k = _first_best(scores, maximize=True)
    return UnionMle(fits[k], k, tuple(fits))


@dataclass(frozen=True)
class UnionWeight:
    fit: object  # WeightFit of the chosen candidate
    index: int
    losses: tuple


def union_fit_weight(block, w_prev, pibar, candidates, cap, restarts=8, seed=0, init_downs=None, tol=1e-10) -> UnionWeight:
    """Per-candidate capped ratio fits; the lowest empirical loss wins (index tie-break)."""
    fits = []
    for i, feat in enumerate(candidates):
        init = None if init_downs is None else init_downs[i]
        fits.append(fit_weight(block, w_prev, pibar, WeightClass(np.asarray(feat), cap), restarts, seed, init, tol))
    losses = tuple(f.loss for f in fits)
    k = _first_best(losses, maximize=False)
    return UnionWeight(fits[k], k, losses)


@dataclass(frozen=True)
class JointSelection:
    index: int
    d_tilde: tuple
    theta: tuple
    residuals: np.ndarray  # (candidates, policies)

    @property
    def max_residual(self) -> float:
        return float(self.residuals[self.index].max())


def joint_feature_select(estimates, candidates) -> JointSelection:
    """Candidate whose worst-case l1 linearization residual over all estimates is smallest."""
    estimates = [np.asarray(e, dtype=np.float64) for e in estimates]
    if not estimates:
        raise ValueError("joint feature selection needs at least one estimate")
    fits = [[l1_linearize(e, feat) for e in estimates] for feat in candidates]
    resid = np.array([[f.residual for f in row] for row in fits])
    k = _first_best(resid.max(axis=1), maximize=False)
    chosen = fits[k]
    return JointSelection(k, tuple(f.d_tilde for f in chosen), tuple(f.theta for f in chosen), resid)
