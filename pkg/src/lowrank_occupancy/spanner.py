"""Barycentric spanners of finite vector sets and concentrability coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SpannerError

EXHAUSTIVE_LIMIT = 20


@dataclass(frozen=True)
class SpannerResult:
    indices: tuple
    coefficient_bound: float
    coefficients: np.ndarray  # (n, len(indices)); row j expands vector j over the selection
    volume: float  # det(B B^T) of the selected rows
    swaps: int = 0

    @property
    def max_coefficient(self) -> float:
        return float(np.abs(self.coefficients).max()) if self.coefficients.size else 0.0

    @property
    def parallelotope_volume(self) -> float:
        """sqrt(det(B B^T)), the volume spanned by the selected rows."""
        return math.sqrt(max(self.volume, 0.0))


def _as_matrix(vectors):
    V = np.array([np.asarray(v, dtype=np.float64).ravel() for v in vectors])
    if V.ndim != 2 or V.shape[0] == 0:
        raise SpannerError("spanner input must be a nonempty list of equal-length vectors")
    return V


def effective_rank(V, rank_tol=1e-9) -> int:
    sv = np.linalg.svd(V, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int((sv > rank_tol * sv[0]).sum())


def expansion_coefficients(V, indices):
    """Least-squares coefficients of every row of V over the rows ``indices``."""
    if len(indices) == 0:
        return np.zeros((V.shape[0], 0))
    B = V[list(indices)]
    return np.linalg.lstsq(B.T, V.T, rcond=None)[0].T


def _volume(V, indices):
    if len(indices) == 0:
        return 1.0
    B = V[list(indices)]
    return float(np.linalg.det(B @ B.T))


def exact_spanner(vectors, rank_tol: float = 1e-9) -> SpannerResult:
    """Volume-maximizing subset of size min(n, rank) by exhaustive search; coefficients are at most 1."""
    V = _as_matrix(vectors)
    n = V.shape[0]
    if n > EXHAUSTIVE_LIMIT:
        raise SpannerError(f"{n} vectors exceeds the exhaustive-search limit {EXHAUSTIVE_LIMIT}; use approx_spanner")
    k = min(n, effective_rank(V, rank_tol))
    combos = kernels.all_subsets(n, k)
    if k == 0:
        chosen = ()
    else:
        vols = kernels.minor_volumes(V @ V.T, combos)
        best = vols.max()
        # first subset in lexicographic order within relative 1e-9 of the best volume
        chosen = tuple(int(i) for i in combos[int(np.argmax(vols >= best * (1 - 1e-9)))])
    return SpannerResult(chosen, 1.0, expansion_coefficients(V, chosen), _volume(V, chosen))


def _initial_basis(V, rank_tol):
    """Greedy: keep each vector that is independent of those already kept."""
    scale = np.linalg.norm(V, axis=1).max()
    chosen, Q = [], np.zeros((0, V.shape[1]))
    for j, v in enumerate(V):
        r = v - Q.T @ (Q @ v)
        nr = np.linalg.norm(r)
        if nr > rank_tol * max(scale, 1e-300) * 10:
            chosen.append(j)
            Q = np.vstack([Q, r / nr])
    return chosen


def approx_spanner(vectors, C: float = 2.0, rank_tol: float = 1e-9) -> SpannerResult:
    """C-approximate spanner by volume-increasing swaps.

    Starting from the first linearly independent vectors, repeatedly take the
    vector with the largest coefficient above C and swap it into the slot of
    that coefficient, which multiplies |det| by more than C.
    """
    if not C > 1:
        raise ValueError("C must exceed 1")
    V = _as_matrix(vectors)
    chosen = _initial_basis(V, rank_tol)
    r = len(chosen)
    guard = math.ceil(10 * r * r * max(1.0, math.log(max(r, 1)) / math.log(C)))
    swaps = 0
    while True:
        coef = expansion_coefficients(V, chosen)
        if coef.size == 0:
            break
        mag = np.abs(coef)
        j, i = np.unravel_index(int(np.argmax(mag)), mag.shape)
        if mag[j, i] <= C:
            break
        if swaps >= guard:
            raise SpannerError(f"approximate spanner did not settle after {guard} swaps; check the numerical rank")
        chosen[i] = int(j)
        swaps += 1
    return SpannerResult(tuple(chosen), float(C), coef, _volume(V, chosen), swaps)


def concentrability_coefficient(occupancies, reference) -> float:
    """max over the set and states of d(x) / reference(x), with 0/0 = 0 and inf on support violations."""
    ref = np.asarray(reference, dtype=np.float64)
    if (ref < 0).any():
        raise ValueError("reference must be nonnegative")
    worst = 0.0
    for d in occupancies:
        d = np.asarray(d, dtype=np.float64)
        pos = ref > 0
        if (d[~pos] > 0).any():
            return math.inf
        if pos.any():
            worst = max(worst, float((d[pos] / ref[pos]).max()))
    return worst
