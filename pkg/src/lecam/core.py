"""Finite experiments, Markov kernels, and likelihood-ratio geometry.

An experiment is a family of probability vectors on a shared finite sample
space, indexed by distinct parameter labels.  Kernels are row-stochastic
matrices acting on experiments by right multiplication.  Likelihood vectors
collect the per-parameter densities with respect to a dominating probability
vector; their law under that vector is the basic object compared across
experiments.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, DominationError, ValidationError

# Validation tolerance for probability vectors supplied or produced directly.
PROB_ATOL = 1e-12
# Tolerance for derived normalizations (likelihood integrals, marginals).
DERIVED_ATOL = 1e-10
# The JSON reader renormalizes rows whose sums are off by at most this much.
READER_ATOL = 1e-9
# Certified optimality gap required of every LP solve.
LP_TOL = 1e-7
# Slack allowed when checking certified coupling bounds.
BOUND_SLACK = 1e-9
# Significant digits used when merging coincident points of a distribution.
MERGE_DIGITS = 12


def check_probability_vector(
    vec, *, atol: float = PROB_ATOL, what: str = "probability vector"
) -> np.ndarray:
    """Validate and return ``vec`` as a 1-d float array summing to one."""
    v = np.asarray(vec, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError(f"{what} must be a nonempty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{what} has non-finite entries")
    if np.any(v < 0.0):
        raise ValidationError(f"{what} has negative entries")
    total = float(v.sum())
    if abs(total - 1.0) > atol:
        raise ValidationError(f"{what} sums to {total!r}, off by more than {atol:g}")
    return v


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _as_labels(labels) -> tuple:
    out = tuple(labels)
    if len(set(out)) != len(out):
        raise ValidationError("labels must be distinct")
    return out


@dataclass(frozen=True, eq=False)
class FiniteExperiment:
    """An indexed family of probability vectors on a common finite space.

    ``probs`` has one row per parameter label, each a probability vector of
    length ``sample_size``.
    """

    params: tuple
    probs: np.ndarray

    def __post_init__(self):
        params = _as_labels(self.params)
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValidationError("probs must be a (n_params, sample_size) matrix")
        if probs.shape[0] != len(params):
            raise ValidationError(
                f"{len(params)} parameter labels but {probs.shape[0]} probability rows"
            )
        if probs.shape[1] < 1:
            raise ValidationError("sample space must contain at least one atom")
        for label, row in zip(params, probs):
            check_probability_vector(row, what=f"row for parameter {label!r}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def sample_size(self) -> int:
        return self.probs.shape[1]

    @property
    def n_params(self) -> int:
        return len(self.params)

    def index_of(self, param) -> int:
        try:
            return self.params.index(param)
        except ValueError:
            raise KeyError(f"unknown parameter {param!r}") from None

    def row(self, param) -> np.ndarray:
        return self.probs[self.index_of(param)]

    def restrict(self, subset) -> "FiniteExperiment":
        """Sub-experiment with rows for ``subset``, in the order given."""
        labels = _as_labels(subset)
        if not labels:
            raise ValidationError("subset must be nonempty")
        idx = [self.index_of(p) for p in labels]
        return FiniteExperiment(labels, self.probs[idx])


@dataclass(frozen=True, eq=False)
class Kernel:
    """A row-stochastic matrix from one finite space to another."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise ValidationError("kernel matrix must be 2-d and nonempty")
        for i, row in enumerate(mat):
            check_probability_vector(row, what=f"kernel row {i}")
        object.__setattr__(self, "matrix", _frozen(mat))

    @property
    def from_size(self) -> int:
        return self.matrix.shape[0]

    @property
    def to_size(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, n: int) -> "Kernel":
        return cls(np.eye(n))

    @classmethod
    def constant(cls, row, from_size: int) -> "Kernel":
        """Kernel sending every input atom to the same distribution."""
        r = check_probability_vector(row, what="constant kernel row")
        return cls(np.tile(r, (from_size, 1)))

    @classmethod
    def from_rows(cls, rows, *, clip: bool = False) -> "Kernel":
        """Build a kernel, optionally clipping tiny negatives and renormalizing.

        ``clip=True`` is meant for rows coming out of an LP vertex solution,
        where entries can undershoot zero by rounding noise.
        """
        mat = np.array(rows, dtype=float)
        if clip:
            mat = np.clip(mat, 0.0, None)
            sums = mat.sum(axis=1, keepdims=True)
            if np.any(sums <= 0.0):
                raise ValidationError("kernel row with no positive mass")
            mat = mat / sums
        return cls(mat)


def _point_key(point: np.ndarray) -> tuple:
    # +0.0 maps -0.0 to +0.0 so equal coordinates share one key.
    return tuple(f"%.{MERGE_DIGITS}g" % (x + 0.0) for x in point)


@dataclass(frozen=True, eq=False)
class PointDistribution:
    """A finitely supported probability distribution on R^k.

    ``points`` is (n_atoms, dim); ``weights`` are strictly positive and sum
    to one.  Use :meth:`from_atoms` to merge coincident points or drop
    zero-weight atoms before construction.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError("points must be a nonempty (n_atoms, dim) array")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("points must be finite")
        w = check_probability_vector(self.weights, what="atom weights")
        if w.shape[0] != pts.shape[0]:
            raise DimensionError("one weight per point required")
        if np.any(w <= 0.0):
            raise ValidationError("atom weights must be strictly positive")
        keys = {_point_key(p) for p in pts}
        if len(keys) != pts.shape[0]:
            raise ValidationError("points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def support_size(self) -> int:
        return self.points.shape[0]

    @classmethod
    def from_atoms(cls, points, weights, *, atol: float = DERIVED_ATOL) -> "PointDistribution":
        """Merge coincident points (12 significant digits), drop zero weights.

        The total weight must be 1 within ``atol``; it is renormalized so the
        result satisfies the strict constructor tolerance.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2:
            raise ValidationError("points must be a (n_atoms, dim) array")
        w = np.asarray(weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise DimensionError("one weight per point required")
        if np.any(w < 0.0):
            raise ValidationError("atom weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > atol:
            raise ValidationError(f"atom weights sum to {total!r}")
        merged: dict[tuple, int] = {}
        out_pts: list[np.ndarray] = []
        out_w: list[float] = []
        for point, weight in zip(pts, w):
            if weight == 0.0:
                continue
            key = _point_key(point)
            if key in merged:
                out_w[merged[key]] += weight
            else:
                merged[key] = len(out_pts)
                out_pts.append(point)
                out_w.append(float(weight))
        if not out_pts:
            raise ValidationError("distribution has no atoms with positive weight")
        arr_w = np.array(out_w, dtype=float)
        return cls(np.array(out_pts, dtype=float), arr_w / arr_w.sum())


def total_variation(p, q) -> float:
    """L1 distance between two probability vectors of equal length.

    Equals the supremum of |p f - q f| over functions bounded by 1 in
    absolute value, so the range is [0, 2].
    """
    pa = np.asarray(p, dtype=float)
    qa = np.asarray(q, dtype=float)
    if pa.ndim != 1 or qa.ndim != 1 or pa.shape != qa.shape:
        raise DimensionError(
            f"total variation needs equal-length vectors, got {pa.shape} and {qa.shape}"
        )
    return float(np.abs(pa - qa).sum())


def push_forward(exp: FiniteExperiment, kernel: Kernel) -> FiniteExperiment:
    """Randomize an experiment through a kernel: row t becomes p_t K."""
    if exp.sample_size != kernel.from_size:
        raise DimensionError(
            f"experiment on {exp.sample_size} atoms cannot feed a kernel from "
            f"{kernel.from_size} atoms"
        )
    return FiniteExperiment(exp.params, exp.probs @ kernel.matrix)


def compose_kernels(k1: Kernel, k2: Kernel) -> Kernel:
    """Two-stage randomization, i.e. the matrix product of the kernels."""
    if k1.to_size != k2.from_size:
        raise DimensionError(
            f"cannot compose kernel into {k1.to_size} atoms with kernel from "
            f"{k2.from_size} atoms"
        )
    return Kernel(k1.matrix @ k2.matrix)


def dominating_mixture(exp: FiniteExperiment, weights=None) -> np.ndarray:
    """Strictly positive mixture of the experiment's rows (default uniform).

    The result dominates every row: where the mixture vanishes, so does
    every p_t.
    """
    if weights is None:
        w = np.full(exp.n_params, 1.0 / exp.n_params)
    else:
        w = check_probability_vector(weights, what="mixture weights")
        if w.shape[0] != exp.n_params:
            raise DimensionError("one mixture weight per parameter required")
        if np.any(w <= 0.0):
            raise ValidationError("mixture weights must be strictly positive")
    return w @ exp.probs


@dataclass(frozen=True, eq=False)
class LikelihoodVectors:
    """Per-parameter densities with respect to a dominating vector.

    ``matrix[t, w]`` is p_t(w) / dominating(w); columns where the dominating
    vector vanishes are zero by convention and excluded from ``support``.
    ``distribution`` is the law of the density vector under the dominating
    vector, with coincident points merged.
    """

    matrix: np.ndarray
    distribution: PointDistribution
    support: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        sup = np.array(self.support, dtype=int)
        sup.setflags(write=False)
        object.__setattr__(self, "support", sup)


def likelihood_vectors(exp: FiniteExperiment, dominating) -> LikelihoodVectors:
    """Densities of each row w.r.t. ``dominating`` plus their induced law.

    Raises :class:`DominationError` if some row has mass on an atom where
    the dominating vector vanishes.  Atoms with zero dominating mass are
    dropped from the induced distribution (densities are only defined up to
    null sets).
    """
    dom = check_probability_vector(dominating, atol=DERIVED_ATOL, what="dominating vector")
    if dom.shape[0] != exp.sample_size:
        raise DimensionError("dominating vector must match the sample space")
    support = dom > 0.0
    if np.any(exp.probs[:, ~support] > 0.0):
        bad = int(np.flatnonzero((exp.probs[:, ~support] > 0.0).any(axis=0))[0])
        atom = int(np.flatnonzero(~support)[bad])
        raise DominationError(
            f"atom {atom} has zero dominating mass but positive row mass"
        )
    matrix = np.zeros_like(exp.probs)
    np.divide(exp.probs, dom[None, :], out=matrix, where=support[None, :])
    norms = matrix @ dom
    if np.any(np.abs(norms - 1.0) > DERIVED_ATOL):
        raise ValidationError("likelihood vectors fail to integrate to one")
    keep = np.flatnonzero(support)
    dist = PointDistribution.from_atoms(matrix.T[keep], dom[keep])
    return LikelihoodVectors(matrix=matrix, distribution=dist, support=keep)


# --- JSON experiment format -------------------------------------------------
#
# { "params": [...], "atoms": n, "probs": [[...], ...] }


def experiment_to_dict(exp: FiniteExperiment) -> dict:
    return {
        "params": list(exp.params),
        "atoms": exp.sample_size,
        "probs": [[float(x) for x in row] for row in exp.probs],
    }


def experiment_from_dict(data: dict) -> FiniteExperiment:
    """Read an experiment, renormalizing rows off by at most 1e-9."""
    if not isinstance(data, dict):
        raise ValidationError("experiment JSON must be an object")
    missing = {"params", "atoms", "probs"} - set(data)
    if missing:
        raise ValidationError(f"experiment JSON missing keys: {sorted(missing)}")
    params = _as_labels(data["params"])
    atoms = data["atoms"]
    probs = np.asarray(data["probs"], dtype=float)
    if probs.ndim != 2 or probs.shape != (len(params), int(atoms)):
        raise ValidationError(
            f"probs must have shape ({len(params)}, {atoms}), got {probs.shape}"
        )
    if not np.all(np.isfinite(probs)):
        raise ValidationError("probabilities must be finite")
    if np.any(probs < 0.0):
        raise ValidationError("probabilities must be nonnegative")
    sums = probs.sum(axis=1)
    off = np.abs(sums - 1.0)
    if np.any(off > READER_ATOL):
        worst = int(np.argmax(off))
        raise ValidationError(
            f"row for parameter {params[worst]!r} sums to {sums[worst]!r}, "
            f"off by more than {READER_ATOL:g}"
        )
    return FiniteExperiment(params, probs / sums[:, None])


def load_experiment(path) -> FiniteExperiment:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return experiment_from_dict(json.load(fh))


def save_experiment(exp: FiniteExperiment, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(experiment_to_dict(exp), fh, indent=2, sort_keys=True)
        fh.write("\n")
