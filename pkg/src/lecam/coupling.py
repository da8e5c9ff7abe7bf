"""Explicit randomization kernels from matched partitions of likelihood space.

Given a source side Q (a finitely supported law of density vectors, with its
per-parameter components) and a target side P (an experiment with its
dominating vector and per-atom density vectors), the construction partitions
R^k into small cells plus a remainder, matches cell masses, and assembles a
kernel K from Q-atoms to the target sample space with marginal identity
Q K = P.  Whenever every cell satisfies the mass-domination condition

    P-mass(cell) >= (1 - epsilon) * Q-mass(cell),

the kernel reproduces every component within total variation
2 * delta + 4 * epsilon, where delta bounds the cell diameters and epsilon
bounds both the remainder mass of each component and the mass-domination
slack.  The certificate recomputes both sides of that inequality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core import (
    BOUND_SLACK,
    DERIVED_ATOL,
    FiniteExperiment,
    Kernel,
    PointDistribution,
    _point_key,
    check_probability_vector,
    likelihood_vectors,
    total_variation,
)
from .errors import (
    CertificationError,
    ConditionError,
    DimensionError,
    ValidationError,
)

#: Key of the remainder cell (points covered by no generating ball).
REMAINDER_KEY: tuple = ()


@dataclass(frozen=True, eq=False)
class LabeledSpace:
    """An experiment together with its dominating vector and density map.

    ``lr_map[w]`` is the vector of densities (one coordinate per parameter)
    of the experiment's rows with respect to ``dominating`` at atom ``w``.
    Atoms with zero dominating mass carry zero density vectors.
    """

    base: FiniteExperiment
    dominating: np.ndarray
    lr_map: np.ndarray

    def __post_init__(self):
        dom = check_probability_vector(
            self.dominating, atol=DERIVED_ATOL, what="dominating vector"
        )
        if dom.shape[0] != self.base.sample_size:
            raise DimensionError("dominating vector must match the sample space")
        lr = np.array(self.lr_map, dtype=float)
        if lr.shape != (self.base.sample_size, self.base.n_params):
            raise DimensionError(
                f"lr_map must have shape ({self.base.sample_size}, {self.base.n_params})"
            )
        reconstructed = dom[:, None] * lr
        if np.max(np.abs(reconstructed.T - self.base.probs)) > DERIVED_ATOL:
            raise ValidationError("lr_map is inconsistent with the experiment rows")
        dom = dom.copy()
        dom.setflags(write=False)
        lr.setflags(write=False)
        object.__setattr__(self, "dominating", dom)
        object.__setattr__(self, "lr_map", lr)

    @classmethod
    def from_experiment(cls, exp: FiniteExperiment, dominating=None, weights=None) -> "LabeledSpace":
        """Build a space from an experiment and a dominating vector.

        If ``dominating`` is omitted it is the ``weights`` mixture of the
        rows (uniform by default).
        """
        if dominating is None:
            if weights is None:
                w = np.full(exp.n_params, 1.0 / exp.n_params)
            else:
                w = check_probability_vector(weights, what="mixture weights")
                if w.shape[0] != exp.n_params:
                    raise DimensionError("one mixture weight per parameter required")
            dominating = w @ exp.probs
        lv = likelihood_vectors(exp, dominating)
        return cls(base=exp, dominating=np.asarray(dominating, dtype=float), lr_map=lv.matrix.T)

    def law(self) -> PointDistribution:
        """Law of the density vector under the dominating vector."""
        keep = self.dominating > 0.0
        return PointDistribution.from_atoms(self.lr_map[keep], self.dominating[keep])

    def component_laws(self) -> list[PointDistribution]:
        """Law of the density vector under each component row."""
        out = []
        for row in self.base.probs:
            keep = row > 0.0
            out.append(PointDistribution.from_atoms(self.lr_map[keep], row[keep]))
        return out

    def restrict(self, subset) -> "LabeledSpace":
        sub = self.base.restrict(subset)
        idx = [self.base.index_of(p) for p in sub.params]
        return LabeledSpace(base=sub, dominating=self.dominating, lr_map=self.lr_map[:, idx])


def canonical_space(dist: PointDistribution, params) -> LabeledSpace:
    """Space whose atoms are the law's points and whose densities are their
    coordinates.

    Requires each coordinate to average to one under the law (the defining
    property of a law of density vectors), so that the implied component
    rows are probability vectors.
    """
    labels = tuple(params)
    if len(labels) != dist.dim:
        raise DimensionError("one parameter label per coordinate required")
    rows = dist.weights[None, :] * dist.points.T
    if np.any(dist.points < 0.0):
        raise ValidationError("density coordinates must be nonnegative")
    exp = FiniteExperiment(labels, rows)
    return LabeledSpace(base=exp, dominating=dist.weights, lr_map=dist.points)


def canonicalize(space: LabeledSpace) -> LabeledSpace:
    """Merge atoms with coincident density vectors and drop null atoms.

    The result is an equivalent space whose atoms are the distinct points of
    the likelihood law; rows and the dominating vector are summed per group,
    using the same significant-digit keys as the law's own merge.
    """
    law = space.law()
    index = {_point_key(p): i for i, p in enumerate(law.points)}
    n_cells = law.support_size
    probs = np.zeros((space.base.n_params, n_cells))
    dom = np.zeros(n_cells)
    for w in range(space.base.sample_size):
        if space.dominating[w] <= 0.0:
            continue
        cell = index[_point_key(space.lr_map[w])]
        probs[:, cell] += space.base.probs[:, w]
        dom[cell] += space.dominating[w]
    probs = probs / probs.sum(axis=1, keepdims=True)
    exp = FiniteExperiment(space.base.params, probs)
    return LabeledSpace(base=exp, dominating=dom / dom.sum(), lr_map=law.points)


@dataclass(frozen=True)
class PartitionCell:
    """A nonempty intersection cell of the generating balls.

    ``key`` is the sorted tuple of ball indices containing the cell;
    ``diameter`` is an upper bound (the smallest ball diameter in the key).
    """

    key: tuple
    diameter: float


@dataclass(frozen=True, eq=False)
class Partition:
    """Partition of R^k generated by closed balls, plus a remainder cell.

    Any point is located by its ball-membership signature; the empty
    signature is the remainder.  ``cells`` lists the signatures observed on
    the construction atoms; locating other points may produce new
    signatures, which are legitimate cells of the generated partition and
    automatically satisfy the same diameter bound.
    """

    centers: np.ndarray
    radii: np.ndarray
    cells: tuple
    delta: float
    epsilon: float
    box_center: np.ndarray
    box_radius: float
    boundary_margin: float

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def locate(self, points) -> list[tuple]:
        """Signature key of each point; ``REMAINDER_KEY`` means uncovered."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionError(f"points must be (n, {self.dim})")
        if self.centers.shape[0] == 0:
            return [REMAINDER_KEY] * pts.shape[0]
        inside = cdist(pts, self.centers) <= self.radii[None, :]
        return [tuple(int(i) for i in np.flatnonzero(row)) for row in inside]

    def diameter_bound(self, key: tuple) -> float:
        if key == REMAINDER_KEY:
            return float("inf")
        return float(2.0 * self.radii[list(key)].min())


def _pick_radius(center: np.ndarray, points: np.ndarray, delta: float) -> float:
    """Radius strictly below delta/2 avoiding every center-to-atom distance.

    Let lo be the largest atom distance below delta/2 (zero if none); the
    interval (lo, delta/2) contains no atom distance, and the radius is its
    three-quarter point.  Reaching well past lo makes the ball boundary cut
    deep between atoms instead of near their midlines, which keeps per-cell
    masses stable when another distribution's atoms sit close to those
    midlines; no atom of the construction set lies on the boundary.
    """
    d = np.linalg.norm(points - center[None, :], axis=1)
    below = d[d < delta / 2.0]
    lo = float(below.max()) if below.size else 0.0
    return lo + 0.75 * (delta / 2.0 - lo)


def build_partition(
    q_dist: PointDistribution,
    q_components: Sequence[PointDistribution],
    delta: float,
    epsilon: float,
) -> Partition:
    """Cover the bulk of the source law with small closed balls.

    A box around the mixture mean is grown until every component leaves at
    most ``epsilon / 2`` of its mass outside (the factor 2 keeps slack for
    the remainder); the atoms inside are covered greedily by balls of radius
    below ``delta / 2`` whose radii avoid all atom distances.  Cells are the
    nonempty signatures of the generated partition, so each has diameter at
    most ``delta``, and every component puts mass at most ``epsilon`` in the
    remainder.
    """
    if delta <= 0.0 or epsilon <= 0.0:
        raise ValidationError("delta and epsilon must be strictly positive")
    for comp in q_components:
        if comp.dim != q_dist.dim:
            raise DimensionError("component dimension mismatch")

    stacks = [q_dist.points] + [c.points for c in q_components]
    seen: dict[tuple, np.ndarray] = {}
    for block in stacks:
        for p in block:
            seen.setdefault(tuple(p), p)
    all_points = np.array(list(seen.values()), dtype=float)

    center = q_dist.weights @ q_dist.points
    dist_inf = np.max(np.abs(all_points - center[None, :]), axis=1)
    box_radius = 0.0
    for radius in np.sort(np.unique(dist_inf)):
        box_radius = float(radius)
        ok = True
        for comp in q_components:
            outside = np.max(np.abs(comp.points - center[None, :]), axis=1) > radius
            if comp.weights[outside].sum() > epsilon / 2.0:
                ok = False
                break
        if ok:
            break
    cover = all_points[dist_inf <= box_radius]

    # Greedy cover.  Each uncovered atom is paired with its nearest uncovered
    # neighbor within delta and the ball is centered at their midpoint, so
    # cells hold at least two atoms wherever the law is locally dense; this
    # keeps per-cell masses stable against another distribution's atoms
    # falling near single-atom boundaries.  Isolated atoms get their own ball.
    centers: list[np.ndarray] = []
    radii: list[float] = []
    uncovered = np.ones(len(cover), dtype=bool)
    for i, p in enumerate(cover):
        if not uncovered[i]:
            continue
        dists = np.linalg.norm(cover - p[None, :], axis=1)
        dists[i] = np.inf
        dists[~uncovered] = np.inf
        j = int(np.argmin(dists))
        if np.isfinite(dists[j]) and dists[j] < delta:
            center = (p + cover[j]) / 2.0
        else:
            center = p
        radius = _pick_radius(center, all_points, delta)
        uncovered &= np.linalg.norm(cover - center[None, :], axis=1) > radius
        centers.append(center)
        radii.append(radius)
    centers_arr = np.array(centers, dtype=float).reshape(len(centers), q_dist.dim)
    radii_arr = np.array(radii, dtype=float)

    if len(centers) > 0:
        gaps = np.abs(cdist(all_points, centers_arr) - radii_arr[None, :])
        margin = float(gaps.min())
    else:
        margin = float("inf")

    partition = Partition(
        centers=centers_arr,
        radii=radii_arr,
        cells=(),
        delta=float(delta),
        epsilon=float(epsilon),
        box_center=center,
        box_radius=box_radius,
        boundary_margin=margin,
    )
    cells = []
    seen_keys = set()
    for key in partition.locate(all_points):
        if key == REMAINDER_KEY or key in seen_keys:
            continue
        seen_keys.add(key)
        cells.append(PartitionCell(key=key, diameter=partition.diameter_bound(key)))
    object.__setattr__(partition, "cells", tuple(cells))

    if margin <= 0.0:
        raise ValidationError("a construction atom sits on a ball boundary")
    for cell in cells:
        if cell.diameter > delta:
            raise ValidationError("cell diameter bound exceeds delta")
    for i, comp in enumerate(q_components):
        stray = sum(
            w for w, key in zip(comp.weights, partition.locate(comp.points)) if key == REMAINDER_KEY
        )
        if stray > epsilon:
            raise ValidationError(f"component {i} leaves mass {stray:g} in the remainder")
    return partition


def _cell_masses(points: np.ndarray, weights: np.ndarray, partition: Partition) -> dict:
    masses: dict[tuple, float] = {}
    for key, w in zip(partition.locate(points), weights):
        masses[key] = masses.get(key, 0.0) + float(w)
    return masses


def _cell_universe(partition: Partition, *mass_maps: dict) -> list[tuple]:
    keys: list[tuple] = [REMAINDER_KEY] + [c.key for c in partition.cells]
    known = set(keys)
    for masses in mass_maps:
        for key in masses:
            if key not in known:
                known.add(key)
                keys.append(key)
    return keys


@dataclass(frozen=True)
class CellMass:
    key: tuple
    p_mass: float
    q_mass: float
    satisfied: bool
    slack: float


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """Per-cell mass comparison between the target and source laws."""

    epsilon: float
    cells: tuple
    ok: bool

    def failing(self) -> list[tuple]:
        return [c.key for c in self.cells if not c.satisfied]


def check_mass_condition(
    p_side: PointDistribution,
    q_side: PointDistribution,
    partition: Partition,
    epsilon: float,
) -> ConditionReport:
    """Check P-mass >= (1 - epsilon) * Q-mass on every cell, remainder included."""
    if p_side.dim != partition.dim or q_side.dim != partition.dim:
        raise DimensionError("distribution dimension does not match the partition")
    if epsilon < 0.0:
        raise ValidationError("epsilon must be nonnegative")
    p_masses = _cell_masses(p_side.points, p_side.weights, partition)
    q_masses = _cell_masses(q_side.points, q_side.weights, partition)
    cells = []
    for key in _cell_universe(partition, p_masses, q_masses):
        p = p_masses.get(key, 0.0)
        q = q_masses.get(key, 0.0)
        slack = p - (1.0 - epsilon) * q
        cells.append(CellMass(key=key, p_mass=p, q_mass=q, satisfied=slack >= 0.0, slack=slack))
    return ConditionReport(epsilon=float(epsilon), cells=tuple(cells), ok=all(c.satisfied for c in cells))


def _kernel_pieces(
    p_space: LabeledSpace,
    q_dist: PointDistribution,
    partition: Partition,
    epsilon: float,
):
    """Shared core of the kernel and coupling-measure constructions.

    Returns the repair measure ``mu`` (None when epsilon is zero), the keyed
    target conditionals, the per-cell mass tables, and the located keys of
    the source atoms.
    """
    if q_dist.dim != partition.dim:
        raise DimensionError("source law dimension does not match the partition")
    if p_space.base.n_params != q_dist.dim:
        raise DimensionError("target space parameter count does not match the law dimension")
    if epsilon < 0.0 or epsilon > 1.0:
        raise ValidationError("epsilon must lie in [0, 1]")

    atom_keys = partition.locate(p_space.lr_map)
    p_masses: dict[tuple, float] = {}
    members: dict[tuple, list[int]] = {}
    for w, key in enumerate(atom_keys):
        mass = float(p_space.dominating[w])
        p_masses[key] = p_masses.get(key, 0.0) + mass
        members.setdefault(key, []).append(w)
    q_masses = _cell_masses(q_dist.points, q_dist.weights, partition)

    n = p_space.base.sample_size
    conditionals: dict[tuple, np.ndarray] = {}
    weights: dict[tuple, float] = {}
    for key in _cell_universe(partition, p_masses, q_masses):
        p = p_masses.get(key, 0.0)
        q = q_masses.get(key, 0.0)
        excess = p - (1.0 - epsilon) * q
        if excess < 0.0:
            raise ConditionError(
                f"cell {key!r} has target mass {p:g} below (1 - epsilon) * {q:g}",
                cell=key,
            )
        weights[key] = excess
        if p > 0.0:
            cond = np.zeros(n)
            idx = members.get(key, [])
            cond[idx] = p_space.dominating[idx] / p
            conditionals[key] = cond
        elif q > 0.0 and epsilon < 1.0:
            # Unreachable: excess >= 0 forces p > 0 here.
            raise ConditionError(f"cell {key!r} carries source mass but no target mass", cell=key)

    if epsilon > 0.0:
        mu = np.zeros(n)
        for key, excess in weights.items():
            if excess > 0.0:
                if key not in conditionals:
                    raise ConditionError(
                        f"cell {key!r} has repair weight but no target mass", cell=key
                    )
                mu += (excess / epsilon) * conditionals[key]
        total = mu.sum()
        if abs(total - 1.0) > DERIVED_ATOL:
            raise CertificationError(f"repair measure sums to {total!r}")
    else:
        mu = None

    q_keys = partition.locate(q_dist.points)
    for key in q_keys:
        if epsilon < 1.0 and key not in conditionals:
            raise ConditionError(
                f"source atoms in cell {key!r} but the cell has no target mass", cell=key
            )
    return mu, conditionals, p_masses, q_masses, q_keys


def construct_kernel(
    p_space: LabeledSpace,
    q_dist: PointDistribution,
    partition: Partition,
    epsilon: float,
) -> tuple[Kernel, np.ndarray | None]:
    """Kernel from source atoms to the target sample space, plus the repair measure.

    Each row is ``epsilon * mu + (1 - epsilon) * P(. | cell of the atom)``,
    where ``mu`` redistributes the per-cell excess target mass.  The
    construction requires the mass-domination condition on every cell and
    guarantees the marginal identity: the source law pushed through the
    kernel equals the target dominating vector.
    """
    mu, conditionals, _, _, q_keys = _kernel_pieces(p_space, q_dist, partition, epsilon)
    n = p_space.base.sample_size
    rows = np.zeros((q_dist.support_size, n))
    for j, key in enumerate(q_keys):
        row = np.zeros(n)
        if epsilon > 0.0:
            row += epsilon * mu
        if epsilon < 1.0:
            row += (1.0 - epsilon) * conditionals[key]
        rows[j] = row
    kernel = Kernel(rows)
    marginal = q_dist.weights @ kernel.matrix
    if np.max(np.abs(marginal - p_space.dominating)) > DERIVED_ATOL:
        raise CertificationError("kernel marginal does not reproduce the target dominating vector")
    return kernel, mu


@dataclass(frozen=True, eq=False)
class CouplingMeasure:
    """Joint law on (source atom, target atom) pairs.

    ``matrix`` is the full coupling; ``repair_part`` is the
    epsilon-weighted product piece and ``matched_part`` the cell-matched
    piece, so ``matrix = epsilon * repair_part + (1 - epsilon) * matched_part``
    with both parts probability matrices (the repair part is zero when
    epsilon is zero).
    """

    matrix: np.ndarray
    repair_part: np.ndarray
    matched_part: np.ndarray


def build_coupling_measure(
    p_space: LabeledSpace,
    q_dist: PointDistribution,
    partition: Partition,
    epsilon: float,
) -> CouplingMeasure:
    """Joint measure with the source law and target dominating vector as marginals.

    The matched part couples each cell's source conditional with the same
    cell's target conditional, so it concentrates on matched-cell pairs; the
    measure disintegrates through :func:`construct_kernel`'s rows.
    """
    mu, conditionals, _, _, q_keys = _kernel_pieces(p_space, q_dist, partition, epsilon)
    m = q_dist.support_size
    n = p_space.base.sample_size
    repair = np.outer(q_dist.weights, mu) if mu is not None else np.zeros((m, n))
    matched = np.zeros((m, n))
    for j, key in enumerate(q_keys):
        cond = conditionals.get(key)
        if cond is None:
            # Only reachable when epsilon == 1, where the matched part has
            # zero weight in the total; leave the row empty.
            continue
        # Q(A) * Q(.|A) at atom j is just the atom weight.
        matched[j] = q_dist.weights[j] * cond
    matrix = epsilon * repair + (1.0 - epsilon) * matched
    return CouplingMeasure(matrix=matrix, repair_part=repair, matched_part=matched)


@dataclass(frozen=True, eq=False)
class CouplingCertificate:
    """Certified comparison of the constructed kernel against its bound.

    ``achieved`` is the worst per-parameter total variation between the
    pushed source components and the target rows; it never exceeds
    ``bound = 2 * delta + 4 * epsilon`` (up to ``BOUND_SLACK``).
    ``coupling_l1[i]`` is the joint-measure L1 distance between the two
    density coordinates and ``remainder_masses[i]`` the source component
    mass of the remainder cell, the two quantities driving the bound.
    """

    delta: float
    epsilon: float
    bound: float
    achieved: float
    kernel: Kernel
    mu: np.ndarray | None
    coupling_l1: tuple
    remainder_masses: tuple
    condition: ConditionReport


def certify_bound(
    p_space: LabeledSpace,
    q_space: LabeledSpace,
    kernel: Kernel,
    partition: Partition,
    delta: float,
    epsilon: float,
) -> CouplingCertificate:
    """Check the constructed kernel against the 2*delta + 4*epsilon bound.

    ``q_space`` is the source side on its law's atoms (rows are the
    component laws, the density map is the identity embedding of the
    atoms).  Raises :class:`CertificationError` if the bound fails, which
    would signal a bug rather than a data problem.
    """
    if p_space.base.params != q_space.base.params:
        raise DimensionError("the two sides must share parameter labels")
    q_dist = q_space.law()
    if kernel.from_size != q_dist.support_size or kernel.to_size != p_space.base.sample_size:
        raise DimensionError("kernel shape does not match the two sides")
    if delta <= 0.0 or epsilon < 0.0:
        raise ValidationError("delta must be positive and epsilon nonnegative")

    pushed = q_space.base.probs @ kernel.matrix
    residuals = [
        total_variation(pushed[i], p_space.base.probs[i]) for i in range(p_space.base.n_params)
    ]
    achieved = float(max(residuals))
    bound = 2.0 * delta + 4.0 * epsilon

    coupling = build_coupling_measure(p_space, q_dist, partition, epsilon)
    y_coords = q_dist.points  # (m, k): source density vectors
    x_coords = p_space.lr_map  # (n, k): target density vectors
    l1 = tuple(
        float(np.sum(coupling.matrix * np.abs(y_coords[:, None, i] - x_coords[None, :, i])))
        for i in range(p_space.base.n_params)
    )
    q_keys = partition.locate(q_dist.points)
    remainder = []
    for i in range(q_space.base.n_params):
        comp = q_space.base.probs[i]
        remainder.append(
            float(sum(w for w, key in zip(comp, q_keys) if key == REMAINDER_KEY))
        )
    condition = check_mass_condition(p_space.law(), q_dist, partition, epsilon)

    if achieved > bound + BOUND_SLACK:
        raise CertificationError(
            f"achieved total variation {achieved:g} exceeds certified bound {bound:g}"
        )
    mu, _, _, _, _ = _kernel_pieces(p_space, q_dist, partition, epsilon)
    return CouplingCertificate(
        delta=float(delta),
        epsilon=float(epsilon),
        bound=bound,
        achieved=achieved,
        kernel=kernel,
        mu=mu,
        coupling_l1=l1,
        remainder_masses=tuple(remainder),
        condition=condition,
    )
