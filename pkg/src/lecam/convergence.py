"""Certify that a sequence of experiments converges to a finite limit.

The pipeline takes a sequence of experiments (indexed by n, with dominating
weights) and a limit given on the atoms of its likelihood law.  For a
schedule of shrinking (delta, epsilon) stages it builds one partition per
stage, probes a finite grid of n for the per-cell mass-domination condition,
assigns to each probed n the finest stage already stable at that n, and
constructs the certified kernel for that stage.  The exact LP deficiency is
reported alongside as a cross-check; it can only be smaller than the
certified coupling value.

Transport distances between the likelihood laws provide an advisory numeric
summary of convergence in distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from .core import (
    FiniteExperiment,
    Kernel,
    PointDistribution,
    likelihood_vectors,
)
from .coupling import (
    LabeledSpace,
    Partition,
    build_partition,
    canonicalize,
    certify_bound,
    check_mass_condition,
    construct_kernel,
)
from .deficiency import deficiency
from .errors import DimensionError, ValidationError
from .lpsolve import solve_lp

DEFAULT_SCHEDULE = tuple((2.0 ** -j, 2.0 ** -j) for j in range(1, 7))
DEFAULT_PROBE = (8, 16, 32, 64, 128, 256)

EUCLIDEAN = "euclidean"
EUCLIDEAN_CAPPED = "euclidean-capped"
TRANSPORT_CAP = 2.0


@dataclass(frozen=True, eq=False)
class TransportResult:
    value: float
    plan: np.ndarray
    gap: float


def transport_plan(
    a: PointDistribution, b: PointDistribution, cost: str = EUCLIDEAN
) -> TransportResult:
    """Minimum-cost coupling of two finitely supported distributions.

    ``cost`` is ``euclidean`` or ``euclidean-capped`` (Euclidean distance
    capped at 2, the scale matching total variation).  The dual potentials
    are repaired into exact feasibility, so ``gap`` is a certified
    weak-duality gap.
    """
    if a.dim != b.dim:
        raise DimensionError("transport requires equal dimensions")
    if cost not in (EUCLIDEAN, EUCLIDEAN_CAPPED):
        raise ValidationError(f"unknown cost {cost!r}")
    C = cdist(a.points, b.points)
    if cost == EUCLIDEAN_CAPPED:
        C = np.minimum(C, TRANSPORT_CAP)
    m, n = C.shape

    # Row ``i`` ships a.weights[i]; column constraints drop the last column,
    # which is implied, keeping the equality system consistent.
    rows_r = np.repeat(np.arange(m), n)
    cols = np.arange(m * n)
    rows_c = m + np.tile(np.arange(n), m)
    keep = np.tile(np.arange(n), m) < n - 1
    A_eq = sparse.coo_matrix(
        (
            np.concatenate([np.ones(m * n), np.ones(keep.sum())]),
            (
                np.concatenate([rows_r, rows_c[keep]]),
                np.concatenate([cols, cols[keep]]),
            ),
        ),
        shape=(m + n - 1, m * n),
    ).tocsr()
    b_eq = np.concatenate([a.weights, b.weights[:-1]])
    sol = solve_lp(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0.0, None))

    plan = np.clip(sol.x.reshape(m, n), 0.0, None)
    value = float((C * plan).sum())
    phi = sol.eq_marginals[:m]
    psi = (C - phi[:, None]).min(axis=0)  # exact best response, always feasible
    # Zero potentials are feasible for nonnegative costs, so the certified
    # lower bound never drops below zero.
    dual = max(float(a.weights @ phi + b.weights @ psi), 0.0)
    return TransportResult(value=value, plan=plan, gap=value - dual)


def transport_distance(a: PointDistribution, b: PointDistribution, cost: str = EUCLIDEAN) -> float:
    """Value of the minimum-cost coupling between ``a`` and ``b``."""
    return transport_plan(a, b, cost).value


@dataclass(frozen=True, eq=False)
class ExperimentSequence:
    """A generator of experiments indexed by n, with dominating weights.

    ``generator(n)`` returns ``(experiment, weights)`` where ``weights`` is a
    probability vector over the experiment's parameters defining the
    dominating mixture.  ``subset`` fixes the parameter labels compared with
    the limit; every generated experiment must contain them.
    """

    generator: Callable[[int], tuple[FiniteExperiment, np.ndarray]]
    subset: tuple

    def __post_init__(self):
        object.__setattr__(self, "subset", tuple(self.subset))
        if not self.subset:
            raise ValidationError("subset must be nonempty")

    def experiment(self, n: int) -> tuple[FiniteExperiment, np.ndarray]:
        exp, weights = self.generator(n)
        if not isinstance(exp, FiniteExperiment):
            raise ValidationError("generator must return a FiniteExperiment")
        for label in self.subset:
            if label not in exp.params:
                raise DimensionError(f"experiment at n={n} lacks parameter {label!r}")
        return exp, np.asarray(weights, dtype=float)

    def space(self, n: int) -> LabeledSpace:
        """Restricted experiment with densities w.r.t. the full mixture."""
        exp, weights = self.experiment(n)
        mixture = weights @ exp.probs
        sub = exp.restrict(self.subset)
        lv = likelihood_vectors(sub, mixture)
        return LabeledSpace(base=sub, dominating=mixture, lr_map=lv.matrix.T)


@dataclass(frozen=True)
class StageRecord:
    index: int
    delta: float
    epsilon: float
    bound: float
    n_threshold: int | None
    note: str | None


@dataclass(frozen=True, eq=False)
class ConvergenceEntry:
    n: int
    stage: int | None
    delta: float | None
    epsilon: float | None
    bound: float | None
    achieved: float | None
    lp_value: float
    lp_gap: float
    transport: float
    kernel: Kernel | None


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    subset: tuple
    stages: tuple
    entries: tuple
    truncated: bool

    def certified_entries(self) -> list[ConvergenceEntry]:
        return [e for e in self.entries if e.kernel is not None]

    def to_json_dict(self) -> dict:
        return {
            "subset": list(self.subset),
            "truncated": self.truncated,
            "stages": [
                {
                    "stage": s.index,
                    "delta": s.delta,
                    "epsilon": s.epsilon,
                    "bound": s.bound,
                    "n_threshold": s.n_threshold,
                    "note": s.note,
                }
                for s in self.stages
            ],
            "entries": [
                {
                    "n": e.n,
                    "stage": e.stage,
                    "delta": e.delta,
                    "epsilon": e.epsilon,
                    "certified_bound": e.bound,
                    "achieved": e.achieved,
                    "lp_deficiency": e.lp_value,
                    "lp_gap": e.lp_gap,
                    "transport": e.transport,
                }
                for e in self.entries
            ],
        }


def _validated_schedule(schedule) -> tuple:
    sched = DEFAULT_SCHEDULE if schedule is None else tuple(
        (float(d), float(e)) for d, e in schedule
    )
    if not sched:
        raise ValidationError("schedule must be nonempty")
    for d, e in sched:
        if d <= 0.0 or e <= 0.0:
            raise ValidationError("schedule entries must be strictly positive")
    for (d0, e0), (d1, e1) in zip(sched, sched[1:]):
        if not (d1 < d0 and e1 < e0):
            raise ValidationError("schedule must decrease strictly in both coordinates")
    return sched


def certify_convergence(
    seq: ExperimentSequence,
    limit: LabeledSpace,
    schedule: Sequence[tuple[float, float]] | None = None,
    probe: Sequence[int] = DEFAULT_PROBE,
) -> ConvergenceReport:
    """Certify the limit reproduces the sequence within vanishing error.

    For each schedule stage a partition is built from the limit law; the
    stage's threshold is the smallest probed n from which the mass
    condition holds at every later probed n.  Thresholds are forced
    nondecreasing, and stages that never stabilize truncate the schedule
    with a diagnostic.  Each probed n then uses the finest stage whose
    threshold it has reached.
    """
    sched = _validated_schedule(schedule)
    probe_ns = sorted(set(int(n) for n in probe))
    if not probe_ns or probe_ns[0] < 1:
        raise ValidationError("probe grid must contain positive indices")

    q_space = canonicalize(limit.restrict(seq.subset))
    q_dist = q_space.law()
    q_components = q_space.component_laws()

    partitions: list[Partition] = [
        build_partition(q_dist, q_components, d, e) for d, e in sched
    ]

    spaces = {n: seq.space(n) for n in probe_ns}
    laws = {n: spaces[n].law() for n in probe_ns}
    ok = {
        (j, n): check_mass_condition(laws[n], q_dist, partitions[j], sched[j][1]).ok
        for j in range(len(sched))
        for n in probe_ns
    }

    stages: list[StageRecord] = []
    thresholds: list[int] = []
    truncated = False
    previous = None
    for j, (d, e) in enumerate(sched):
        raw = None
        for i, n in enumerate(probe_ns):
            if all(ok[(j, n2)] for n2 in probe_ns[i:]):
                raw = n
                break
        if raw is None or truncated:
            note = (
                "mass condition not stable within the probe budget; "
                "convergence to this limit is in doubt at this resolution"
                if raw is None
                else "skipped after an earlier stage failed to stabilize"
            )
            stages.append(StageRecord(j + 1, d, e, 2 * d + 4 * e, None, note))
            truncated = True
            continue
        threshold = raw if previous is None else max(raw, previous)
        previous = threshold
        thresholds.append(threshold)
        stages.append(StageRecord(j + 1, d, e, 2 * d + 4 * e, threshold, None))

    entries: list[ConvergenceEntry] = []
    for n in probe_ns:
        stage = None
        for j, threshold in enumerate(thresholds):
            if threshold <= n:
                stage = j
        lp = deficiency(q_space.base, spaces[n].base, seq.subset)
        transport = transport_distance(laws[n], q_dist, cost=EUCLIDEAN_CAPPED)
        if stage is None:
            entries.append(
                ConvergenceEntry(
                    n=n,
                    stage=None,
                    delta=None,
                    epsilon=None,
                    bound=None,
                    achieved=None,
                    lp_value=lp.value,
                    lp_gap=lp.dual_certificate.gap,
                    transport=transport,
                    kernel=None,
                )
            )
            continue
        d, e = sched[stage]
        kernel, _ = construct_kernel(spaces[n], q_dist, partitions[stage], e)
        cert = certify_bound(spaces[n], q_space, kernel, partitions[stage], d, e)
        entries.append(
            ConvergenceEntry(
                n=n,
                stage=stage + 1,
                delta=d,
                epsilon=e,
                bound=cert.bound,
                achieved=cert.achieved,
                lp_value=lp.value,
                lp_gap=lp.dual_certificate.gap,
                transport=transport,
                kernel=kernel,
            )
        )
    return ConvergenceReport(
        subset=seq.subset,
        stages=tuple(stages),
        entries=tuple(entries),
        truncated=truncated,
    )
