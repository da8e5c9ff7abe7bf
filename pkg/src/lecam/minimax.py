"""Risks, zero-sum minimax values, Bayes risks, and the asymptotic transfer check.

A decision problem pairs an experiment with a loss table over a finite
action grid, truncated at a level M.  The minimax value over randomized
decision kernels is a zero-sum LP whose dual is a least-favorable prior;
because the Bayes risk of the extracted prior is recomputed exactly, the
reported gap certifies the finite minimax equality (value of the game equals
the best Bayes risk) on every solve.

The transfer check compares, for each n, the exact minimax value of the n-th
experiment against the limit's value minus M times the certified
randomization error: any decision rule under the n-th experiment composes
with the certified kernel into a decision rule under the limit, losing at
most M times the total-variation error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .core import LP_TOL, FiniteExperiment, Kernel, check_probability_vector
from .convergence import ConvergenceReport, ExperimentSequence
from .errors import DimensionError, SolverError, ValidationError
from .lpsolve import solve_lp


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Nonnegative loss table over (parameter, action) pairs, truncated at M.

    ``table[t, z]`` is the raw loss; :attr:`truncated` caps entries at the
    truncation level.
    """

    params: tuple
    actions: tuple
    table: np.ndarray
    truncation: float

    def __post_init__(self):
        params = tuple(self.params)
        actions = tuple(self.actions)
        if len(set(params)) != len(params) or not params:
            raise ValidationError("loss parameters must be distinct and nonempty")
        if len(set(actions)) != len(actions) or not actions:
            raise ValidationError("loss actions must be distinct and nonempty")
        table = np.array(self.table, dtype=float)
        if table.shape != (len(params), len(actions)):
            raise ValidationError(
                f"loss table must have shape ({len(params)}, {len(actions)})"
            )
        if not np.all(np.isfinite(table)) or np.any(table < 0.0):
            raise ValidationError("losses must be finite and nonnegative")
        if not np.isfinite(self.truncation) or self.truncation <= 0.0:
            raise ValidationError("truncation must be a finite positive number")
        table.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "truncation", float(self.truncation))

    @property
    def truncated(self) -> np.ndarray:
        return np.minimum(self.table, self.truncation)

    def index_of(self, param) -> int:
        try:
            return self.params.index(param)
        except ValueError:
            raise KeyError(f"loss has no parameter {param!r}") from None

    @classmethod
    def squared_error(cls, params, actions, truncation: float) -> "LossSpec":
        """Truncated squared-error loss on numeric parameters and actions."""
        p = np.asarray(params, dtype=float)
        z = np.asarray(actions, dtype=float)
        return cls(
            params=tuple(params),
            actions=tuple(actions),
            table=(p[:, None] - z[None, :]) ** 2,
            truncation=truncation,
        )

    def restrict(self, subset) -> "LossSpec":
        labels = tuple(subset)
        idx = [self.index_of(t) for t in labels]
        return LossSpec(labels, self.actions, self.table[idx], self.truncation)


def loss_to_dict(loss: LossSpec) -> dict:
    return {
        "params": list(loss.params),
        "actions": list(loss.actions),
        "L": [[float(x) for x in row] for row in loss.table],
        "M": loss.truncation,
    }


def loss_from_dict(data: dict, params=None) -> LossSpec:
    """Read a loss table; rows align with ``params`` when the key is absent."""
    if not isinstance(data, dict):
        raise ValidationError("loss JSON must be an object")
    missing = {"actions", "L", "M"} - set(data)
    if missing:
        raise ValidationError(f"loss JSON missing keys: {sorted(missing)}")
    labels = data.get("params", params)
    if labels is None:
        raise ValidationError("loss JSON needs a 'params' key or explicit labels")
    return LossSpec(tuple(labels), tuple(data["actions"]), data["L"], float(data["M"]))


def load_loss(path, params=None) -> LossSpec:
    with open(Path(path), "r", encoding="utf-8") as fh:
        return loss_from_dict(json.load(fh), params=params)


def risk(exp: FiniteExperiment, decision: Kernel, loss: LossSpec, t) -> float:
    """Expected truncated loss of a randomized decision rule at parameter t."""
    if decision.from_size != exp.sample_size:
        raise DimensionError("decision kernel must consume the experiment's atoms")
    if decision.to_size != len(loss.actions):
        raise DimensionError("decision kernel must produce the loss's actions")
    q = exp.row(t)
    lt = loss.truncated[loss.index_of(t)]
    return float(q @ decision.matrix @ lt)


@dataclass(frozen=True, eq=False)
class BayesResult:
    value: float
    decision: Kernel
    prior: np.ndarray


def bayes_risk(exp: FiniteExperiment, loss: LossSpec, prior) -> BayesResult:
    """Minimal average risk against a prior, with the optimal decision rule.

    Per observation the best action minimizes the prior-weighted truncated
    loss; ties break toward the lowest action index, which does not affect
    the value.
    """
    w = check_probability_vector(prior, what="prior")
    if w.shape[0] != len(loss.params):
        raise DimensionError("one prior weight per loss parameter required")
    Q = exp.restrict(loss.params).probs  # (s, r)
    cost = np.einsum("t,ty,tz->yz", w, Q, loss.truncated)  # (r, a)
    best = np.argmin(cost, axis=1)
    matrix = np.zeros((exp.sample_size, len(loss.actions)))
    matrix[np.arange(exp.sample_size), best] = 1.0
    return BayesResult(
        value=float(cost[np.arange(exp.sample_size), best].sum()),
        decision=Kernel(matrix),
        prior=w,
    )


@dataclass(frozen=True, eq=False)
class GameResult:
    """Solved zero-sum game between the statistician and nature.

    ``value`` is the minimax risk of the returned decision kernel; ``prior``
    is the least-favorable prior extracted from the LP dual, and ``gap`` is
    ``value`` minus that prior's exactly recomputed Bayes risk.  A gap below
    ``LP_TOL`` certifies the minimax equality for this instance.
    """

    value: float
    decision: Kernel
    prior: np.ndarray
    gap: float
    subset: tuple


def minimax_value(exp: FiniteExperiment, loss: LossSpec, subset=None) -> GameResult:
    """Minimax truncated risk over randomized decision kernels, via LP."""
    labels = loss.params if subset is None else tuple(subset)
    game_loss = loss if subset is None else loss.restrict(labels)
    Q = exp.restrict(labels).probs  # (s, r)
    L = game_loss.truncated  # (s, a)
    s, r = Q.shape
    a = L.shape[1]
    nv = r * a + 1

    # Variables: decision entries rho[y, z] (observation-major) then the
    # worst-case scalar v.  Risk rows: sum_{y,z} Q[t,y] L[t,z] rho[y,z] <= v.
    coeff = np.einsum("ty,tz->tyz", Q, L).reshape(s, r * a)
    rows = np.repeat(np.arange(s), r * a)
    cols = np.tile(np.arange(r * a), s)
    A_ub = sparse.coo_matrix(
        (
            np.concatenate([coeff.ravel(), -np.ones(s)]),
            (
                np.concatenate([rows, np.arange(s)]),
                np.concatenate([cols, np.full(s, nv - 1)]),
            ),
        ),
        shape=(s, nv),
    ).tocsr()
    A_eq = sparse.coo_matrix(
        (np.ones(r * a), (np.repeat(np.arange(r), a), np.arange(r * a))), shape=(r, nv)
    ).tocsr()
    bounds = [(0.0, None)] * (r * a) + [(None, None)]
    c = np.zeros(nv)
    c[-1] = 1.0
    sol = solve_lp(c, A_ub, np.zeros(s), A_eq, np.ones(r), bounds)

    decision = Kernel.from_rows(sol.x[: r * a].reshape(r, a), clip=True)
    risks = np.einsum("ty,yz,tz->t", Q, decision.matrix, L)
    value = float(risks.max())

    prior = np.maximum(-sol.ub_marginals, 0.0)
    total = prior.sum()
    prior = np.full(s, 1.0 / s) if total <= 0.0 else prior / total
    bayes = bayes_risk(exp, game_loss, prior)
    gap = value - bayes.value
    if gap > LP_TOL:
        raise SolverError(f"minimax duality gap {gap:g} exceeds {LP_TOL:g}")
    return GameResult(value=value, decision=decision, prior=prior, gap=gap, subset=labels)


@dataclass(frozen=True)
class TransferRow:
    n: int
    minimax_n: float
    epsilon_n: float
    transfer_bound: float
    bound_ok: bool
    crossed: bool
    lp_gap: float


@dataclass(frozen=True, eq=False)
class TransferReport:
    """Per-n comparison of exact minimax values against the transfer bound.

    ``limit_value`` is the minimax value of the limit experiment;
    ``rows[i].transfer_bound`` is that value minus the truncation level
    times the certified randomization error at n.  ``crossing_n`` is the
    first probed n whose exact value exceeds ``r_prime`` (None if never).
    ``promised`` records whether ``r_prime`` is actually below the limit
    value; above it no crossing is guaranteed.
    """

    r_prime: float
    limit_value: float
    promised: bool
    rows: tuple
    crossing_n: int | None
    limit_game: GameResult

    def to_json_dict(self) -> dict:
        return {
            "r_prime": self.r_prime,
            "limit_value": self.limit_value,
            "promised": self.promised,
            "crossing_n": self.crossing_n,
            "rows": [
                {
                    "n": row.n,
                    "minimax_n": row.minimax_n,
                    "epsilon_n": row.epsilon_n,
                    "transfer_bound": row.transfer_bound,
                    "bound_ok": row.bound_ok,
                    "crossed": row.crossed,
                    "lp_gap": row.lp_gap,
                }
                for row in self.rows
            ],
        }


def lam_transfer_check(
    seq: ExperimentSequence,
    limit: FiniteExperiment,
    loss: LossSpec,
    r_prime: float,
    certificates: ConvergenceReport,
    subset=None,
) -> TransferReport:
    """Check the local asymptotic minimax lower bound along certified kernels.

    For each certified n the exact minimax value under the n-th experiment
    must be at least ``limit_value - truncation * epsilon_n`` (up to LP
    tolerance), where ``epsilon_n`` is the certified total-variation error of
    the convergence kernel at n.  The report also locates the first n whose
    exact value exceeds ``r_prime``.
    """
    labels = tuple(seq.subset if subset is None else subset)
    certified = certificates.certified_entries()
    if not certified:
        raise ValidationError("convergence report carries no certified kernels")
    limit_game = minimax_value(limit, loss, labels)
    rows = []
    crossing = None
    for entry in certified:
        exp, _ = seq.experiment(entry.n)
        game = minimax_value(exp.restrict(labels), loss, labels)
        eps = float(entry.achieved)
        transfer = limit_game.value - loss.truncation * eps
        ok = game.value >= transfer - LP_TOL
        crossed = game.value > r_prime
        if crossed and crossing is None:
            crossing = entry.n
        rows.append(
            TransferRow(
                n=entry.n,
                minimax_n=game.value,
                epsilon_n=eps,
                transfer_bound=transfer,
                bound_ok=ok,
                crossed=crossed,
                lp_gap=game.gap,
            )
        )
    return TransferReport(
        r_prime=float(r_prime),
        limit_value=limit_game.value,
        promised=r_prime < limit_game.value,
        rows=tuple(rows),
        crossing_n=crossing,
        limit_game=limit_game,
    )
