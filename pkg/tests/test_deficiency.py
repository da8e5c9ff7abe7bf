"""Deficiency LP tests.

The analytic spot value comes from a brute-force grid oracle over output
distributions; structural properties (monotonicity, triangle inequality,
feasibility dominance) are checked on random instances with the LP's own
dual certificates enforcing the optimality gap.
"""

import numpy as np
import pytest

import lecam as lc
from conftest import random_experiment, random_kernel

UNINFORMATIVE = lc.FiniteExperiment(("a", "b"), [[0.5, 0.5], [0.5, 0.5]])
BERNOULLI_PAIR = lc.FiniteExperiment(("a", "b"), [[0.8, 0.2], [0.2, 0.8]])


def grid_oracle_uninformative_value(target, steps=2001):
    """Any kernel from the uninformative experiment produces one fixed output
    distribution for every parameter, so the deficiency is the best single
    output: min over v of max_t ||v - q_t||_1, evaluated on a grid."""
    best = np.inf
    for a in np.linspace(0.0, 1.0, steps):
        v = np.array([a, 1.0 - a])
        worst = max(lc.total_variation(v, row) for row in target.probs)
        best = min(best, worst)
    return best


def test_deficiency_of_experiment_with_itself(rng):
    exp = random_experiment(rng, 3, 5)
    res = lc.deficiency(exp, exp)
    assert res.value == pytest.approx(0.0, abs=1e-9)
    assert res.dual_certificate.gap <= lc.LP_TOL


def test_deficiency_garbled_target_is_free(rng):
    for _ in range(10):
        exp = random_experiment(rng, 3, 5)
        garbling = random_kernel(rng, 5, 4)
        garbled = lc.push_forward(exp, garbling)
        res = lc.deficiency(exp, garbled)
        assert res.value <= 1e-7


def test_deficiency_uninformative_to_bernoulli_pair():
    oracle = grid_oracle_uninformative_value(BERNOULLI_PAIR)
    assert oracle == pytest.approx(0.6, abs=1e-9)
    res = lc.deficiency(UNINFORMATIVE, BERNOULLI_PAIR)
    assert res.value == pytest.approx(0.6, abs=1e-7)
    assert res.dual_certificate.gap <= lc.LP_TOL


def test_deficiency_result_consistency():
    res = lc.deficiency(UNINFORMATIVE, BERNOULLI_PAIR)
    pushed = lc.push_forward(UNINFORMATIVE, res.kernel)
    recomputed = max(
        lc.total_variation(pushed.row(t), BERNOULLI_PAIR.row(t)) for t in res.subset
    )
    assert res.value == pytest.approx(recomputed, abs=1e-12)
    assert np.allclose(sorted(res.residuals), sorted(
        [lc.total_variation(pushed.row(t), BERNOULLI_PAIR.row(t)) for t in res.subset]
    ))


def test_lecam_distance_modes():
    assert lc.lecam_distance(UNINFORMATIVE, UNINFORMATIVE) == pytest.approx(0.0, abs=1e-9)
    assert lc.lecam_distance(UNINFORMATIVE, BERNOULLI_PAIR, mode="paper-min") == pytest.approx(
        0.0, abs=1e-7
    )
    assert lc.lecam_distance(UNINFORMATIVE, BERNOULLI_PAIR, mode="standard-max") == pytest.approx(
        0.6, abs=1e-7
    )
    with pytest.raises(lc.ValidationError):
        lc.lecam_distance(UNINFORMATIVE, BERNOULLI_PAIR, mode="average")


def test_deficiency_range_and_subset_errors(rng):
    exp = random_experiment(rng, 2, 3)
    other = random_experiment(rng, 2, 4)
    with pytest.raises(lc.ValidationError):
        lc.deficiency(exp, other, ())
    with pytest.raises(lc.DimensionError):
        lc.deficiency(exp, other, ("nope",))


def test_subset_monotonicity(rng):
    for _ in range(10):
        src = random_experiment(rng, 4, 5)
        tgt = random_experiment(rng, 4, 4)
        small = lc.deficiency(src, tgt, ("t0", "t1")).value
        large = lc.deficiency(src, tgt, ("t0", "t1", "t2", "t3")).value
        assert small <= large + 1e-7


def test_triangle_inequality_via_composition(rng):
    for _ in range(8):
        a = random_experiment(rng, 3, 4)
        b = random_experiment(rng, 3, 5)
        c = random_experiment(rng, 3, 3)
        ab = lc.deficiency(a, b)
        bc = lc.deficiency(b, c)
        ac = lc.deficiency(a, c)
        composed = lc.compose_kernels(ab.kernel, bc.kernel)
        pushed = lc.push_forward(a, composed)
        composed_cost = max(
            lc.total_variation(pushed.row(t), c.row(t)) for t in a.params
        )
        assert ac.value <= composed_cost + 1e-9
        assert composed_cost <= ab.value + bc.value + 1e-7


def test_feasibility_dominance(rng):
    for _ in range(10):
        src = random_experiment(rng, 3, 5)
        tgt = random_experiment(rng, 3, 4)
        res = lc.deficiency(src, tgt)
        user_kernel = random_kernel(rng, 5, 4)
        pushed = lc.push_forward(src, user_kernel)
        cost = max(lc.total_variation(pushed.row(t), tgt.row(t)) for t in src.params)
        assert res.value <= cost + 1e-7
        assert 0.0 <= res.value <= 2.0


def test_identity_kernel_bound_on_shared_space(rng):
    for _ in range(10):
        src = random_experiment(rng, 3, 6)
        tgt = random_experiment(rng, 3, 6)
        res = lc.deficiency(src, tgt)
        tv_bound = max(
            lc.total_variation(src.row(t), tgt.row(t)) for t in src.params
        )
        assert res.value <= tv_bound + 1e-7


def test_dual_certificate_is_feasible_lower_bound(rng):
    # Recompute the dual objective from the certificate alone and compare.
    for _ in range(10):
        src = random_experiment(rng, 3, 4)
        tgt = random_experiment(rng, 3, 5)
        res = lc.deficiency(src, tgt)
        cert = res.dual_certificate
        assert np.all(cert.prior >= 0.0)
        assert cert.prior.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.abs(cert.witness) <= cert.prior[:, None] + 1e-15)
        P = src.restrict(res.subset).probs
        Q = tgt.restrict(res.subset).probs
        response = P.T @ cert.witness
        dual = (cert.witness * Q).sum() - response.max(axis=1).sum()
        assert cert.value == pytest.approx(max(dual, 0.0), abs=1e-12)
        assert cert.gap <= lc.LP_TOL
        assert cert.gap >= -1e-9
