"""Partition and kernel-construction tests.

Covers the hand-computed two-cell repair measure, partition geometry checked
by brute-force pairwise distances, the marginal and disintegration
identities, and the certified 2*delta + 4*epsilon bound with its LP
cross-check.
"""

import numpy as np
import pytest

import lecam as lc
from conftest import coupling_instance, random_density_law

# -- fixtures -----------------------------------------------------------------

# Target side: density values 0.93 and 1.105 with masses (0.6, 0.4).
P_SPACE = lc.LabeledSpace(
    base=lc.FiniteExperiment(("t",), [[0.558, 0.442]]),
    dominating=np.array([0.6, 0.4]),
    lr_map=np.array([[0.93], [1.105]]),
)
# Source side: density values 0.92 and 1.08 with masses (0.5, 0.5).
Q_SPACE = lc.LabeledSpace(
    base=lc.FiniteExperiment(("t",), [[0.46, 0.54]]),
    dominating=np.array([0.5, 0.5]),
    lr_map=np.array([[0.92], [1.08]]),
)


def two_cell_partition():
    # delta below the atom gap (0.16) keeps the two source atoms in separate
    # cells; the balls still capture the nearby target atoms.
    q = Q_SPACE.law()
    return lc.build_partition(q, Q_SPACE.component_laws(), delta=0.1, epsilon=0.2)


# -- labeled spaces -----------------------------------------------------------


def test_labeled_space_consistency_enforced():
    with pytest.raises(lc.ValidationError):
        lc.LabeledSpace(
            base=lc.FiniteExperiment(("t",), [[0.5, 0.5]]),
            dominating=np.array([0.5, 0.5]),
            lr_map=np.array([[2.0], [1.0]]),
        )


def test_labeled_space_from_experiment_uniform(rng):
    exp = lc.FiniteExperiment(("a", "b"), [[0.8, 0.2], [0.2, 0.8]])
    space = lc.LabeledSpace.from_experiment(exp)
    assert np.allclose(space.dominating, [0.5, 0.5])
    assert np.allclose(space.lr_map, [[1.6, 0.4], [0.4, 1.6]])
    law = space.law()
    assert law.support_size == 2
    comps = space.component_laws()
    assert len(comps) == 2 and comps[0].dim == 2


def test_canonicalize_merges_equal_density_atoms():
    exp = lc.FiniteExperiment(("a",), [[0.25, 0.25, 0.5]])
    space = lc.LabeledSpace(
        base=exp, dominating=np.array([0.25, 0.25, 0.5]), lr_map=np.ones((3, 1))
    )
    merged = lc.canonicalize(space)
    assert merged.base.sample_size == 1
    assert merged.dominating[0] == pytest.approx(1.0)


def test_canonical_space_round_trip(rng):
    law = random_density_law(rng, 8, 3)
    space = lc.canonical_space(law, ("a", "b", "c"))
    again = space.law()
    assert again.support_size == law.support_size
    assert np.allclose(np.sort(again.weights), np.sort(law.weights))


def test_restrict_keeps_consistency(rng):
    exp = lc.FiniteExperiment(("a", "b", "c"), np.full((3, 4), 0.25))
    space = lc.LabeledSpace.from_experiment(exp)
    sub = space.restrict(("c", "a"))
    assert sub.base.params == ("c", "a")
    assert sub.lr_map.shape == (4, 2)


# -- partitions ---------------------------------------------------------------


def test_partition_single_atom():
    dist = lc.PointDistribution([[0.0, 0.0]], [1.0])
    part = lc.build_partition(dist, [dist], delta=0.5, epsilon=0.1)
    keys = part.locate(dist.points)
    assert keys[0] != lc.REMAINDER_KEY
    assert len(part.cells) == 1
    assert part.diameter_bound(keys[0]) <= 0.5


def test_partition_separated_atoms_get_distinct_cells():
    dist = lc.PointDistribution([[0.0], [1.0]], [0.5, 0.5])
    part = lc.build_partition(dist, [dist], delta=0.1, epsilon=0.1)
    keys = part.locate(dist.points)
    assert keys[0] != keys[1]
    assert all(k != lc.REMAINDER_KEY for k in keys)


def test_partition_random_atoms_distance_oracle(rng):
    dist = random_density_law(rng, 10, 2)
    part = lc.build_partition(dist, [dist], delta=0.3, epsilon=0.05)
    keys = part.locate(dist.points)
    # brute-force: atoms sharing a cell are within delta of each other
    for i in range(10):
        for j in range(i + 1, 10):
            if keys[i] == keys[j] and keys[i] != lc.REMAINDER_KEY:
                assert np.linalg.norm(dist.points[i] - dist.points[j]) <= 0.3
    stray = sum(w for w, k in zip(dist.weights, keys) if k == lc.REMAINDER_KEY)
    assert stray <= 0.05
    assert part.boundary_margin > 0.0
    for cell in part.cells:
        assert cell.diameter <= 0.3


def test_partition_rejects_bad_inputs(rng):
    dist = random_density_law(rng, 4, 2)
    with pytest.raises(lc.ValidationError):
        lc.build_partition(dist, [dist], delta=0.0, epsilon=0.1)
    with pytest.raises(lc.ValidationError):
        lc.build_partition(dist, [dist], delta=0.1, epsilon=-0.2)


# -- mass condition -----------------------------------------------------------


def test_mass_condition_equal_sides(rng):
    dist = random_density_law(rng, 8, 2)
    part = lc.build_partition(dist, [dist], delta=0.4, epsilon=0.1)
    for eps in (0.0, 0.05, 0.3):
        report = lc.check_mass_condition(dist, dist, part, eps)
        assert report.ok
    with pytest.raises(lc.ValidationError):
        lc.check_mass_condition(dist, dist, part, -0.1)


def test_mass_condition_detects_missing_mass():
    q = lc.PointDistribution([[0.0], [1.0]], [0.5, 0.5])
    p = lc.PointDistribution([[0.0]], [1.0])
    part = lc.build_partition(q, [q], delta=0.1, epsilon=0.1)
    report = lc.check_mass_condition(p, q, part, 0.1)
    assert not report.ok
    assert len(report.failing()) == 1
    failing = report.failing()[0]
    entry = next(c for c in report.cells if c.key == failing)
    assert entry.q_mass == pytest.approx(0.5)
    assert entry.p_mass == 0.0


def test_mass_condition_dimension_error(rng):
    q = random_density_law(rng, 4, 2)
    p = random_density_law(rng, 4, 3)
    part = lc.build_partition(q, [q], delta=0.5, epsilon=0.1)
    with pytest.raises(lc.DimensionError):
        lc.check_mass_condition(p, q, part, 0.1)


# -- kernel construction ------------------------------------------------------


def test_two_cell_repair_measure_arithmetic():
    part = two_cell_partition()
    q_dist = Q_SPACE.law()
    kernel, mu = lc.construct_kernel(P_SPACE, q_dist, part, epsilon=0.2)
    # Hand arithmetic: cell masses P = (0.6, 0.4), Q = (0.5, 0.5), so the
    # repair weights are (0.6 - 0.8*0.5)/0.2 = 1 and (0.4 - 0.8*0.5)/0.2 = 0.
    assert np.allclose(mu, [1.0, 0.0])
    order = np.argsort(q_dist.points[:, 0])
    rows = kernel.matrix[order]
    assert np.allclose(rows[0], [1.0, 0.0])
    assert np.allclose(rows[1], [0.2, 0.8])
    marginal = q_dist.weights @ kernel.matrix
    assert np.allclose(marginal, P_SPACE.dominating, atol=1e-12)


def test_identical_sides_fine_partition_is_near_copy(rng):
    law = random_density_law(rng, 6, 2)
    space = lc.canonical_space(law, ("a", "b"))
    # tiny epsilon makes the covering box keep every atom, and the tiny delta
    # gives each atom its own cell, so the kernel is close to the identity
    part = lc.build_partition(law, space.component_laws(), delta=1e-3, epsilon=1e-9)
    kernel, mu = lc.construct_kernel(space, law, part, epsilon=1e-6)
    assert np.all(np.diag(kernel.matrix) >= 1.0 - 1e-5)
    assert mu.sum() == pytest.approx(1.0, abs=1e-10)


def test_single_cell_collapse(rng):
    law = random_density_law(rng, 5, 1)
    space = lc.canonical_space(law, ("a",))
    # huge delta: every atom lands in one ball
    part = lc.build_partition(law, space.component_laws(), delta=1e3, epsilon=0.9)
    kernel, _ = lc.construct_kernel(space, law, part, epsilon=0.3)
    for row in kernel.matrix:
        assert np.allclose(row, space.dominating, atol=1e-12)


def test_construct_kernel_epsilon_zero_identical_sides(rng):
    law = random_density_law(rng, 6, 2)
    space = lc.canonical_space(law, ("a", "b"))
    part = lc.build_partition(law, space.component_laws(), delta=0.5, epsilon=0.2)
    kernel, mu = lc.construct_kernel(space, law, part, epsilon=0.0)
    assert mu is None
    marginal = law.weights @ kernel.matrix
    assert np.max(np.abs(marginal - space.dominating)) <= 1e-10


def test_construct_kernel_condition_error_carries_cell():
    q = lc.PointDistribution([[0.0], [1.0]], [0.5, 0.5])
    q_space = lc.canonical_space(
        lc.PointDistribution([[0.5], [1.5]], [0.5, 0.5]), ("t",)
    )
    part = lc.build_partition(q, [q], delta=0.1, epsilon=0.05)
    p_space = lc.canonical_space(lc.PointDistribution([[1.0]], [1.0]), ("t",))
    with pytest.raises(lc.ConditionError) as err:
        lc.construct_kernel(p_space, q, part, epsilon=0.05)
    assert err.value.cell is not None


def test_repair_measure_is_probability(rng):
    for seed in range(10):
        local = np.random.default_rng(seed)
        p, q, _ = coupling_instance(local, 2, 8, 3, epsilon=0.2)
        p_space = lc.canonical_space(p, ("a", "b"))
        q_space = lc.canonical_space(q, ("a", "b"))
        part = lc.build_partition(q, q_space.component_laws(), delta=0.4, epsilon=0.2)
        kernel, mu = lc.construct_kernel(p_space, q, part, epsilon=0.2)
        assert np.all(mu >= 0.0)
        assert mu.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(kernel.matrix.sum(axis=1), 1.0, atol=1e-12)
        marginal = q.weights @ kernel.matrix
        assert np.max(np.abs(marginal - p_space.dominating)) <= 1e-10


# -- coupling measure ---------------------------------------------------------


def test_coupling_measure_marginals_and_disintegration(rng):
    p, q, _ = coupling_instance(rng, 2, 8, 3, epsilon=0.15)
    p_space = lc.canonical_space(p, ("a", "b"))
    q_space = lc.canonical_space(q, ("a", "b"))
    part = lc.build_partition(q, q_space.component_laws(), delta=0.5, epsilon=0.15)
    kernel, _ = lc.construct_kernel(p_space, q, part, epsilon=0.15)
    measure = lc.build_coupling_measure(p_space, q, part, epsilon=0.15)
    assert np.allclose(measure.matrix.sum(axis=1), q.weights, atol=1e-10)
    assert np.allclose(measure.matrix.sum(axis=0), p_space.dominating, atol=1e-10)
    assert np.allclose(
        measure.matrix, q.weights[:, None] * kernel.matrix, atol=1e-12
    )


def test_coupling_measure_matched_part_stays_in_cells(rng):
    p, q, _ = coupling_instance(rng, 2, 6, 2, epsilon=0.2)
    p_space = lc.canonical_space(p, ("a", "b"))
    q_space = lc.canonical_space(q, ("a", "b"))
    part = lc.build_partition(q, q_space.component_laws(), delta=0.5, epsilon=0.2)
    measure = lc.build_coupling_measure(p_space, q, part, epsilon=0.2)
    q_keys = part.locate(q.points)
    p_keys = part.locate(p_space.lr_map)
    for j, qk in enumerate(q_keys):
        for w, pk in enumerate(p_keys):
            if measure.matched_part[j, w] > 0.0:
                assert qk == pk


def test_coupling_measure_diagonal_when_identical(rng):
    law = random_density_law(rng, 5, 2)
    space = lc.canonical_space(law, ("a", "b"))
    part = lc.build_partition(law, space.component_laws(), delta=1e-4, epsilon=1e-9)
    measure = lc.build_coupling_measure(space, law, part, epsilon=0.0)
    off_diag = measure.matrix - np.diag(np.diag(measure.matrix))
    assert np.max(np.abs(off_diag)) <= 1e-12


# -- certified bound ----------------------------------------------------------


def test_certify_bound_identical_sides_small(rng):
    law = random_density_law(rng, 6, 2)
    space = lc.canonical_space(law, ("a", "b"))
    part = lc.build_partition(law, space.component_laws(), delta=0.01, epsilon=1e-9)
    kernel, _ = lc.construct_kernel(space, law, part, epsilon=1e-4)
    cert = lc.certify_bound(space, space, kernel, part, delta=0.01, epsilon=1e-4)
    assert cert.achieved <= cert.bound + 1e-9
    assert cert.achieved <= 0.01


def test_certify_bound_random_instances_with_lp_cross_check(rng):
    for seed in range(10):
        local = np.random.default_rng(1000 + seed)
        p, q, _ = coupling_instance(local, 3, 12, 4, epsilon=0.1)
        p_space = lc.canonical_space(p, ("a", "b", "c"))
        q_space = lc.canonical_space(q, ("a", "b", "c"))
        part = lc.build_partition(q, q_space.component_laws(), delta=0.5, epsilon=0.1)
        kernel, _ = lc.construct_kernel(p_space, q, part, epsilon=0.1)
        cert = lc.certify_bound(p_space, q_space, kernel, part, delta=0.5, epsilon=0.1)
        assert cert.bound == pytest.approx(1.4)
        assert cert.achieved <= cert.bound + 1e-9
        lp = lc.deficiency(q_space.base, p_space.base)
        assert lp.value <= cert.achieved + 1e-7
        # the L1 coupling distances upper-bound the attained total variations
        pushed = q_space.base.probs @ kernel.matrix
        for i in range(3):
            attained = lc.total_variation(pushed[i], p_space.base.probs[i])
            assert attained <= 2.0 * cert.coupling_l1[i] / 2.0 + cert.bound  # sanity envelope
        assert all(m <= 0.1 + 1e-12 for m in cert.remainder_masses)


def test_certify_bound_rejects_inconsistent_sides(rng):
    p, q, _ = coupling_instance(rng, 2, 6, 2, epsilon=0.2)
    p_space = lc.canonical_space(p, ("a", "b"))
    q_space = lc.canonical_space(q, ("x", "y"))
    part = lc.build_partition(q, q_space.component_laws(), delta=0.5, epsilon=0.2)
    kernel, _ = lc.construct_kernel(p_space, q, part, epsilon=0.2)
    with pytest.raises(lc.DimensionError):
        lc.certify_bound(p_space, q_space, kernel, part, 0.5, 0.2)


def test_refining_delta_never_raises_the_bound(rng):
    p, q, _ = coupling_instance(rng, 2, 10, 3, epsilon=0.2)
    p_space = lc.canonical_space(p, ("a", "b"))
    q_space = lc.canonical_space(q, ("a", "b"))
    bounds = []
    for delta in (0.8, 0.4, 0.2):
        part = lc.build_partition(q, q_space.component_laws(), delta=delta, epsilon=0.2)
        kernel, _ = lc.construct_kernel(p_space, q, part, epsilon=0.2)
        cert = lc.certify_bound(p_space, q_space, kernel, part, delta, 0.2)
        bounds.append(cert.bound)
    assert bounds[0] >= bounds[1] >= bounds[2]
