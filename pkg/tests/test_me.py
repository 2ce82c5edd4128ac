"""Tests for the minimum-error solver: criteria, faces, POVMs, KKT."""

import math

import numpy as np
import pytest

from blochdisc.core import (BlochVector, Effect, Povm, ValidationError,
                            WeightedEnsemble, identity_povm,
                            success_probability)
from blochdisc.me import (DegenerateFaceError, InfeasibleFaceError,
                          affine_dimension, check_no_measurement,
                          construct_povm_from_v, convex_coefficients,
                          helstrom_value, in_relative_interior, kkt_verify,
                          pair_z, solve_me, trivial_optimal_check)
from blochdisc.oracle import MinimaxOptions, dual_minimax, max_phi
from helpers import (boundary_pair, helstrom_pair, random_ensemble,
                     random_me_instance, rotate_ensemble, rotation_matrix,
                     tetrahedron_ensemble)


class TestCheckNoMeasurement:
    def test_aligned_short_vectors_trivial(self):
        ens = WeightedEnsemble.of([(0.6, (0, 0, 1 / 6)), (0.4, (0, 0, 0.5))])
        # eps_2 = 0.2 >= lam_2 = |0.1 - 0.2| = 0.1
        tc = check_no_measurement(ens)
        assert tc.trivial
        assert tc.eps[1] == pytest.approx(0.2, abs=1e-15)
        assert tc.lam[1] == pytest.approx(0.1, abs=1e-15)

    def test_equal_priors_not_trivial(self):
        tc = check_no_measurement(helstrom_pair())
        assert not tc.trivial
        assert tc.eps[1] == 0.0
        assert tc.lam[1] == pytest.approx(math.sqrt(0.5), abs=1e-15)

    def test_boundary_flagged(self):
        tc = check_no_measurement(boundary_pair())
        assert tc.trivial
        assert 1 in tc.boundary
        # the dual oracle agrees the heaviest weight is optimal
        res = dual_minimax(boundary_pair())
        assert res.s_star == pytest.approx(0.6, abs=1e-9)

    def test_spec_arithmetic_instance_is_not_trivial(self):
        # eps_2 = 0.8 < lam_2 = 0.82 here, so a measurement strictly helps
        ens = WeightedEnsemble.of([(0.9, (0, 0, 1)), (0.1, (0, 0, 0.8))])
        tc = check_no_measurement(ens)
        assert not tc.trivial
        assert tc.lam[1] == pytest.approx(0.82, abs=1e-12)
        res = dual_minimax(ens)
        assert res.s_star == pytest.approx(0.91, abs=1e-9)


class TestTrivialOptimalCheck:
    def test_identity_always_optimal(self):
        ens = WeightedEnsemble.of([(0.6, (0, 0, 1 / 6)), (0.4, (0, 0, 0.5))])
        assert trivial_optimal_check(ens, identity_povm(2))

    def test_boundary_split_allowed_along_axis(self):
        ens = boundary_pair()
        # m_2 - m_1 points along -z; any weight on outcome 2 must use it
        povm = Povm((Effect(0.7, BlochVector(0, 0, 0.3 / 0.7)),
                     Effect(0.3, BlochVector(0, 0, -1))))
        assert trivial_optimal_check(ens, povm)

    def test_strict_case_forbids_weight(self):
        ens = WeightedEnsemble.of([(0.6, (0, 0, 1 / 6)), (0.4, (0, 0, 0.5))])
        povm = Povm((Effect(0.9, BlochVector(0, 0, 1 / 9)),
                     Effect(0.1, BlochVector(0, 0, -1))))
        assert not trivial_optimal_check(ens, povm)

    def test_wrong_axis_on_boundary_rejected(self):
        ens = boundary_pair()
        povm = Povm((Effect(0.7, BlochVector(0, 0, -0.3 / 0.7)),
                     Effect(0.3, BlochVector(0, 0, 1))))
        assert not trivial_optimal_check(ens, povm)

    def test_contract_violation_outside_regime(self):
        with pytest.raises(ValidationError):
            trivial_optimal_check(helstrom_pair(), identity_povm(2))


class TestPairZ:
    def test_symmetric_pair_midpoint(self):
        v = pair_z(helstrom_pair(), 0, 1)
        assert np.allclose(v, [0.25, 0, 0.25], atol=1e-15)
        ens = helstrom_pair()
        from blochdisc.core import phi
        assert phi(ens, 0, v) == pytest.approx(0.5 + math.sqrt(0.125), abs=1e-15)

    def test_boundary_segment_absent(self):
        assert pair_z(boundary_pair(), 0, 1) is None

    def test_antipodal_pair(self):
        ens = WeightedEnsemble.of([(0.7, (0, 0, 1)), (0.3, (0, 0, -1))])
        v = pair_z(ens, 0, 1)
        assert np.allclose(v, [0, 0, 0.4], atol=1e-15)
        from blochdisc.core import phi
        assert phi(ens, 0, v) == pytest.approx(1.0, abs=1e-15)
        assert phi(ens, 1, v) == pytest.approx(1.0, abs=1e-15)

    def test_requires_distinct_indices(self):
        with pytest.raises(ValidationError):
            pair_z(helstrom_pair(), 1, 1)


class TestConvexCoefficients:
    def test_unique_representation(self):
        pts = np.array([[0, 0, 0.7], [0, 0, -0.3]])
        c = convex_coefficients(pts, [0, 0, 0.4])
        assert np.allclose(c, [0.7, 0.3], atol=1e-12)

    def test_outside_hull_rejected(self):
        pts = np.array([[0, 0, 0.7], [0, 0, -0.3]])
        with pytest.raises(InfeasibleFaceError):
            convex_coefficients(pts, [0, 0, 0.9])

    def test_off_affine_hull_rejected(self):
        pts = np.array([[0, 0, 0.7], [0, 0, -0.3]])
        with pytest.raises(InfeasibleFaceError):
            convex_coefficients(pts, [0.5, 0, 0.4])

    def test_interior_of_dependent_face(self):
        ens_pts = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]])
        assert in_relative_interior(ens_pts, [0.0, 0.0, 0.0])
        assert not in_relative_interior(ens_pts, [1.0, 0.0, 0.0])
        assert not in_relative_interior(ens_pts, [0.0, 0.0, 0.5])


class TestConstructPovm:
    def test_two_state_symmetric(self):
        povm = construct_povm_from_v(helstrom_pair(), [0.25, 0, 0.25], [0, 1])
        assert np.allclose(povm.ps, [0.5, 0.5], atol=1e-12)
        # axis of outcome 0 points from v toward the weighted point 0.5*z
        axis = np.array([-0.25, 0, 0.25]) / np.linalg.norm([0.25, 0, 0.25])
        assert np.allclose(povm.effects[0].u.as_array(), axis, atol=1e-12)
        assert np.allclose(povm.effects[1].u.as_array(), -axis, atol=1e-12)

    def test_antipodal_weighted_pair(self):
        ens = WeightedEnsemble.of([(0.7, (0, 0, 1)), (0.3, (0, 0, -1))])
        povm = construct_povm_from_v(ens, [0, 0, 0.4], [0, 1])
        assert np.allclose(povm.ps, [0.5, 0.5], atol=1e-12)
        assert np.allclose(povm.effects[0].u.as_array(), [0, 0, 1], atol=1e-12)
        assert np.allclose(povm.effects[1].u.as_array(), [0, 0, -1], atol=1e-12)

    def test_degenerate_point_rejected(self):
        ens = helstrom_pair()
        with pytest.raises(DegenerateFaceError):
            construct_povm_from_v(ens, ens.points[0], [0, 1])

    def test_infeasible_point_rejected(self):
        with pytest.raises(InfeasibleFaceError):
            construct_povm_from_v(helstrom_pair(), [2.0, 0, 0], [0, 1])


class TestKktVerify:
    def test_solver_output_passes(self):
        rng = np.random.default_rng(71)
        for _ in range(15):
            ens = random_me_instance(rng, int(rng.integers(2, 6)))
            sol = solve_me(ens)
            report = kkt_verify(ens, sol.povm, sol.certificate.s, sol.v_star,
                                1e-8)
            assert report.passed, report.residuals

    def test_swapped_axes_fail_slackness(self):
        ens = helstrom_pair()
        sol = solve_me(ens)
        e0, e1 = sol.povm.effects
        swapped = Povm((Effect(e0.p, e1.u), Effect(e1.p, e0.u)))
        report = kkt_verify(ens, swapped, sol.certificate.s, sol.v_star, 1e-8)
        assert not report.passed
        assert report.residuals["C0"] > 1e-3

    def test_trivial_assignment_passes(self):
        ens = WeightedEnsemble.of([(0.6, (0, 0, 1 / 6)), (0.4, (0, 0, 0.5))])
        report = kkt_verify(ens, identity_povm(2), 0.6, ens.points[0], 1e-8)
        assert report.passed


class TestSolveMe:
    def test_equal_prior_pair(self):
        sol = solve_me(helstrom_pair())
        assert sol.p_guess == pytest.approx(0.5 * (1 + math.sqrt(0.5)), abs=1e-9)
        assert not sol.trivial
        assert (0, 1) in sol.active_sets
        assert sol.kkt.passed

    def test_trivial_branch(self):
        ens = WeightedEnsemble.of([(0.6, (0, 0, 1 / 6)), (0.4, (0, 0, 0.5))])
        sol = solve_me(ens)
        assert sol.trivial
        assert sol.p_guess == 0.6
        assert sol.active_sets == ((0,),)
        assert sol.povm.effects[0].p == 1.0

    def test_tetrahedron_all_active(self):
        sol = solve_me(tetrahedron_ensemble())
        assert sol.p_guess == pytest.approx(0.5, abs=1e-9)
        assert np.allclose(sol.v_star, np.zeros(3), atol=1e-7)
        assert max(len(s) for s in sol.active_sets) == 4
        # minimal support obeys the affine-dimension bound
        assert len(sol.active_sets[0]) <= affine_dimension(
            tetrahedron_ensemble().points) + 1

    def test_strong_duality_on_randoms(self):
        rng = np.random.default_rng(73)
        for _ in range(25):
            ens = random_me_instance(rng, int(rng.integers(2, 7)))
            sol = solve_me(ens)
            achieved = success_probability(ens, sol.povm)
            assert abs(achieved - sol.p_guess) <= 1e-8
            assert sol.p_guess >= ens.weights[0] - 1e-12

    def test_prop1_equivalence_both_directions(self):
        rng = np.random.default_rng(79)
        for _ in range(40):
            ens = random_me_instance(rng, int(rng.integers(2, 6)))
            tc = check_no_measurement(ens)
            s_star = dual_minimax(ens).s_star
            assert tc.trivial == (abs(s_star - ens.weights[0]) <= 1e-9)

    def test_active_set_values_equal(self):
        rng = np.random.default_rng(83)
        for _ in range(15):
            ens = random_me_instance(rng, 5)
            sol = solve_me(ens)
            if sol.trivial:
                continue
            from blochdisc.core import phi
            for face in sol.active_sets:
                for i in face:
                    assert phi(ens, i, sol.v_star) == pytest.approx(
                        sol.p_guess, abs=1e-6)

    def test_rotation_covariance(self):
        rng = np.random.default_rng(89)
        for _ in range(10):
            ens = random_me_instance(rng, int(rng.integers(2, 6)))
            rot = rotation_matrix(rng)
            sol = solve_me(ens)
            sol_r = solve_me(rotate_ensemble(ens, rot))
            assert abs(sol.p_guess - sol_r.p_guess) <= 1e-9
            if not sol.trivial:
                assert np.linalg.norm(rot @ sol.v_star - sol_r.v_star) <= 1e-6

    def test_minimal_support_bound(self):
        rng = np.random.default_rng(97)
        for _ in range(15):
            n = int(rng.integers(5, 7))
            ens = random_me_instance(rng, n)
            sol = solve_me(ens)
            if sol.trivial:
                continue
            bound = affine_dimension(ens.points) + 1
            assert len(sol.active_sets[0]) <= bound
            # a zero effect exists whenever fewer outcomes than states fire
            assert min(e.p for e in sol.povm.effects) <= 1e-12

    def test_unnormalized_ensemble(self):
        ens = WeightedEnsemble.of([(0.7, (0, 0, 1)), (0.7, (1, 0, 0))])
        sol = solve_me(ens)
        lam = float(np.linalg.norm(ens.points[0] - ens.points[1]))
        assert sol.p_guess == pytest.approx(0.5 * (1.4 + lam), abs=1e-9)

    def test_planar_four_state_zero_effect(self):
        # coplanar weighted points force a null outcome (affine dim 2)
        ens = WeightedEnsemble.of([(0.25, (1, 0, 0)), (0.25, (-1, 0, 0)),
                                   (0.25, (0, 1, 0)), (0.25, (0.6, 0.8, 0))])
        sol = solve_me(ens)
        assert affine_dimension(ens.points) == 2
        assert len(sol.active_sets[0]) <= 3

    def test_helstrom_value_helper(self):
        assert helstrom_value(helstrom_pair()) == pytest.approx(
            0.5 * (1 + math.sqrt(0.5)), abs=1e-15)
        assert helstrom_value(boundary_pair()) == pytest.approx(0.6, abs=1e-12)


class TestWeakDuality:
    def test_random_povm_vs_random_dual_point(self):
        rng = np.random.default_rng(101)
        ens = random_ensemble(rng, 4)
        sol = solve_me(ens)
        for _ in range(50):
            v = rng.normal(size=3) * 0.7
            assert success_probability(ens, sol.povm) <= max_phi(ens, v) + 1e-12


class TestUniqueness:
    def test_two_starts_agree(self):
        rng = np.random.default_rng(103)
        for _ in range(10):
            ens = random_me_instance(rng, 4)
            a = dual_minimax(ens, MinimaxOptions(seed=3))
            b = dual_minimax(ens, MinimaxOptions(seed=1009))
            if a.s_star > ens.weights[0] + 1e-9:
                assert np.linalg.norm(a.v_star - b.v_star) <= 1e-7
