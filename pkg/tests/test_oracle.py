"""Tests for the dual minimax oracle, certification, and the strategy scan."""

import math

import numpy as np
import pytest

from blochdisc.core import WeightedEnsemble, identity_povm, success_probability
from blochdisc.me import construct_povm_from_v, solve_me
from blochdisc.oracle import (Certification, ConvergenceError, MinimaxOptions,
                              certify, dual_minimax, max_phi,
                              primal_strategy_scan)
from helpers import (bb84_instance, edge_instance, helstrom_pair,
                     random_ensemble, random_trivial_mepi, tetrahedron_ensemble)


class TestDualMinimax:
    def test_equal_prior_pair(self):
        res = dual_minimax(helstrom_pair())
        assert res.s_star == pytest.approx(0.5 * (1 + math.sqrt(0.5)), abs=1e-9)
        assert np.allclose(res.v_star, [0.25, 0, 0.25], atol=1e-8)

    def test_trivial_ensemble_exact(self):
        ens = WeightedEnsemble.of([(0.6, (0, 0, 0.1)), (0.4, (0, 0, 0.2))])
        res = dual_minimax(ens)
        assert res.s_star == 0.6
        assert np.array_equal(res.v_star, ens.points[0])

    def test_bb84_product(self):
        from blochdisc.mepi import product_ensemble
        prod = product_ensemble(bb84_instance())
        res = dual_minimax(prod.ensemble)
        assert res.s_star == pytest.approx(0.5 * (1 + math.sqrt(0.5)), abs=1e-9)
        assert np.allclose(res.v_star, [0, 0, 0], atol=1e-8)

    def test_two_state_closed_form_on_randoms(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            ens = random_ensemble(rng, 2)
            w = ens.weights
            lam = float(np.linalg.norm(ens.points[0] - ens.points[1]))
            expected = max(float(w[0]), 0.5 * (float(w[0] + w[1]) + lam))
            res = dual_minimax(ens)
            assert res.s_star == pytest.approx(expected, abs=1e-8)

    def test_seed_determinism_bitwise(self):
        rng = np.random.default_rng(41)
        ens = random_ensemble(rng, 5)
        opts = MinimaxOptions(seed=777)
        a = dual_minimax(ens, opts)
        b = dual_minimax(ens, opts)
        assert a.s_star == b.s_star
        assert np.array_equal(a.v_star, b.v_star)

    def test_cross_seed_point_agreement(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            ens = random_ensemble(rng, int(rng.integers(2, 7)))
            a = dual_minimax(ens, MinimaxOptions(seed=1))
            b = dual_minimax(ens, MinimaxOptions(seed=424242))
            if a.s_star > ens.weights[0] + 1e-9:  # unique minimiser regime
                assert np.linalg.norm(a.v_star - b.v_star) <= 1e-7

    def test_budget_exhaustion_raises_with_best(self):
        ens = helstrom_pair()
        with pytest.raises(ConvergenceError) as exc:
            dual_minimax(ens, MinimaxOptions(max_iters=20))
        assert math.isfinite(exc.value.best_s)

    def test_objective_convexity_probe(self):
        rng = np.random.default_rng(47)
        ens = random_ensemble(rng, 5)
        for _ in range(200):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            t = rng.random()
            assert max_phi(ens, t * a + (1 - t) * b) <= (
                t * max_phi(ens, a) + (1 - t) * max_phi(ens, b) + 1e-12)


class TestCertify:
    def test_solver_output_certifies(self):
        rng = np.random.default_rng(53)
        for _ in range(20):
            ens = random_ensemble(rng, 4)
            sol = solve_me(ens)
            cert = certify(ens, sol.povm, sol.certificate.s, sol.v_star)
            assert cert.passed
            assert cert.gap <= 1e-8

    def test_identity_povm_on_nontrivial_has_gap(self):
        ens = helstrom_pair()
        res = dual_minimax(ens)
        cert = certify(ens, identity_povm(2), res.s_star, res.v_star)
        assert cert.gap == pytest.approx(res.s_star - 0.5, abs=1e-9)
        assert cert.gap > 0
        assert not cert.passed

    def test_perturbed_dual_point_increases_dual(self):
        ens = helstrom_pair()
        sol = solve_me(ens)
        v_off = sol.v_star + np.array([0.01, 0, 0])
        cert = certify(ens, sol.povm, max_phi(ens, v_off), v_off)
        assert cert.dual > sol.p_guess
        assert cert.gap > 0

    def test_weak_duality_on_random_pairs(self):
        # any POVM value never exceeds the dual objective at any point
        rng = np.random.default_rng(59)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            ens = random_ensemble(rng, n)
            sol = solve_me(ens)  # a valid POVM for this ensemble
            v = rng.normal(size=3)
            assert success_probability(ens, sol.povm) <= max_phi(ens, v) + 1e-12


class TestPrimalStrategyScan:
    def test_bb84_close_to_optimum(self):
        mepi = bb84_instance()
        val = primal_strategy_scan(mepi, 720)
        p_post = 0.5 * (1 + math.sqrt(0.5))
        assert val <= p_post + 1e-12
        assert val >= p_post - 5e-4

    def test_trivial_instance_exact(self):
        rng = np.random.default_rng(61)
        mepi = random_trivial_mepi(rng)
        eta1 = sum(sub.weights[0] for sub in mepi.subensembles)
        assert primal_strategy_scan(mepi, 60) == pytest.approx(eta1, abs=1e-15)

    def test_edge_instance_recovers_value(self):
        val = primal_strategy_scan(edge_instance(), 720)
        assert val <= 0.95 + 1e-12
        assert val >= 0.95 - 1e-4

    def test_rejects_other_shapes(self):
        from blochdisc.core import ShapeError
        sub1 = WeightedEnsemble.of([(0.2, (0, 0, 1)), (0.15, (1, 0, 0)),
                                    (0.15, (0, 1, 0))])
        sub2 = WeightedEnsemble.of([(0.3, (0, 1, 0)), (0.2, (0, 0, -1))])
        from blochdisc.core import MepiEnsemble
        with pytest.raises(ShapeError):
            primal_strategy_scan(MepiEnsemble((sub1, sub2)), 10)


class TestTetrahedron:
    def test_symmetric_four_state(self):
        ens = tetrahedron_ensemble()
        res = dual_minimax(ens)
        assert res.s_star == pytest.approx(0.5, abs=1e-9)
        assert np.allclose(res.v_star, np.zeros(3), atol=1e-7)

    def test_tetrahedron_povm_from_origin(self):
        ens = tetrahedron_ensemble()
        povm = construct_povm_from_v(ens, np.zeros(3), [0, 1, 2, 3])
        assert np.allclose(povm.ps, 0.25, atol=1e-12)
        for e, s in zip(povm.effects, ens.states):
            assert np.allclose(e.u.as_array(), s.bloch.as_array(), atol=1e-12)
