import json

import numpy as np
import pytest

from twoscale import (
    FeatureMap,
    FiniteMdp,
    Policy,
    Transition,
    importance_weight,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    random_features,
    random_mdp,
    rho_table,
    sample_step,
    save_mdp,
    tabular_features,
    validate_mdp,
)
from twoscale.oracle import behavior_matrix, stationary_distribution
from twoscale.presets import GO, STAY, chain3


class TestValidateMdp:
    def test_chain3_is_valid(self, chain3_instance):
        mdp, pi, pi_b, _ = chain3_instance
        report = validate_mdp(mdp, pi, pi_b)
        assert report.ok
        assert report.violations == ()

    def test_coverage_violation_located(self):
        mdp, pi, _ = chain3()
        # behavior puts zero mass on the action the target always takes in state 0
        probs = np.full((3, 2), 0.5)
        probs[0] = [1.0, 0.0]
        report = validate_mdp(mdp, pi, Policy(probs))
        coverage = [v for v in report.violations if v.kind == "coverage"]
        assert [v.where for v in coverage] == [(0, GO)]

    def test_broken_transition_row_reported(self):
        mdp, pi, pi_b = chain3()
        p = mdp.p.copy()
        p[1, STAY, 1] = 0.98
        broken = FiniteMdp(3, 2, p, mdp.r, mdp.gamma)
        report = validate_mdp(broken, pi, pi_b)
        rows = [v for v in report.violations if v.kind == "row-stochastic"]
        assert [v.where for v in rows] == [("p", 1, STAY)]

    def test_gamma_out_of_range(self):
        mdp, pi, pi_b = chain3()
        bad = FiniteMdp(3, 2, mdp.p, mdp.r, 1.5)
        assert "gamma-range" in validate_mdp(bad, pi, pi_b).kinds()

    def test_negative_probability(self):
        mdp, pi, pi_b = chain3()
        p = mdp.p.copy()
        p[0, STAY, 0] = 1.2
        p[0, STAY, 1] = -0.2
        report = validate_mdp(FiniteMdp(3, 2, p, mdp.r, 0.9), pi, pi_b)
        assert "negative-probability" in report.kinds()

    def test_shape_mismatch_raises(self):
        mdp, pi, _ = chain3()
        with pytest.raises(ValueError, match="shape"):
            validate_mdp(mdp, pi, Policy.uniform(4, 2))


class TestImportanceWeight:
    def test_identical_policies_give_one(self, random5_instance):
        mdp, _, pi_b, _ = random5_instance
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                assert importance_weight(pi_b, pi_b, s, a) == 1.0

    def test_chain3_values(self):
        _, pi, pi_b = chain3()
        assert importance_weight(pi, pi_b, 0, GO) == 2.0
        assert importance_weight(pi, pi_b, 0, STAY) == 0.0

    def test_zero_denominator_raises(self):
        _, pi, _ = chain3()
        degenerate = Policy.greedy(3, 2, STAY)
        with pytest.raises(ValueError, match="zero probability"):
            importance_weight(pi, degenerate, 1, GO)

    def test_behavior_average_of_rho_is_one(self):
        # sum_a pi_b(a|s) rho(s,a) = sum_a pi(a|s) = 1 exactly
        rng = np.random.default_rng(5)
        for trial in range(20):
            S, A = int(rng.integers(2, 8)), int(rng.integers(1, 5))
            pi = Policy(_random_rows(rng, S, A))
            pi_b = Policy(_random_rows(rng, S, A))
            avg = (pi_b.probs * rho_table(pi, pi_b)).sum(axis=1)
            assert np.abs(avg - 1.0).max() < 1e-12


def _random_rows(rng, S, A):
    table = rng.random((S, A)) + 1e-3
    return table / table.sum(axis=1, keepdims=True)


class TestSampleStep:
    def test_chain3_deterministic_transitions(self):
        mdp, _, pi_b = chain3()
        rng = np.random.default_rng(0)
        for _ in range(50):
            tr = sample_step(mdp, pi_b, 0, rng)
            if tr.a == GO:
                assert tr == Transition(0, GO, mdp.r[0, GO, 1], 1)
            else:
                assert tr == Transition(0, STAY, mdp.r[0, STAY, 0], 0)

    def test_point_mass_policy_loops(self):
        mdp, _, _ = chain3()
        stay_always = Policy.greedy(3, 2, STAY)
        rng = np.random.default_rng(3)
        for s in range(3):
            tr = sample_step(mdp, stay_always, s, rng)
            assert tr == Transition(s, STAY, float(mdp.r[s, STAY, s]), s)

    def test_seed_replay_is_bit_identical(self, random5_instance):
        mdp, _, pi_b, _ = random5_instance
        first = [sample_step(mdp, pi_b, 2, np.random.default_rng(42)) for _ in range(1)]
        second = [sample_step(mdp, pi_b, 2, np.random.default_rng(42)) for _ in range(1)]
        assert first == second
        rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
        s = 0
        for _ in range(200):
            ta = sample_step(mdp, pi_b, s, rng_a)
            tb = sample_step(mdp, pi_b, s, rng_b)
            assert ta == tb
            s = ta.s_next

    def test_out_of_range_state(self):
        mdp, _, pi_b = chain3()
        with pytest.raises(ValueError, match="out of range"):
            sample_step(mdp, pi_b, 7, np.random.default_rng(0))

    def test_reward_noise_is_bounded_and_centered(self):
        mdp, _, pi_b = chain3()
        rng = np.random.default_rng(1)
        noise = []
        for _ in range(5000):
            tr = sample_step(mdp, pi_b, 0, rng, reward_noise=0.25)
            noise.append(tr.reward - mdp.r[tr.s, tr.a, tr.s_next])
        noise = np.asarray(noise)
        assert np.abs(noise).max() <= 0.25
        assert abs(noise.mean()) < 0.02

    def test_visit_frequencies_match_stationary_distribution(self, random5_instance):
        mdp, _, pi_b, _ = random5_instance
        nu = stationary_distribution(behavior_matrix(mdp, pi_b))
        n = 1_000_000
        counts = np.zeros(mdp.n_states)
        rng = np.random.default_rng(123)
        s = 0
        for _ in range(n):
            s = sample_step(mdp, pi_b, s, rng).s_next
            counts[s] += 1
        bound = 3.0 * np.sqrt(mdp.n_states / n)
        assert np.abs(counts / n - nu).max() < bound


class TestRandomMdp:
    def test_dense_instance_is_valid(self):
        mdp = random_mdp(5, 2, sparsity=0.0, seed=7)
        report = validate_mdp(mdp, Policy.uniform(5, 2), Policy.uniform(5, 2))
        assert report.ok

    def test_single_action_chain(self):
        mdp = random_mdp(2, 1, sparsity=0.0, seed=0)
        assert validate_mdp(mdp, Policy.uniform(2, 1), Policy.uniform(2, 1)).ok

    def test_sparse_rows_keep_two_successors(self):
        mdp = random_mdp(10, 2, sparsity=0.9, seed=4)
        assert ((mdp.p > 0).sum(axis=2) >= 2).all()
        assert validate_mdp(mdp, Policy.uniform(10, 2), Policy.uniform(10, 2)).ok

    def test_too_few_states_rejected(self):
        with pytest.raises(ValueError, match="n_states"):
            random_mdp(1, 1, 0.0, 0)

    def test_reproducible(self):
        a = random_mdp(6, 3, sparsity=0.5, seed=9)
        b = random_mdp(6, 3, sparsity=0.5, seed=9)
        assert np.array_equal(a.p, b.p) and np.array_equal(a.r, b.r)


class TestFeatures:
    def test_tabular_is_identity(self):
        assert np.array_equal(tabular_features(3).phi, np.eye(3))

    def test_random_features_full_rank(self):
        phi = random_features(5, 3, seed=1)
        norms = np.linalg.norm(phi.phi, axis=0)
        assert np.linalg.svd(phi.phi / norms, compute_uv=False).min() > 1e-8

    def test_random_features_unit_rows(self):
        phi = random_features(8, 4, seed=2)
        assert np.allclose(np.linalg.norm(phi.phi, axis=1), 1.0)

    def test_dimension_exceeding_states_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            random_features(3, 5, seed=0)

    def test_rank_deficient_matrix_rejected(self):
        with pytest.raises(ValueError, match="full column rank"):
            FeatureMap(np.ones((4, 2)))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        mdp = random_mdp(4, 2, sparsity=0.3, seed=2)
        again = mdp_from_dict(mdp_to_dict(mdp))
        assert np.array_equal(again.p, mdp.p)
        assert np.array_equal(again.r, mdp.r)
        assert again.gamma == mdp.gamma
        path = tmp_path / "mdp.json"
        save_mdp(mdp, path)
        loaded = load_mdp(path)
        assert np.array_equal(loaded.p, mdp.p)
        # schema field names are fixed
        doc = json.loads(path.read_text())
        assert set(doc) == {"n_states", "n_actions", "gamma", "p", "r"}

    def test_missing_field_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            mdp_from_dict({"n_states": 2, "n_actions": 1, "gamma": 0.9, "p": []})


class TestImmutability:
    def test_arrays_are_read_only(self, chain3_instance):
        mdp, pi, _, phi = chain3_instance
        for arr in (mdp.p, mdp.r, pi.probs, phi.phi):
            with pytest.raises(ValueError):
                arr[0] = 0
