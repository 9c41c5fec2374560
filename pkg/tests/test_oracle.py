import math
from collections import Counter

import numpy as np
import pytest

from gcrp import _kernels
from gcrp import normalizers as nz
from gcrp.errors import CapExceeded
from gcrp.model import validate_params
from gcrp.oracle import compare_to_mc, enumerate_laws, mean_martingale, tv_distance
from gcrp.rng import derive_replica_seed

P55 = validate_params(0.5, 0.5)
PARAM_SETS = [(0.5, 0.5), (0.25, 1.0), (0.75, -0.25)]


class TestEnumerate:
    def test_n1_deterministic(self):
        law = enumerate_laws(P55, 1)[1]
        assert law.probs == {(1,): 1.0}
        assert law.marginal_v() == {1: 1.0}

    def test_v2_split(self):
        law = enumerate_laws(P55, 2)[2]
        assert law.marginal_v()[1] == pytest.approx(1 / 3, abs=1e-15)
        assert law.marginal_v()[2] == pytest.approx(2 / 3, abs=1e-15)

    @pytest.mark.parametrize("alpha,theta", PARAM_SETS)
    def test_probabilities_sum_to_one(self, alpha, theta):
        p = validate_params(alpha, theta)
        laws = enumerate_laws(p, 10)
        for law in laws.values():
            assert abs(law.total() - 1.0) <= 1e-12

    def test_support_satisfies_state_invariants(self):
        laws = enumerate_laws(P55, 9)
        for n, law in laws.items():
            for shape in law.probs:
                assert sum(shape) == n
                assert all(s >= 1 for s in shape)

    def test_bounded_parts_support_capped(self):
        p = validate_params(-0.5, 1.5)
        laws = enumerate_laws(p, 10)
        for law in laws.values():
            assert max(len(s) for s in law.probs) <= p.m

    def test_dp_consistent_with_model_transition_law(self):
        """Pushing the exact law at n through transition_law/apply_move of
        the model module reproduces the law at n+1 (cross-module check; the
        enumerator has its own inline transition arithmetic)."""
        from gcrp.model import (
            JoinSize,
            NEW_PART,
            SizeClassState,
            apply_move,
            transition_law,
        )

        for alpha, theta in PARAM_SETS + [(-0.5, 1.5)]:
            p = validate_params(alpha, theta)
            laws = enumerate_laws(p, 7)
            for n in range(1, 7):
                pushed: dict[tuple, float] = {}
                for shape, prob in laws[n].probs.items():
                    counts = dict(Counter(shape))
                    state = SizeClassState(n=n, counts=counts, num_parts=len(shape))
                    law = transition_law(state, p)
                    if law.new_part_prob > 0:
                        nxt = apply_move(state, NEW_PART)
                        key = tuple(sorted(
                            [k for k, c in nxt.counts.items() for _ in range(c)],
                            reverse=True))
                        pushed[key] = pushed.get(key, 0.0) + prob * law.new_part_prob
                    for k, w in law.join_weight.items():
                        nxt = apply_move(state, JoinSize(k))
                        key = tuple(sorted(
                            [kk for kk, c in nxt.counts.items() for _ in range(c)],
                            reverse=True))
                        pushed[key] = pushed.get(key, 0.0) + prob * w
                ref = laws[n + 1].probs
                assert set(pushed) == set(ref)
                for key, val in pushed.items():
                    assert val == pytest.approx(ref[key], rel=1e-12, abs=1e-15)

    def test_mean_v_over_phi_equals_theta_seq(self):
        """E[V_n/phi_n] = theta_n exactly, for every n <= 10."""
        for alpha, theta in PARAM_SETS:
            p = validate_params(alpha, theta)
            laws = enumerate_laws(p, 10)
            for n, law in laws.items():
                lhs = law.mean_v() / math.exp(nz.log_phi(n, p))
                assert lhs == pytest.approx(nz.theta_seq_V(n, p), abs=1e-12)

    def test_mean_martingale_vanishes(self):
        laws = enumerate_laws(P55, 10)
        for law in laws.values():
            assert abs(mean_martingale(law, P55)) <= 1e-12

    def test_cap(self):
        with pytest.raises(CapExceeded):
            enumerate_laws(P55, 13)
        # explicit override allows going past the default cap
        laws = enumerate_laws(P55, 13, cap=13)
        assert abs(laws[13].total() - 1.0) <= 1e-12


class TestCompare:
    def test_exact_empirical_tv_zero(self):
        law = enumerate_laws(P55, 4)[4]
        n_samples = 10_000
        v_counts = {v: round(p * n_samples) for v, p in law.marginal_v().items()}
        # rounding may be off by a count; rescale to the rounded total
        total = sum(v_counts.values())
        assert tv_distance(law.marginal_v(), v_counts, total) <= 1e-4

    def test_shift_is_detected(self):
        """Moving a mass delta between atoms shifts TV by exactly delta."""
        law = enumerate_laws(P55, 4)[4]
        n_samples = 10_000
        counts = {v: round(p * n_samples) for v, p in law.marginal_v().items()}
        moved = 1000
        counts[1] -= moved
        counts[4] += moved
        tv = tv_distance(law.marginal_v(), counts, n_samples)
        assert tv == pytest.approx(moved / n_samples, abs=1e-3)

    def test_mc_agreement_small(self):
        n, reps = 6, 200_000
        seeds = np.array(
            [derive_replica_seed(314, r) for r in range(reps)], dtype=np.uint64
        )
        out_v = np.zeros((reps, n), dtype=np.int16)
        out_n1 = np.zeros((reps, n), dtype=np.int16)
        _kernels.sim_small_batch(P55.alpha, P55.theta, 0, n, seeds, out_v, out_n1)
        law = enumerate_laws(P55, n)[n]
        cmp = compare_to_mc(
            law,
            dict(Counter(out_v[:, -1].tolist())),
            dict(Counter(out_n1[:, -1].tolist())),
            reps,
        )
        assert cmp.tv_v < 0.005 and cmp.tv_n1 < 0.005
        assert cmp.chi_square_p_v > 1e-3 and cmp.chi_square_p_n1 > 1e-3
