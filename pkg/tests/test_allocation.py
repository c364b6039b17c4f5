import math

import numpy as np
import pytest

from mmwave_handover.allocation import (
    ShareRequest,
    allocate,
    max_satisfiable,
    oracle_allocate,
    required_share,
)


def requests_from(shares, capacities, bs=0, ue_offset=0):
    return [
        ShareRequest(ue=ue_offset + k, share=s, capacity=c, bs=bs)
        for k, (s, c) in enumerate(zip(shares, capacities))
    ]


class TestRequiredShare:
    def test_history_already_sufficient(self):
        assert required_share([0.6], r_th=0.25, capacity=2.0) == 0.0

    def test_basic_deficit(self):
        # K=2: (2*0.25 - 0.2) / 2.0 = 0.15
        assert required_share([0.2], r_th=0.25, capacity=2.0) == pytest.approx(0.15)

    def test_inverse_proportional_to_capacity(self):
        assert required_share([0.2], 0.25, 1.0) == pytest.approx(
            2.0 * required_share([0.2], 0.25, 2.0)
        )

    def test_zero_capacity_sentinel(self):
        assert required_share([0.0], 0.25, 0.0) == math.inf

    def test_zero_capacity_with_no_deficit(self):
        assert required_share([1.0], 0.25, 0.0) == 0.0

    def test_longer_window(self):
        # K=4: deficit = 4*0.5 - (0.4+0.3+0.2) = 1.1
        assert required_share([0.4, 0.3, 0.2], 0.5, 2.0) == pytest.approx(0.55)


class TestMaxSatisfiable:
    def test_empty(self):
        assert max_satisfiable([]) == (0, ())

    def test_singleton(self):
        n, sel = max_satisfiable(requests_from([0.4], [1.0]))
        assert n == 1 and sel == (0,)

    def test_spec_triple(self):
        # shares {0.6, 0.5, 0.4}: pairs {0.6,0.4} and {0.5,0.4} fit; N_S = 2;
        # the winner maximizes share * capacity
        shares = [0.6, 0.5, 0.4]
        caps = [1.0, 1.0, 1.0]
        n, sel = max_satisfiable(requests_from(shares, caps))
        assert n == 2
        assert sel == (0, 2)  # 0.6*1 + 0.4*1 = 1.0 beats 0.5 + 0.4 = 0.9

    def test_spec_triple_capacity_flips_winner(self):
        shares = [0.6, 0.5, 0.4]
        caps = [1.0, 3.0, 1.0]
        n, sel = max_satisfiable(requests_from(shares, caps))
        assert n == 2
        assert sel == (1, 2)  # 0.5*3 + 0.4*1 = 1.9 beats 0.6 + 0.4 = 1.0

    def test_all_too_large(self):
        n, sel = max_satisfiable(requests_from([1.2, 1.5], [1.0, 1.0]))
        assert n == 0 and sel == ()

    def test_infinite_share_excluded(self):
        n, sel = max_satisfiable(requests_from([math.inf, 0.3], [1.0, 1.0]))
        assert n == 1 and sel == (1,)

    def test_tie_breaks_to_lowest_indices(self):
        # two disjoint winners with identical score
        shares = [0.5, 0.5, 0.5, 0.5]
        caps = [1.0, 1.0, 1.0, 1.0]
        n, sel = max_satisfiable(requests_from(shares, caps))
        assert n == 2
        assert sel == (0, 1)

    def test_greedy_fallback_beyond_cap(self):
        shares = [0.05 * (k + 1) for k in range(20)]
        caps = [1.0] * 20
        n, sel = max_satisfiable(requests_from(shares, caps), exhaustive_cap=16)
        # greedy: 0.05+0.10+...  cumulative <= 1 -> 5 smallest fit (0.75), 6th hits 1.05
        assert n == 5
        assert sel == (0, 1, 2, 3, 4)


class TestAllocate:
    def test_single_ue_gets_everything(self):
        result = allocate(requests_from([0.4], [1.0]), n_bs=1)
        assert result.share_of(0) == 1.0

    def test_single_ue_even_when_unsatisfiable(self):
        result = allocate(requests_from([1.7], [1.0]), n_bs=1)
        assert result.share_of(0) == 1.0
        assert result.n_satisfied[0] == 0

    def test_spec_remainder_example(self):
        # UEs {0, 1} with c = {2, 1}, shares = {0.3, 0.5}: both satisfied,
        # remainder 0.2 goes to the higher-capacity UE 0 -> {0.5, 0.5}
        result = allocate(requests_from([0.3, 0.5], [2.0, 1.0]), n_bs=1)
        assert result.share_of(0) == pytest.approx(0.5)
        assert result.share_of(1) == pytest.approx(0.5)
        assert result.satisfied[0] == (0, 1)

    def test_remainder_recipient_outside_satisfied_set(self):
        # UE 0 needs more than the whole budget but has the top capacity:
        # it gets only the remainder
        result = allocate(requests_from([1.4, 0.3], [5.0, 1.0]), n_bs=1)
        assert result.satisfied[0] == (1,)
        assert result.share_of(1) == pytest.approx(0.3)
        assert result.share_of(0) == pytest.approx(0.7)

    def test_unserved_ue_gets_zero(self):
        result = allocate(requests_from([0.5, 0.6, 0.9], [1.0, 1.0, 1.0]), n_bs=1)
        # N_S = 2 ({0.5, 0.6} does not fit... 1.1 > 1; feasible pairs: none; singles)
        assert result.n_satisfied[0] == 1
        total = sum(result.share_of(k) for k in range(3))
        assert total <= 1.0 + 1e-9

    def test_multi_bs_groups_independent(self):
        reqs = requests_from([0.3, 0.4], [1.0, 2.0], bs=0) + requests_from(
            [0.2], [1.0], bs=1, ue_offset=2
        )
        result = allocate(reqs, n_bs=3)
        assert result.share_of(2) == 1.0  # alone on BS 1
        assert result.n_satisfied[2] == 0  # BS 2 has nobody
        assert result.share_of(0) == pytest.approx(0.3)
        assert result.share_of(1) == pytest.approx(0.7)  # 0.4 + remainder 0.3


class TestOracleComparison:
    @staticmethod
    def random_instance(rng, max_bs=4, max_per_bs=8):
        n_bs = int(rng.integers(1, max_bs + 1))
        reqs = []
        ue = 0
        for j in range(n_bs):
            n = int(rng.integers(0, max_per_bs + 1))
            for _ in range(n):
                share = float(rng.uniform(0.0, 1.4))
                if rng.random() < 0.1:
                    share = 0.0
                cap = float(rng.uniform(0.1, 10.0))
                reqs.append(ShareRequest(ue=ue, share=share, capacity=cap, bs=j))
                ue += 1
        return reqs, n_bs

    def test_oracle_matches_on_1000_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            reqs, n_bs = self.random_instance(rng)
            mine = allocate(reqs, n_bs)
            ref = oracle_allocate(reqs, n_bs)
            assert mine.n_satisfied == ref.n_satisfied
            assert mine.satisfied == ref.satisfied
            for r in reqs:
                assert mine.share_of(r.ue) == pytest.approx(ref.share_of(r.ue), abs=1e-12)

    def test_budget_respected_always(self):
        rng = np.random.default_rng(77)
        for _ in range(300):
            reqs, n_bs = self.random_instance(rng)
            result = allocate(reqs, n_bs)
            for j in range(n_bs):
                load = sum(result.share_of(r.ue) for r in reqs if r.bs == j)
                assert load <= 1.0 + 1e-9

    def test_monotonicity_in_demand(self):
        """Raising one UE's deficit share never helps the satisfied count."""
        rng = np.random.default_rng(5)
        for _ in range(200):
            shares = list(rng.uniform(0.05, 0.8, size=5))
            caps = list(rng.uniform(0.5, 5.0, size=5))
            base, _ = max_satisfiable(requests_from(shares, caps))
            k = int(rng.integers(0, 5))
            shares[k] += float(rng.uniform(0.05, 0.6))
            bumped, _ = max_satisfiable(requests_from(shares, caps))
            assert bumped <= base

    def test_satisfied_ues_meet_their_window(self):
        """Every satisfied UE's K-window average reaches its threshold."""
        rng = np.random.default_rng(99)
        k = 2
        for _ in range(300):
            n = int(rng.integers(2, 7))
            past = rng.uniform(0.0, 0.6, size=n)          # K-1 = 1 past rate
            r_th = rng.uniform(0.2, 1.0, size=n)
            caps = rng.uniform(0.5, 8.0, size=n)
            shares = [required_share([past[i]], r_th[i], caps[i]) for i in range(n)]
            reqs = [
                ShareRequest(ue=i, share=shares[i], capacity=caps[i], bs=0)
                for i in range(n)
            ]
            result = allocate(reqs, n_bs=1)
            for i in result.satisfied[0]:
                window = (past[i] + result.share_of(i) * caps[i]) / k
                assert window >= r_th[i] * (1.0 - 1e-9), (
                    f"ue {i}: window {window} < threshold {r_th[i]}"
                )

    def test_oracle_refuses_large_instances(self):
        reqs = requests_from([0.1] * 11, [1.0] * 11)
        with pytest.raises(ValueError):
            oracle_allocate(reqs, n_bs=1)

    def test_empty_instance(self):
        result = oracle_allocate([], n_bs=2)
        assert result.shares == {}
        assert result.n_satisfied == {0: 0, 1: 0}
