import numpy as np
import pytest

from advgen.pls import (BudgetError, Candidate, gaussian_study, mre_select,
                        ocba_select, round_robin, simple_max, tre_select)


def cands(n):
    return [Candidate(id=i) for i in range(n)]


def noiseless(values):
    """Evaluator returning each candidate's fixed true value."""
    return lambda c: float(values[c.id])


class TestCandidate:
    def test_welford_matches_numpy(self):
        rng = np.random.default_rng(0)
        xs = rng.normal(3.0, 2.0, size=40)
        c = Candidate(id=0)
        for x in xs:
            c.observe(float(x))
        assert c.mean == pytest.approx(xs.mean())
        assert c.variance == pytest.approx(xs.var(ddof=1))


class TestSimpleMax:
    def test_picks_argmax(self):
        cs = cands(4)
        assert simple_max([1.0, 9.0, 3.0, 9.0], cs) is cs[1]  # earliest tie

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            simple_max([1.0], cands(2))


class TestRoundRobin:
    def test_even_split_with_remainder(self):
        cs = cands(4)
        counts = []
        round_robin(cs, 10, noiseless(range(4)))
        counts = [c.count for c in cs]
        assert counts == [3, 3, 2, 2]
        assert sum(counts) == 10

    def test_zero_budget(self):
        with pytest.raises(BudgetError):
            round_robin(cands(3), 0, noiseless(range(3)))


class TestMRE:
    def test_survivor_schedule_and_budget(self):
        # 25 candidates: rounds shrink the pool 25 -> 13 -> 7 -> 4.
        values = list(range(25))
        calls = []

        def ev(c):
            calls.append(c.id)
            return float(values[c.id])

        pick = mre_select(cands(25), 60, ev)
        assert pick.id == 24
        assert len(calls) == 60  # exact budget accounting
        # Round sizes: 25, 13, 7 eliminations then cycling over final 4.
        assert calls[:25] == list(range(25))
        assert sorted(set(calls[25:38])) == list(range(12, 25))
        assert sorted(set(calls[38:45])) == list(range(18, 25))
        assert sorted(set(calls[45:])) == list(range(21, 25))

    def test_budget_too_small(self):
        with pytest.raises(BudgetError):
            mre_select(cands(10), 9, noiseless(range(10)))

    def test_small_pool_cycles(self):
        cs = cands(3)
        pick = mre_select(cs, 7, noiseless([5, 9, 1]))
        assert pick.id == 1
        assert sum(c.count for c in cs) == 7


class TestTRE:
    def test_two_then_top_quarter(self):
        values = list(range(8))
        cs = cands(8)
        pick = tre_select(cs, 20, noiseless(values))
        assert pick.id == 7
        # ceil(8/4) = 2 survivors share the remaining 4 evaluations.
        assert sorted(c.count for c in cs) == [2] * 6 + [4, 4]

    def test_strict_budget(self):
        with pytest.raises(BudgetError):
            tre_select(cands(8), 15, noiseless(range(8)))

    def test_relaxed_truncates(self):
        cs = cands(8)
        pick = tre_select(cs, 5, noiseless(range(8)), strict=False)
        assert sum(c.count for c in cs) == 5
        assert pick.id == 2  # best among the observed prefix


class TestOCBA:
    def test_spends_exact_budget_and_finds_best(self):
        rng = np.random.default_rng(3)
        true = [1.0, 5.0, 9.0, 9.5, 2.0]
        cs = cands(5)
        pick = ocba_select(cs, 40, lambda c: float(rng.normal(true[c.id], 0.5)))
        assert sum(c.count for c in cs) == 40
        assert pick.id in (2, 3)

    def test_allocates_more_near_best(self):
        rng = np.random.default_rng(1)
        true = [0.0, 0.0, 0.0, 9.0, 9.2]
        cs = cands(5)
        ocba_select(cs, 60, lambda c: float(rng.normal(true[c.id], 1.0)))
        contenders = cs[3].count + cs[4].count
        assert contenders > sum(c.count for c in cs[:3])

    def test_strict_budget(self):
        with pytest.raises(BudgetError):
            ocba_select(cands(10), 19, noiseless(range(10)))

    def test_relaxed_partial_warmup(self):
        cs = cands(10)
        pick = ocba_select(cs, 8, noiseless(range(10)), strict=False)
        assert sum(c.count for c in cs) == 8
        assert all(c.count == 0 for c in cs[4:])  # only first floor(8/2) seeded
        assert pick.id == 3


class TestGaussianStudy:
    def test_shapes_and_pairing(self):
        rng = np.random.default_rng(0)
        res = gaussian_study(("simple_max", "round_robin"), budget=50, trials=20,
                             rng=rng)
        assert set(res) == {"simple_max", "round_robin", "oracle"}
        assert all(v.shape == (20,) for v in res.values())
        # Oracle dominates every algorithm trial-by-trial (paired truths).
        for alg in ("simple_max", "round_robin"):
            assert np.all(res["oracle"] >= res[alg])

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            gaussian_study(("nope",), budget=50, trials=1)
