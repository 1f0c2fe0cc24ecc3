import math

import pytest

from almostiss.comparison import compose, from_text
from almostiss.intervals import (
    AlgorithmParams,
    brute_force_intervals,
    check_gap_restriction,
    classify_point,
    find_intervals,
    fixed_point_limit,
)
from almostiss.models import PointClass, Termination

SIN = "s + 0.1*sin(pi*s)"

# (gamma12, gamma21, max_outer_iters); gamma = gamma12(gamma21(s))
PAIRS = {
    "square": ("s^2", "s", 1000),
    "sqrt": ("s", "sqrt(s)", 1000),
    "half": ("s/2", "s", 1000),
    "double": ("2*s", "s", 1000),
    "sin": ("s", SIN, 10),
}


def search(pair: str, **params):
    g12, g21, cap = PAIRS[pair]
    params.setdefault("max_outer_iters", cap)
    return find_intervals(from_text(g12), from_text(g21), AlgorithmParams(**params))


class TestAlgorithmParams:
    def test_defaults(self):
        params = AlgorithmParams()
        assert (params.delta, params.eps_fix, params.eps_conv) == (1e-2, 1e-9, 1e-10)

    @pytest.mark.parametrize("field", ["delta", "eps_fix", "eps_conv", "s_divergence", "max_inner_iters"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            AlgorithmParams(**{field: 0})

    def test_eps_order(self):
        with pytest.raises(ValueError):
            AlgorithmParams(eps_fix=1e-12, eps_conv=1e-10)


class TestClassifyPoint:
    @pytest.mark.parametrize("s, expected", [(0.5, PointClass.BELOW), (1.0, PointClass.FIXED), (2.0, PointClass.ABOVE)])
    def test_square(self, s, expected):
        assert classify_point(from_text("s^2"), s, 1e-9) == expected

    def test_positive_only(self):
        with pytest.raises(ValueError):
            classify_point(from_text("s"), 0.0, 1e-9)


class TestFixedPointLimit:
    def test_decays_to_zero(self):
        limit = fixed_point_limit(from_text("s/2"), 1.0, AlgorithmParams())
        assert limit.converged
        assert limit.value == pytest.approx(0.0, abs=1e-9)

    def test_doubling_diverges(self):
        assert fixed_point_limit(from_text("2*s"), 1.0, AlgorithmParams()).is_infinite

    def test_square_above_one_diverges(self):
        assert fixed_point_limit(from_text("s^2"), 1.5, AlgorithmParams()).is_infinite

    def test_monotone(self):
        limit = fixed_point_limit(from_text("sqrt(s)"), 0.01, AlgorithmParams())
        assert limit.monotone
        assert limit.value == pytest.approx(1.0, abs=1e-9)

    def test_stall_is_flagged(self):
        # tangential fixed point at 0: convergence is sublinear
        limit = fixed_point_limit(from_text("s/(1 + s)"), 1.0, AlgorithmParams(max_inner_iters=50))
        assert not limit.converged
        assert limit.iterations == 50


class TestFindIntervals:
    def test_square(self):
        result = search("square")
        assert result.ell == 1
        lower, upper = result.as_pairs()[0]
        assert lower == pytest.approx(0.0, abs=1e-6)
        assert upper == pytest.approx(1.0, abs=1e-6)
        assert result.terminated_by == Termination.DIVERGENT_ABOVE

    def test_sqrt(self):
        result = search("sqrt")
        assert result.ell == 1
        lower, upper = result.as_pairs()[0]
        assert lower == pytest.approx(1.0, abs=1e-6)
        assert math.isinf(upper)
        assert result.terminated_by == Termination.UPPER_INFINITE

    def test_half(self):
        result = search("half")
        assert result.ell == 1
        assert result.intervals[0].lower < 1e-9
        assert not result.intervals[0].is_bounded

    def test_double(self):
        result = search("double")
        assert result.ell == 0
        assert result.terminated_by == Termination.DIVERGENT_ABOVE

    def test_sin_under_outer_cap(self):
        result = search("sin", max_outer_iters=8)
        assert result.terminated_by == Termination.OUTER_CAP
        assert result.ell >= 3
        for (lower, upper), k in zip(result.as_pairs(), (1, 3, 5)):
            assert lower == pytest.approx(k, abs=1e-6)
            assert upper == pytest.approx(k + 1, abs=1e-6)

    @pytest.mark.parametrize("pair", ["square", "sqrt", "sin"])
    def test_endpoints_are_fixed_points(self, pair):
        g12, g21, _ = PAIRS[pair]
        gamma = compose(from_text(g12), from_text(g21))
        for item in search(pair).intervals:
            for endpoint in (item.lower, item.upper):
                if math.isfinite(endpoint):
                    assert abs(gamma(endpoint) - endpoint) <= 1e-9 * max(1.0, endpoint)

    @pytest.mark.parametrize("pair", list(PAIRS))
    def test_small_gain_holds_inside(self, pair):
        g12, g21, _ = PAIRS[pair]
        gamma = compose(from_text(g12), from_text(g21))
        for item in search(pair).intervals:
            upper = item.upper if math.isfinite(item.upper) else item.lower + 10.0
            mid = 0.5 * (item.lower + upper)
            assert gamma(mid) < mid

    @pytest.mark.parametrize("pair", ["square", "sin"])
    def test_ordered_and_disjoint(self, pair):
        pairs = search(pair).as_pairs()
        for (_, upper), (lower, _) in zip(pairs, pairs[1:]):
            assert upper <= lower + 1e-9

    @pytest.mark.parametrize("pair", list(PAIRS))
    def test_matches_dense_scan(self, pair):
        s_max, n = 10.0, 1_000_000
        g12, g21, _ = PAIRS[pair]
        found = search(pair).as_pairs()
        expected = brute_force_intervals(compose(from_text(g12), from_text(g21)), s_max, n)
        assert len(found) == len(expected)
        tol = max(1e-2, 2 * s_max / n)
        for (lower, upper), (lo, hi) in zip(found, expected):
            assert lower == pytest.approx(lo, abs=tol)
            assert min(upper, s_max) == pytest.approx(hi, abs=tol)

    def test_halving_delta_keeps_intervals(self):
        coarse = search("sin").as_pairs()
        fine = search("sin", delta=5e-3, max_outer_iters=10).as_pairs()
        for (lower, upper), (lo, hi) in zip(coarse, fine):
            assert lower == pytest.approx(lo, abs=1e-6)
            assert upper == pytest.approx(hi, abs=1e-6)

    def test_diagnostics(self):
        result = search("square")
        diag = result.intervals[0].diagnostics
        assert diag.outer_step == 1
        assert diag.lower_converged and diag.upper_converged
        assert diag.lower_monotone and diag.upper_monotone
        assert result.params["delta"] == 1e-2
        assert result.intervals[0].restriction_12_holds


class TestGapRestriction:
    def test_fixed_point_interval(self):
        holds, margin = check_gap_restriction(from_text("s^2"), from_text("s"), (0.0, 1.0))
        assert holds
        assert margin == pytest.approx(1.0)

    def test_infinite_upper(self):
        assert check_gap_restriction(from_text("s"), from_text("s"), (1.0, math.inf)) == (True, math.inf)

    def test_violated(self):
        holds, margin = check_gap_restriction(from_text("s"), from_text("s"), (2.0, 1.0))
        assert not holds
        assert margin == pytest.approx(-1.0)


class TestBruteForce:
    def test_square(self):
        (lower, upper), = brute_force_intervals(from_text("s^2"), 3.0, 10_000)
        assert lower == 0.0
        assert upper == pytest.approx(1.0, abs=1e-3)

    def test_everywhere_below(self):
        assert brute_force_intervals(from_text("s/2"), 10.0, 10_000) == [(0.0, 10.0)]

    def test_nowhere_below(self):
        assert brute_force_intervals(from_text("2*s"), 10.0, 10_000) == []
