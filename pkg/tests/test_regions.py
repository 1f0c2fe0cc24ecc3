import math

import numpy as np
import pytest

from almostiss.comparison import from_text, make_sigma
from almostiss.models import (
    ABGamma,
    DimensionMismatch,
    InfiniteEndpoint,
    InnerComposition,
    IntervalDiagnostics,
    SmallGainInterval,
    SmallGainIntervals,
)
from almostiss.regions import (
    CompositeV,
    build_region,
    build_regions,
    check_storage,
    classify_abgamma,
    classify_k,
    composite_v,
    distance_to_region,
    gap_set_mask,
    level_set_contains,
    region_membership,
    storage_from_text,
)


def intervals_of(*pairs) -> SmallGainIntervals:
    items = [
        SmallGainInterval(
            lower=lower,
            upper=upper,
            diagnostics=IntervalDiagnostics(
                outer_step=i, lower_iterations=1, upper_iterations=1, lower_converged=True, upper_converged=True
            ),
        )
        for i, (lower, upper) in enumerate(pairs, start=1)
    ]
    return SmallGainIntervals(intervals=items, ell=len(items))


class TestStorage:
    def test_level_set(self):
        v = storage_from_text("x1^2 + x2^2", ["x1", "x2"])
        assert level_set_contains(v, 1.0, [0.5, 0.5])
        assert not level_set_contains(v, 1.0, [1.0, 0.5])

    def test_dimension_mismatch(self):
        v = storage_from_text("x1^2", ["x1"])
        with pytest.raises(DimensionMismatch):
            level_set_contains(v, 1.0, [0.5, 0.5])

    def test_evaluate_many(self):
        v = storage_from_text("abs(x1)", ["x1"])
        np.testing.assert_array_equal(v.evaluate_many(np.array([[-2.0], [3.0]])), [2.0, 3.0])

    def test_check_storage_passes(self):
        v = storage_from_text("x1^2 + x2^2", ["x1", "x2"], "v")
        report = check_storage(v, {"x1": (-2, 2), "x2": (-2, 2)}, samples=200)
        assert report.passed
        assert report.min_margin > 0
        assert report.name == "storage:v"

    def test_check_storage_offset(self):
        v = storage_from_text("x1^2 - 0.5", ["x1"])
        report = check_storage(v, {"x1": (-2, 2)}, samples=200)
        assert not report.passed
        assert report.violations[0].index == -1

    def test_check_storage_indefinite(self):
        v = storage_from_text("x1", ["x1"])
        report = check_storage(v, {"x1": (-2, 2)}, samples=200)
        assert report.violation_count > 0


class TestBuildRegion:
    def test_thresholds(self):
        region = build_region(1, intervals_of((1.0, 2.0)), from_text("s/2"), from_text("s/3"))
        assert region.a_thresholds == (1.0, 1.0 / 3.0)
        assert region.b_thresholds == (2.0, 2.0 / 3.0)

    def test_inner_composition_toggle(self):
        intervals = intervals_of((1.0, 2.0))
        printed = build_region(1, intervals, from_text("4*s"), from_text("s/2"))
        alternative = build_region(
            1, intervals, from_text("4*s"), from_text("s/2"), InnerComposition.GAMMA21_GAMMA12
        )
        # gamma21(gamma21(1)) = 0.25 vs gamma21(gamma12(1)) = 2
        assert printed.a_thresholds == (4.0, 0.5)
        assert alternative.a_thresholds == (4.0, 2.0)
        assert alternative.inner_composition == InnerComposition.GAMMA21_GAMMA12

    def test_infinite_upper(self):
        intervals = intervals_of((1.0, math.inf))
        region = build_region(1, intervals, from_text("s/2"), from_text("s/3"))
        assert region.b_is_whole_space
        with pytest.raises(InfiniteEndpoint):
            build_region(1, intervals, from_text("s/2"), from_text("s/3"), allow_infinite=False)

    def test_k_range(self):
        with pytest.raises(ValueError):
            build_region(2, intervals_of((1.0, 2.0)), from_text("s"), from_text("s"))

    def test_nested(self):
        regions = build_regions(intervals_of((1.0, 2.0), (3.0, 4.0)), from_text("s/2"), from_text("s/3"))
        assert [r.k for r in regions] == [1, 2]
        assert regions[0].b_thresholds[0] <= regions[1].a_thresholds[0]


class TestMembership:
    def test_region_membership(self, abs_storage):
        v1, v2 = abs_storage
        region = build_region(1, intervals_of((1.0, 2.0)), from_text("s/2"), from_text("s/3"))
        assert region_membership([0.5, 0.2], region, v1, v2) == (True, True)
        assert region_membership([1.5, 0.2], region, v1, v2) == (False, True)
        assert region_membership([1.5, 0.9], region, v1, v2) == (False, False)

    def test_gap_sets(self, abs_storage):
        v1, v2 = abs_storage
        regions = build_regions(intervals_of((1.0, 2.0), (3.0, 4.0)), from_text("s/2"), from_text("s/3"))
        X = np.array([[0.5, 0.1], [2.5, 0.1], [5.0, 0.1], [1.5, 0.5]])
        np.testing.assert_array_equal(gap_set_mask(X, 1, regions, v1, v2), [True, False, False, False])
        np.testing.assert_array_equal(gap_set_mask(X, 2, regions, v1, v2), [False, True, False, False])
        np.testing.assert_array_equal(gap_set_mask(X, 3, regions, v1, v2), [False, False, True, False])
        with pytest.raises(ValueError):
            gap_set_mask(X, 4, regions, v1, v2)


class TestCompositeV:
    def setup_method(self):
        self.v1 = storage_from_text("abs(x1)", ["x1"])
        self.v2 = storage_from_text("abs(x2)", ["x2"])
        self.cv = CompositeV(make_sigma(from_text("s^2"), from_text("s")), self.v1, self.v2)

    def test_value(self):
        # sigma(0.25) = (0.5 + 0.25) / 2
        assert composite_v(self.cv, [0.25, 0.1]) == pytest.approx(0.375)
        assert self.cv([0.25, 0.9]) == 0.9

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            composite_v(self.cv, [0.25])

    def test_abgamma(self):
        assert classify_abgamma(self.cv, [0.25, 0.1]) == ABGamma.A
        assert classify_abgamma(self.cv, [0.25, 0.9]) == ABGamma.B
        assert classify_abgamma(self.cv, [0.25, 0.375]) == ABGamma.GAMMA

    def test_classify_k(self):
        intervals = intervals_of((0.0, 1.0))
        assert classify_k(self.cv, intervals, [0.25, 0.9]) == (ABGamma.B, 1)
        assert classify_k(self.cv, intervals, [0.25, 0.1]) == (ABGamma.A, 1)
        assert classify_k(self.cv, intervals, [2.0, 9.0]) == (None, None)


class TestDistance:
    def test_inside_is_zero(self, abs_storage):
        v1, v2 = abs_storage
        region = build_region(1, intervals_of((1.0, 2.0)), from_text("s"), from_text("s"))
        assert distance_to_region([0.5, 0.5], region, v1, v2) == 0.0

    def test_square_region(self, abs_storage):
        v1, v2 = abs_storage
        # A_1 = [-1, 1] x [-1, 1]
        region = build_region(1, intervals_of((1.0, 2.0)), from_text("s"), from_text("s"))
        assert distance_to_region([3.0, 0.0], region, v1, v2) == pytest.approx(2.0, abs=1e-6)
        assert distance_to_region([2.0, 2.0], region, v1, v2) == pytest.approx(math.sqrt(2.0), abs=1e-2)
