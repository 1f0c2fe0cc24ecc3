import numpy as np
import pytest

from almostiss.comparison import from_text
from almostiss.expr import parse
from almostiss.models import IntervalDiagnostics, SmallGainInterval, SmallGainIntervals
from almostiss.regions import build_regions, storage_from_text
from almostiss.verify import (
    DpiBlock,
    central_divergence,
    central_gradient,
    check_dpi,
    check_dpi_cover,
    check_iss_lyapunov,
    check_q_positive,
    check_sgc_on_interval,
)

SUB1 = {"x1", "x2", "u1", "t"}
STATES = {"x1", "x2", "t"}
BOX = {"x1": (-2.0, 2.0), "x2": (-2.0, 2.0)}


def lyapunov_report(f1: str, samples: int = 10_000, **kwargs):
    v1 = storage_from_text("abs(x1)", ["x1"], "v1")
    v2 = storage_from_text("abs(x2)", ["x2"], "v2")
    return check_iss_lyapunov(
        v1,
        [parse(f1, SUB1)],
        (from_text("0.5*s"), from_text("2*s")),
        from_text("0.5*s"),
        {**BOX, "u1": (0.0, 0.0)},
        samples,
        v_j=v2,
        input_names=["u1"],
        **kwargs,
    )


def block(q: str, box=BOX, rho: str = "1", k: int = 1) -> DpiBlock:
    return DpiBlock(k=k, rho=parse(rho, STATES), q=parse(q, STATES), gamma_k=from_text("s"), domain_box=dict(box))


def one_interval(lower: float, upper: float) -> SmallGainIntervals:
    diag = IntervalDiagnostics(outer_step=1, lower_iterations=1, upper_iterations=1, lower_converged=True, upper_converged=True)
    return SmallGainIntervals(intervals=[SmallGainInterval(lower=lower, upper=upper, diagnostics=diag)], ell=1)


class TestFiniteDifferences:
    def test_divergence_matches_analytic(self):
        X = np.random.default_rng(0).uniform(-2.0, 2.0, (500, 2))
        field = lambda P: np.stack([P[:, 0] * (1 - P[:, 0] ** 2), 0.5 * P[:, 1]], axis=1)
        div = central_divergence(field, X, 1e-5)
        np.testing.assert_allclose(div, 1.5 - 3 * X[:, 0] ** 2, atol=1e-6)

    def test_gradient_flags_kinks(self):
        X = np.array([[0.0], [1.0]])
        grad, kink = central_gradient(lambda P: np.abs(P[:, 0]), X, 1e-5)
        assert kink.tolist() == [True, False]
        assert grad[1, 0] == pytest.approx(1.0)

    def test_kink_inside_step(self):
        _, kink = central_gradient(lambda P: np.abs(P[:, 0]), np.array([[3e-6]]), 1e-5)
        assert kink.tolist() == [True]

    def test_curvature_is_not_a_kink(self):
        X = np.array([[1e-3], [0.05], [1.5]])
        grad, kink = central_gradient(lambda P: 50.0 * P[:, 0] ** 2, X, 1e-5)
        assert not kink.any()
        np.testing.assert_allclose(grad[:, 0], 100.0 * X[:, 0], rtol=1e-6)


class TestSmallGain:
    def test_inside_interval(self):
        report = check_sgc_on_interval(from_text("s^2"), from_text("s"), (0.0, 1.0))
        assert report.passed
        assert report.checked_points == 100

    def test_outside_interval(self):
        report = check_sgc_on_interval(from_text("s^2"), from_text("s"), (1.0, 2.0))
        assert report.violation_count == 100

    def test_infinite_interval_is_clipped(self):
        report = check_sgc_on_interval(from_text("s/2"), from_text("s"), (0.5, float("inf")))
        assert report.passed
        assert report.notes["clipped_upper"] == 10.0

    def test_minimum_samples(self):
        with pytest.raises(ValueError):
            check_sgc_on_interval(from_text("s"), from_text("s"), (0.0, 1.0), samples=5)


class TestIssLyapunov:
    def test_stable_linear_subsystem(self):
        report = lyapunov_report("-x1 + 0.25*x2 + u1")
        assert report.passed, report.violations[:3]
        assert report.checked_points > 0
        assert report.notes["triggered_points"] == report.checked_points + report.skipped_points

    def test_sign_flip_is_caught(self):
        report = lyapunov_report("x1 + 0.25*x2 + u1")
        assert report.violation_fraction > 0.95

    def test_deterministic_and_worker_independent(self):
        one = lyapunov_report("x1 + 0.25*x2 + u1", samples=5000, max_workers=1)
        many = lyapunov_report("x1 + 0.25*x2 + u1", samples=5000, max_workers=4)
        assert one.violation_count == many.violation_count
        assert [v.index for v in one.violations] == [v.index for v in many.violations]

    def test_curved_storage_is_checked_everywhere(self):
        report = check_iss_lyapunov(
            storage_from_text("50*x1^2", ["x1"], "v1"),
            [parse("-x1", SUB1)],
            (from_text("s"), from_text("s")),
            from_text("s^2"),
            {**BOX, "u1": (0.0, 0.0)},
            1000,
            v_j=storage_from_text("abs(x2)", ["x2"], "v2"),
            input_names=["u1"],
        )
        assert report.skipped_points == 0
        assert report.checked_points > 0
        assert report.passed

    def test_arguments(self):
        with pytest.raises(ValueError):
            lyapunov_report("-x1", samples=50)


class TestDpi:
    def test_exact_divergence_passes(self, abs_storage):
        v1, v2 = abs_storage
        f = [parse("x1*(1 - x1^2)", STATES), parse("0.5*x2", STATES)]
        report = check_dpi(block("1.5 - 3*x1^2"), f, grid=32, v1=v1, v2=v2)
        assert report.violation_count == 0
        assert report.checked_points == 32 * 32
        assert report.notes["rho_nonpositive"] == 0

    def test_rate_too_high_fails(self, abs_storage):
        v1, v2 = abs_storage
        f = [parse("x1*(1 - x1^2)", STATES), parse("0.5*x2", STATES)]
        report = check_dpi(block("2"), f, grid=16, v1=v1, v2=v2)
        assert report.violation_count == 16 * 16

    def test_larger_input_checks_fewer_points(self, abs_storage):
        v1, v2 = abs_storage
        names = STATES | {"u1", "u2"}
        f = [parse("x1 + u1", names), parse("x2 + u2", names)]

        def dpi(*u_values):
            return check_dpi(block("1"), f, grid=16, u_values=u_values, v1=v1, v2=v2, input_names=["u1", "u2"])

        counts = [dpi(a).checked_points for a in (0.0, 0.5, 1.0, 1.5, 3.0)]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] == 16 * 16
        assert 0 < counts[2] < counts[0]
        assert counts[-1] == 0
        combined = dpi(0.0, 3.0)
        assert combined.checked_points == 16 * 16
        assert combined.passed

    def test_grid_minimum(self, abs_storage):
        v1, v2 = abs_storage
        with pytest.raises(ValueError):
            check_dpi(block("1"), [parse("x1", STATES), parse("x2", STATES)], grid=4, v1=v1, v2=v2)

    def test_q_zero_is_an_exception(self):
        report = check_q_positive(block("x1^2"), ["x1", "x2"], grid=17)
        assert report.passed
        assert report.notes["q_exception_count"] == 17

    def test_q_negative(self):
        report = check_q_positive(block("x1"), ["x1", "x2"], grid=17)
        assert report.violation_count == 8 * 17

    def test_rho_must_be_positive(self):
        report = check_q_positive(block("1", rho="x2"), ["x1", "x2"], grid=17)
        assert not report.passed


class TestDpiCover:
    def setup_method(self):
        # A_1 = {|x1| <= 1, |x2| <= 1/3}
        self.regions = build_regions(one_interval(1.0, 2.0), from_text("s/2"), from_text("s/3"))

    def test_box_covers_gap_set(self, abs_storage):
        v1, v2 = abs_storage
        report = check_dpi_cover(block("1", {"x1": (-1.5, 1.5), "x2": (-1.5, 1.5)}), self.regions, v1, v2)
        assert report.passed
        assert report.checked_points > 0
        assert not report.notes["unbounded"]

    def test_small_box_misses_points(self, abs_storage):
        v1, v2 = abs_storage
        report = check_dpi_cover(block("1", {"x1": (-0.5, 0.5), "x2": (-0.5, 0.5)}), self.regions, v1, v2)
        assert report.violation_count > 0
        assert report.min_margin < 0
