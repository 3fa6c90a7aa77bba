"""Tests for stopping-time grids and pathwise sums."""

import numpy as np
import pytest

from pathcalc import (
    BrownianMotion,
    CompoundPoissonJumps,
    OutsideDomainError,
    PathFunctional,
    ResolutionExhaustedError,
    ScalarFn,
    TwoPointLaw,
    boundedness_scan,
    custom_two_index,
    dyadic_grid,
    hitting_grid,
    increment_fn,
    limit_in_probability,
    linear_remainder,
    make_scalar_fn,
    pathwise_series,
    pathwise_sum,
    realized_qv,
    simulate,
    squared_increment,
    squared_increment_ratio,
    stopped_functional,
)

ABS = make_scalar_fn("abs")
SQUARE = make_scalar_fn("square")
XABS = make_scalar_fn("x_abs_x_half")
SIGN = make_scalar_fn("sign")


def bm(seed=11, n=4096):
    return simulate(BrownianMotion(), n, 1.0, seed=seed)


class TestGrids:
    def test_dyadic_zero_is_endpoints(self):
        g = dyadic_grid(bm(seed=1, n=8), 0)
        assert list(g.times) == [0.0, 1.0]

    def test_dyadic_two_on_uniform_grid(self):
        g = dyadic_grid(bm(seed=1, n=8), 2)
        assert np.allclose(g.times, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_dyadic_includes_jump_times(self):
        p = simulate(CompoundPoissonJumps(rate=4.0, law=TwoPointLaw(0.5, 1.0, -1.0)),
                     64, 1.0, seed=5)
        assert len(p.jump_indices) > 0
        g = dyadic_grid(p, 0)
        assert set(p.jump_indices).issubset(set(g.indices))

    def test_hitting_on_deterministic_ramp(self):
        det = simulate(BrownianMotion(sigma=0.0, drift=1.0), 64, 1.0, seed=0)
        g = hitting_grid(det, 0.5)
        assert np.allclose(g.times, [0.0, 0.5, 1.0])

    def test_hitting_below_resolution_raises(self):
        p = bm(seed=2, n=256)
        with pytest.raises(ResolutionExhaustedError):
            hitting_grid(p, 1e-6)

    def test_hitting_matches_scalar_reference_walk(self):
        p = bm(seed=3, n=2**12)
        eps = 2**-4
        g = hitting_grid(p, eps)
        # independent reference: plain scalar walk over every grid point
        out, anchor = [0], p.values[0]
        for i in range(1, p.n_points):
            if abs(p.values[i] - anchor) >= eps:
                out.append(i)
                anchor = anchor + eps * np.trunc((p.values[i] - anchor) / eps)
        if out[-1] != p.n_points - 1:
            out.append(p.n_points - 1)
        assert np.array_equal(g.indices, np.asarray(out))


class TestPathwiseSum:
    def test_increment_fn_telescopes_on_any_grid(self):
        p = bm(seed=11)
        pf = PathFunctional(path=p, base=increment_fn(ABS))
        for level in (0, 3, 6, 9):
            s = pathwise_sum(pf, dyadic_grid(p, level))
            assert s == pytest.approx(abs(p.values[-1]) - abs(p.values[0]), abs=1e-12)

    def test_quadratic_matches_realized_qv_bitwise(self):
        p = bm(seed=12)
        pf = PathFunctional(path=p, base=squared_increment())
        g = dyadic_grid(p, 7)
        assert pathwise_sum(pf, g) == realized_qv(p, g)

    def test_remainder_sum_equals_qv_for_square(self):
        g2x = ScalarFn("2x", lambda x: 2.0 * np.asarray(x, dtype=float))
        p = bm(seed=13)
        pf = PathFunctional(path=p, base=linear_remainder(SQUARE, g2x))
        g = dyadic_grid(p, 8)
        assert pathwise_sum(pf, g) == pytest.approx(realized_qv(p, g), abs=1e-12)

    def test_scaling_and_linearity(self):
        p = bm(seed=14)
        g = dyadic_grid(p, 6)
        F = increment_fn(XABS)
        G = squared_increment()
        pf_f = PathFunctional(path=p, base=F)
        pf_g = PathFunctional(path=p, base=G)
        scaled = PathFunctional(path=p, base=custom_two_index(
            lambda x, y: 3.5 * F(x, y), "3.5F", validate=False))
        both = PathFunctional(path=p, base=custom_two_index(
            lambda x, y: F(x, y) + G(x, y), "F+G", validate=False))
        assert pathwise_sum(scaled, g) == pytest.approx(3.5 * pathwise_sum(pf_f, g), abs=1e-12)
        assert pathwise_sum(both, g) == pytest.approx(
            pathwise_sum(pf_f, g) + pathwise_sum(pf_g, g), abs=1e-12)

    def test_series_is_cumulative(self):
        p = bm(seed=15)
        g = dyadic_grid(p, 5)
        pf = PathFunctional(path=p, base=squared_increment())
        series = pathwise_series(pf, g)
        assert series[0] == 0.0
        assert series[-1] == pathwise_sum(pf, g)
        assert np.all(np.diff(series) >= 0)

    def test_grid_path_mismatch_rejected(self):
        p1, p2 = bm(seed=1), bm(seed=2)
        pf = PathFunctional(path=p1, base=squared_increment())
        with pytest.raises(ValueError):
            pathwise_sum(pf, dyadic_grid(p2, 3))


class TestStopping:
    def test_stop_at_horizon_is_identity(self):
        p = bm(seed=21)
        pf = PathFunctional(path=p, base=squared_increment())
        g = dyadic_grid(p, 6)
        assert pathwise_sum(stopped_functional(pf, 1.0), g) == pathwise_sum(pf, g)

    def test_stop_at_zero_vanishes(self):
        p = bm(seed=22)
        pf = PathFunctional(path=p, base=squared_increment())
        assert pathwise_sum(stopped_functional(pf, 0.0), dyadic_grid(p, 6)) == 0.0

    def test_stop_matches_truncated_grid(self):
        p = bm(seed=23)
        pf = PathFunctional(path=p, base=squared_increment())
        g = dyadic_grid(p, 6)
        sigma = 0.5
        stopped = pathwise_sum(stopped_functional(pf, sigma), g)
        keep = g.indices[p.times[g.indices] <= sigma]
        x = p.values[keep]
        assert stopped == pytest.approx(float(np.sum((x[1:] - x[:-1]) ** 2)), abs=1e-15)

    def test_sigma_outside_horizon_rejected(self):
        pf = PathFunctional(path=bm(seed=1), base=squared_increment())
        with pytest.raises(ValueError):
            stopped_functional(pf, 2.0)


class TestSquaredIncrementRatio:
    def test_quadratic_normalizes_to_one(self):
        p = bm(seed=31)
        pf = PathFunctional(path=p, base=squared_increment())
        for j in (1, 100, 2000):
            assert squared_increment_ratio(pf, float(p.times[0]), float(p.times[j])) == 1.0

    def test_square_remainder_normalizes_to_one(self):
        g2x = ScalarFn("2x", lambda x: 2.0 * np.asarray(x, dtype=float))
        p = bm(seed=32)
        pf = PathFunctional(path=p, base=linear_remainder(SQUARE, g2x))
        val = squared_increment_ratio(pf, float(p.times[10]), float(p.times[500]))
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_flat_pair_is_outside_domain(self):
        p = simulate(BrownianMotion(sigma=0.0, drift=0.0), 8, 1.0, seed=0)
        pf = PathFunctional(path=p, base=squared_increment())
        with pytest.raises(OutsideDomainError):
            squared_increment_ratio(pf, 0.0, 0.5)


@pytest.fixture(scope="module")
def scan_paths():
    return [simulate(BrownianMotion(), 2048, 1.0, seed=s) for s in range(6)]


class TestBoundednessScan:
    def test_lipschitz_derivative_pair_is_bounded(self, scan_paths):
        est, flag = boundedness_scan(linear_remainder(XABS, ABS), scan_paths, "bounded", seed=1)
        assert flag
        # ratios of near-diagonal pairs carry roundoff ~ ulp / move^2; with
        # the default move floor that is at most ~1e-4 on top of the true 1/2
        assert est <= 0.5 + 2e-4

    def test_convex_pair_is_lower_bounded(self, scan_paths):
        est, flag = boundedness_scan(linear_remainder(ABS, SIGN), scan_paths, "lower_bounded", seed=2)
        assert flag
        assert est >= -1e-12

    def test_concave_kink_is_unbounded(self, scan_paths):
        neg_abs = ScalarFn("neg_abs", lambda x: -np.abs(x))
        neg_sign = ScalarFn("neg_sign", lambda x: -np.asarray(SIGN(x), dtype=float))
        est, flag = boundedness_scan(linear_remainder(neg_abs, neg_sign), scan_paths, "bounded", seed=3)
        assert not flag

    def test_empty_paths_rejected(self):
        with pytest.raises(ValueError):
            boundedness_scan(squared_increment(), [], "bounded")


class TestLimitInProbability:
    def test_increment_fn_is_grid_independent_exactly(self):
        diag = limit_in_probability(
            increment_fn(ABS), BrownianMotion(),
            schemes=[{"scheme": "dyadic", "params": [6, 8]},
                     {"scheme": "hitting", "params": [2**-3, 2**-4]}],
            n_paths=40, eps=1e-9, delta=0.05, n_steps=4096, base_seed=5,
        )
        assert diag.verdict
        assert max(diag.cross_tail.values()) == 0.0

    def test_quadratic_converges_with_agreeing_schemes(self):
        diag = limit_in_probability(
            squared_increment(), BrownianMotion(),
            schemes=[{"scheme": "dyadic", "params": [12, 13, 14]},
                     {"scheme": "hitting", "params": [2**-5, 2**-5.5, 2**-6]}],
            n_paths=120, eps=0.05, delta=0.05, n_steps=2**16, base_seed=7,
        )
        assert diag.verdict
        assert diag.tail_probs["dyadic"][-1] <= 0.05
        assert max(diag.cross_tail.values()) <= 0.05

    def test_first_order_increments_diverge(self):
        absinc = custom_two_index(
            lambda x, y: np.abs(np.asarray(y) - np.asarray(x)), "abs_inc")
        diag = limit_in_probability(
            absinc, BrownianMotion(),
            schemes=[{"scheme": "dyadic", "params": [6, 8, 10]},
                     {"scheme": "hitting", "params": [2**-3, 2**-4]}],
            n_paths=40, eps=0.05, delta=0.05, n_steps=4096, base_seed=6,
        )
        assert not diag.verdict

    def test_needs_two_schemes(self):
        with pytest.raises(ValueError):
            limit_in_probability(squared_increment(), BrownianMotion(),
                                 schemes=[{"scheme": "dyadic", "params": [4]}],
                                 n_paths=2)

    def test_serializes_to_json(self):
        diag = limit_in_probability(
            increment_fn(ABS), BrownianMotion(),
            schemes=[{"scheme": "dyadic", "params": [4, 5]},
                     {"scheme": "hitting", "params": [2**-2]}],
            n_paths=5, n_steps=512, base_seed=1,
        )
        d = diag.to_json_dict()
        assert "estimates" in d and "verdict" in d
        import io

        buf = io.StringIO()
        diag.trace_csv(buf)
        assert buf.getvalue().startswith("scheme,path,level_ordinal,param,estimate")
