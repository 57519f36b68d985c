"""Iterated-logarithm growth functions and admissibility audits."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from osgood_lab.growth import (
    GrowthFunction,
    eval_growth,
    eval_growth_derivative,
    eval_growth_log_arg,
    iterated_log_exp,
    log_envelope_constant,
    verify_admissibility,
)


class TestIteratedLogExp:
    def test_log_direction_values(self):
        assert iterated_log_exp(2, math.exp(math.e), "log") == pytest.approx(1.0)
        assert iterated_log_exp(3, math.exp(math.exp(math.e)), "log") == pytest.approx(1.0)
        assert iterated_log_exp(1, 10.0, "log") == pytest.approx(math.log(10.0))

    def test_exp_direction_values(self):
        assert iterated_log_exp(2, 1.0, "exp") == pytest.approx(math.exp(math.e))
        assert iterated_log_exp(1, 3.0, "exp") == pytest.approx(math.exp(3.0))

    @pytest.mark.parametrize(
        "m,u_max",
        [(1, 500.0), (2, 6.0), (3, 1.7)],
    )
    def test_roundtrip(self, m, u_max):
        # x = e_m(u) stays representable for u <= u_max at each depth
        for u in np.linspace(0.1, u_max, 23):
            x = iterated_log_exp(m, float(u), "exp")
            back = iterated_log_exp(m, iterated_log_exp(m, x, "log"), "exp")
            assert back == pytest.approx(x, rel=1e-10)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            iterated_log_exp(2, 1.0, "log")
        with pytest.raises(ValueError):
            iterated_log_exp(3, 2.0, "log")
        with pytest.raises(ValueError):
            iterated_log_exp(0, 2.0, "log")
        with pytest.raises(ValueError):
            iterated_log_exp(1, 2.0, "sideways")
        with pytest.raises(OverflowError):
            iterated_log_exp(3, 10.0, "exp")


class TestEvalGrowth:
    def test_catalog_values(self):
        g1 = GrowthFunction.iterated_log(1)
        g2 = GrowthFunction.iterated_log(2)
        assert eval_growth(g1, math.e) == pytest.approx(1.0)
        assert eval_growth(g2, math.exp(math.e)) == pytest.approx(1.0)
        assert eval_growth(g1, 10.0) == pytest.approx(2.302585, rel=1e-6)

    def test_domain_error_below_one(self):
        g = GrowthFunction.iterated_log(1)
        with pytest.raises(ValueError):
            eval_growth(g, 0.99)

    def test_positive_on_domain(self):
        for m in (1, 2, 3):
            g = GrowthFunction.iterated_log(m)
            for x in np.geomspace(1.0, 1e30, 40):
                assert eval_growth(g, float(x)) > 0.0

    @given(
        m=st.integers(min_value=1, max_value=3),
        a=st.floats(min_value=1.0, max_value=1e12),
        b=st.floats(min_value=1.0, max_value=1e12),
    )
    def test_monotone_nondecreasing(self, m, a, b):
        g = GrowthFunction.iterated_log(m)
        lo, hi = sorted((a, b))
        assert eval_growth(g, lo) <= eval_growth(g, hi) + 1e-12

    def test_log_arg_agrees_with_direct(self):
        g = GrowthFunction.iterated_log(2)
        for lx in (1.0, 5.0, 100.0, 650.0):
            assert eval_growth_log_arg(g, lx) == pytest.approx(
                eval_growth(g, math.exp(lx)), rel=1e-12
            )

    def test_log_arg_beyond_float_range(self):
        # log_2(x) = log(log x): representable even when x itself overflows
        g = GrowthFunction.iterated_log(2)
        assert eval_growth_log_arg(g, 1e6) == pytest.approx(math.log(1e6), rel=1e-9)

    def test_custom_positive_check(self):
        g = GrowthFunction.custom(lambda x: x - 2.0)
        with pytest.raises(ValueError):
            eval_growth(g, 1.5)


class TestDerivative:
    def test_catalog_values(self):
        g1 = GrowthFunction.iterated_log(1)
        g2 = GrowthFunction.iterated_log(2)
        assert eval_growth_derivative(g1, 10.0) == pytest.approx(0.1)
        assert eval_growth_derivative(g1, 2.0) == pytest.approx(0.5)
        x = math.exp(math.e)
        assert eval_growth_derivative(g2, x) == pytest.approx(
            1.0 / (x * math.log(x)), rel=1e-12
        )

    @pytest.mark.parametrize("m,x", [(1, 7.0), (2, 40.0), (3, 2.0e7)])
    def test_matches_finite_difference(self, m, x):
        g = GrowthFunction.iterated_log(m)
        h = x * 1e-5
        fd = (eval_growth(g, x + h) - eval_growth(g, x - h)) / (2.0 * h)
        assert eval_growth_derivative(g, x) == pytest.approx(fd, rel=1e-6)


class TestAdmissibility:
    def test_log1_exact_subadditivity(self):
        g = GrowthFunction.iterated_log(1)
        xs = [math.exp(2), math.exp(3), math.exp(4)]
        rep = verify_admissibility(g, xs, xs)
        assert rep.passed
        # log(xy) = log x + log y exactly, so the defect is pure roundoff
        assert rep.max_subadd_defect <= 1e-12

    def test_log2_grid(self):
        g = GrowthFunction.iterated_log(2)
        xs = [math.exp(math.e), math.exp(math.e**2), math.exp(math.e**3)]
        rep = verify_admissibility(g, xs, xs)
        assert rep.passed

    def test_linear_growth_fails(self):
        g = GrowthFunction.custom(lambda x: x, threshold_M=1.0, constant_C=5.0)
        xs = [10.0, 100.0, 1000.0]
        rep = verify_admissibility(g, xs, xs)
        assert not rep.passed

    @pytest.mark.parametrize(
        "m,lo,hi",
        [
            (1, 8.0, 1e300),
            (2, 1650.0, 1e300),
            # e_3(2) overflows float64, so an (e_m(2), 1e300) window would be
            # empty at m=3; audit above e_3(1) instead
            (3, 4.0e6, 1e300),
        ],
    )
    def test_iterated_log_passes_on_log_spaced_grids(self, m, lo, hi):
        g = GrowthFunction.iterated_log(m)
        xs = [float(v) for v in np.geomspace(lo, hi, 12)]
        rep = verify_admissibility(g, xs, xs)
        assert rep.passed
        assert rep.max_deriv_ratio <= g.constant_C

    def test_envelope_constant_finite(self):
        # Theta(x) <= C'(log x + 1) on sampled grids
        for m in (1, 2, 3):
            g = GrowthFunction.iterated_log(m)
            xs = [float(v) for v in np.geomspace(1.5, 1e200, 60)]
            c = log_envelope_constant(g, xs)
            assert math.isfinite(c) and c > 0.0


class TestSerialization:
    def test_iterated_log_roundtrip(self):
        g = GrowthFunction.iterated_log(2)
        d = g.to_dict()
        assert d == {"kind": "log_m", "m": 2}
        g2 = GrowthFunction.from_dict(d)
        assert eval_growth(g2, 100.0) == eval_growth(g, 100.0)

    def test_table_roundtrip(self):
        g = GrowthFunction.from_table([[1.0, 0.5], [10.0, 1.5], [100.0, 2.5]])
        g2 = GrowthFunction.from_dict(g.to_dict())
        for x in (1.0, 3.0, 50.0, 500.0):
            assert eval_growth(g2, x) == pytest.approx(eval_growth(g, x), rel=1e-12)

    def test_table_validation(self):
        with pytest.raises(ValueError):
            GrowthFunction.from_table([[1.0, 1.0]])
        with pytest.raises(ValueError):
            GrowthFunction.from_table([[1.0, 1.0], [2.0, 0.5]])
        with pytest.raises(ValueError):
            GrowthFunction.from_table([[0.5, 1.0], [2.0, 2.0]])
        with pytest.raises(ValueError):
            GrowthFunction.from_dict({"kind": "mystery"})

    def test_plain_custom_does_not_serialize(self):
        g = GrowthFunction.custom(lambda x: math.log(x) + 1.0)
        with pytest.raises(ValueError):
            g.to_dict()


class TestJunction:
    def test_junction_value(self):
        g = GrowthFunction.iterated_log(2)
        assert eval_growth(g, g.junction) > 0.0
        assert g.junction == pytest.approx(iterated_log_exp(2, 0.5, "exp"))

    def test_junction_only_for_iterated_log(self):
        g = GrowthFunction.custom(lambda x: 1.0 + math.log(x))
        with pytest.raises(AttributeError):
            g.junction

    def test_continuity_at_junction(self):
        for m in (1, 2, 3):
            g = GrowthFunction.iterated_log(m)
            j = g.junction
            below = eval_growth(g, j * (1.0 - 1e-9))
            above = eval_growth(g, j * (1.0 + 1e-9))
            assert below == pytest.approx(above, rel=1e-6)
