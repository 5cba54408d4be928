import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoconc.bounds import (
    Hypotheses,
    InapplicableBound,
    applicable_curves,
    bennett,
    bennett_h,
    bounded_difference,
    coherent,
    compute_hypotheses,
    curves_to_csv,
    decoupled,
    df_lower,
    df_tails,
    df_upper,
    generic_entropy_bound,
    golden_section_minimize,
    lower_tail_W,
    self_bounded,
    verify_decoupling,
)
from thermoconc.empirical import exact_tail, zoo
from thermoconc.identities import random_instance
from thermoconc.space import TabulatedFunction, expectation
from thermoconc.thermo import derived_statistics

from conftest import coin_sum, coins


def hyp(**kw):
    base = dict(R2_sup=1.0, V=1.0, W=1.0, Df_sup=1.0, A_coherent=1.0, upper_dev_max=0.5, inf_dev_max=1.0,
                coherence_holds=True, self_bounds=((1.0, 0.0),), decouple=None)
    base.update(kw)
    return Hypotheses(**base)


# --- hypotheses -----------------------------------------------------------------


def test_hypotheses_coin_sum_4():
    h = compute_hypotheses(coin_sum(coins(4)))
    assert (h.R2_sup, h.V, h.Df_sup, h.W) == (4.0, 1.0, 4.0, 2.0)
    assert h.self_bound == (1.0, 0.0)
    assert h.coherence_holds and h.A_coherent == pytest.approx(1.0)
    assert h.range_le_one_upper and h.range_le_one_inf


def test_hypotheses_constant():
    h = compute_hypotheses(TabulatedFunction.constant(coins(3), 2.0))
    assert (h.R2_sup, h.V, h.W, h.Df_sup, h.A_coherent) == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert h.coherence_holds


def test_hypotheses_max_of_two():
    space = coins(2)
    mx = TabulatedFunction.from_atoms(space, lambda a, b: float(max(a, b)))
    h = compute_hypotheses(mx)
    assert h.R2_sup == 2.0
    # Df = sum_k (f - inf_k f)^2: 1 at (0,1) and (1,0), 0 elsewhere
    assert h.Df_sup == 1.0


def test_hypotheses_recomputable_from_statistics():
    _, f, _ = random_instance(3, 3)
    h = compute_hypotheses(f)
    R2, S2, D, W = derived_statistics(f)
    assert (h.R2_sup, h.V, h.Df_sup, h.W) == (R2.max(), S2.max(), D.max(), W.max())
    assert min(h.R2_sup, h.V, h.Df_sup, h.W) >= 0


def test_coherence_gate_on_biased_coins():
    space = coins(10, p=0.9)
    h = compute_hypotheses(coin_sum(space))
    assert h.coherence_holds and h.A_coherent == pytest.approx(0.9, abs=1e-12)
    low = compute_hypotheses(coin_sum(coins(3, p=0.2)))
    assert not low.coherence_holds and low.A_coherent is None
    with pytest.raises(InapplicableBound):
        coherent(low)


def test_decoupling_certificate():
    f = coin_sum(coins(3))
    assert verify_decoupling(f, f) == 1.0
    with pytest.raises(InapplicableBound):
        verify_decoupling(f, f - 1)
    with pytest.raises(InapplicableBound):
        verify_decoupling(f, f, a=0.5)
    h = compute_hypotheses(f, decouple_g=f)
    assert h.decouple[1] == 1.0


# --- closed forms --------------------------------------------------------------


def test_bounded_difference_closed_form():
    c = bounded_difference(hyp(R2_sup=2.0))
    assert c(1.0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert c(0.0) == 1.0
    assert c.beta_star(1.0) == pytest.approx(2.0)


def test_bounded_difference_on_two_coins():
    f = coin_sum(coins(2))
    c = bounded_difference(compute_hypotheses(f))
    assert c(0.5) == pytest.approx(math.exp(-0.25), rel=1e-14)
    assert exact_tail(f, 0.5).probability == 0.25


def test_bennett_closed_form():
    bn, bs = bennett(hyp(V=1.0))
    assert bn(1.0) == pytest.approx(math.exp(-(2 * math.log(2) - 1)), rel=1e-13)
    assert bn(1.0) == pytest.approx(0.67957, abs=5e-6)
    assert bn(0.0) == bs(0.0) == 1.0
    assert bn.beta_star(1.0) == pytest.approx(math.log(2.0))
    assert bs(1.0) == pytest.approx(math.exp(-1 / (2 + 2 / 3)), rel=1e-14)
    with pytest.raises(InapplicableBound):
        bennett(hyp(upper_dev_max=1.5))
    with pytest.raises(ValueError):
        bennett(hyp(), scale=0)


def test_bennett_h_series_branch():
    for u in (1e-9, 1e-5, 1e-3, 0.5, 10.0):
        ref = (1 + u) * math.log1p(u) - u
        assert float(bennett_h(u)) == pytest.approx(ref, rel=1e-9)


def test_coherent_closed_form():
    h = compute_hypotheses(coin_sum(coins(10, p=0.9)))
    assert coherent(h)(1.0) == pytest.approx(math.exp(-1 / 1.8), rel=1e-12)
    extreme = coherent(hyp(A_coherent=0.0))
    assert extreme(0.0) == 1.0 and extreme(1e-6) == 0.0


def test_coherent_matches_bounded_difference_for_fair_coins():
    h = compute_hypotheses(coin_sum(coins(6)))
    assert h.A_coherent == pytest.approx(6 / 4)
    for t in (0.3, 1.0, 2.5):
        assert coherent(h)(t) == pytest.approx(bounded_difference(h)(t), rel=1e-12)


def test_lower_tail_W():
    h = compute_hypotheses(coin_sum(coins(4)))
    c = lower_tail_W(h)
    assert c.side == "lower"
    assert c(1.0) == pytest.approx(math.exp(-0.25), rel=1e-14)
    assert c(0.0) == 1.0
    degenerate = lower_tail_W(compute_hypotheses(TabulatedFunction.constant(coins(2), 1.0)))
    assert degenerate(0.0) == 1.0 and degenerate(0.1) == 0.0


def test_df_tails():
    up, lo, relaxed = df_tails(hyp(Df_sup=1.0))
    assert up(1.0) == pytest.approx(math.exp(-0.5), rel=1e-14)
    assert up(0.0) == lo(0.0) == relaxed(0.0) == 1.0
    assert lo(1.0) == pytest.approx(math.exp(-(2 * math.log(2) - 1)), rel=1e-13)
    assert relaxed(1.0) == pytest.approx(math.exp(-1 / (2 + 2 / 3)), rel=1e-14)
    with pytest.raises(InapplicableBound):
        df_lower(hyp(inf_dev_max=2.0))
    assert df_upper(hyp(inf_dev_max=2.0, Df_sup=1.0))(1.0) == up(1.0)


def test_self_bounded_closed_form():
    up, lo = self_bounded(hyp(self_bounds=((1.0, 0.0),)), Ef=2.0)
    assert up(1.0) == pytest.approx(math.exp(-0.2), rel=1e-14)
    assert lo(1.0) == pytest.approx(math.exp(-1 / 4), rel=1e-14)
    assert up(0.0) == lo(0.0) == 1.0
    with pytest.raises(InapplicableBound):
        self_bounded(hyp(self_bounds=()), Ef=2.0)
    with pytest.raises(InapplicableBound):
        self_bounded(hyp(self_bounds=((1 / 3, 0.5),)), Ef=2.0)
    (only_up,) = self_bounded(hyp(self_bounds=((1 / 3, 0.5),)), Ef=2.0, lower=False)
    assert only_up(1.0) == pytest.approx(math.exp(-1 / (2 * (2 / 3 + 0.5 + 1 / 6))), rel=1e-14)


def test_self_bounded_takes_best_certificate():
    h = hyp(self_bounds=((1 / 3, 2.0), (1.0, 0.0)))
    (up,) = self_bounded(h, Ef=1.0, lower=False)
    for t in (0.5, 1.0, 4.0):
        a = math.exp(-t * t / (2 * (1 / 3 + 2 + t / 6)))
        b = math.exp(-t * t / (2 * (1 + t / 2)))
        assert up(t) == pytest.approx(min(a, b), rel=1e-14)


def test_decoupled_closed_form():
    g = coin_sum(coins(2))
    up, lo = decoupled(hyp(decouple=(g, 1.0)), Eg=2.0)
    assert up(1.0) == pytest.approx(math.exp(-1 / 9.5), rel=1e-14)
    assert up(1.0) == pytest.approx(0.900088, abs=5e-7)
    assert lo(1.0) == pytest.approx(math.exp(-1 / 9.0), rel=1e-14)
    assert up(0.0) == lo(0.0) == 1.0
    with pytest.raises(InapplicableBound):
        decoupled(hyp(), Eg=2.0)


def test_binomial_examples_at_t3():
    f = coin_sum(coins(10))
    h = compute_hypotheses(f, decouple_g=f)
    exact = exact_tail(f, 3.0).probability
    assert exact == pytest.approx(11 / 1024, abs=1e-15)
    assert h.V == 2.5
    for c in (*bennett(h), self_bounded(h, 5.0)[0], decoupled(h, 5.0)[0], bounded_difference(h)):
        assert c(3.0) >= exact


# --- generic bound ---------------------------------------------------------------


@pytest.mark.parametrize("R2,t", [(2.0, 1.0), (4.0, 0.3), (10.0, 3.0), (1.0, 2.0)])
def test_generic_reproduces_bounded_difference(R2, t):
    f = coin_sum(coins(2))  # unused by a custom envelope
    bound, beta = generic_entropy_bound(f, t, lambda g: g * g * R2 / 8, envelope_limit=R2 / 8)
    assert bound == pytest.approx(math.exp(-2 * t * t / R2), rel=1e-8)
    assert beta == pytest.approx(4 * t / R2, abs=1e-6)


def test_generic_zero_t_and_errors():
    f = coin_sum(coins(2))
    assert generic_entropy_bound(f, 0.0) == (1.0, 0.0)
    with pytest.raises(ValueError):
        generic_entropy_bound(f, -1.0)


def test_generic_bracket_grows():
    # the optimum 4t/R2 = 400 sits beyond the default beta_max
    f = coin_sum(coins(2))
    bound, beta = generic_entropy_bound(f, 100.0, lambda g: g * g / 8, envelope_limit=1 / 8)
    assert beta == pytest.approx(400.0, abs=1e-5)
    assert bound == pytest.approx(math.exp(-2 * 100.0**2), rel=1e-8, abs=1e-300)


def test_generic_exact_envelope_on_two_coins():
    f = coin_sum(coins(2))
    h = compute_hypotheses(f, decouple_g=f)
    bound, _ = generic_entropy_bound(f, 0.5)
    assert bound >= 0.25
    curves, _ = applicable_curves(h, expectation(f))
    for c in curves:
        if c.side == "upper":
            assert bound <= c(0.5) * (1 + 1e-9), c.name


def test_generic_below_catalog_on_zoo():
    for entry in zoo():
        if entry.name == "tsp_6":
            continue
        Ef = expectation(entry.f)
        curves, _ = applicable_curves(entry.hypotheses, Ef)
        for t in np.array([0.15, 0.4]) * np.ptp(entry.f.table()):
            bound, _ = generic_entropy_bound(entry.f, t)
            assert bound >= exact_tail(entry.f, t).probability - 1e-12
            for c in curves:
                if c.side == "upper":
                    assert bound <= c(t) * (1 + 1e-8) + 1e-15, (entry.name, c.name, t)


def test_golden_section():
    x, v = golden_section_minimize(lambda b: (b - 1.3) ** 2 + 2, 0.0, 5.0)
    # a flat quadratic minimum is only resolvable to about sqrt(eps)
    assert x == pytest.approx(1.3, abs=1e-7) and v == pytest.approx(2.0)
    x, _ = golden_section_minimize(lambda b: b, 0.0, 5.0)
    assert x == 0.0


# --- curve properties ----------------------------------------------------------


def all_curves():
    h = hyp(R2_sup=3.0, V=0.7, W=1.2, Df_sup=0.9, A_coherent=0.4, self_bounds=((1 / 3, 0.2), (1.0, 0.0)),
            decouple=(None, 1.5))
    return [bounded_difference(h), *bennett(h), coherent(h), lower_tail_W(h), *df_tails(h),
            *self_bounded(h, 1.1), *decoupled(h, 0.8)]


def test_curves_non_increasing_and_one_at_zero():
    t = np.linspace(0, 20, 401)
    for c in all_curves():
        v = c(t)
        assert v[0] == 1.0, c.name
        assert np.all((0 <= v) & (v <= 1))
        assert np.all(np.diff(v) <= 1e-15), c.name


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 50), st.floats(0, 200))
def test_bennett_below_bernstein(V, t):
    bn, bs = bennett(hyp(V=V))
    assert bn(t) <= bs(t) * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(0, 10))
def test_bounded_difference_scale_covariance(c, t):
    f = coin_sum(coins(3))
    a = bounded_difference(compute_hypotheses(f))(t)
    b = bounded_difference(compute_hypotheses(c * f))(c * t)
    assert b == pytest.approx(a, rel=1e-10, abs=1e-300)


def test_csv_export():
    curves = all_curves()[:3]
    text = curves_to_csv(curves, [0.0, 1.0])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["t", "bound_name", "bound_value", "beta_star"]
    assert len(rows) == 6
    assert float(rows[3]["bound_value"]) == pytest.approx(curves[0](1.0), rel=1e-11)


def test_applicable_curves_reports_skips():
    f = 2 * coin_sum(coins(3, p=0.2))
    curves, skipped = applicable_curves(compute_hypotheses(f), expectation(f))
    names = {c.name for c in curves}
    assert {"bounded_difference", "lower_tail_W", "df_upper"} <= names
    assert {"bennett", "coherent", "df_lower", "self_bounded_lower", "decoupled_upper"} <= set(skipped)
