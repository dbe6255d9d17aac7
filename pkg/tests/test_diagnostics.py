import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from vind.diagnostics import (
    kl_gamma,
    measure_estimator,
    mse_sweep,
    oracle_estimator,
    smooth,
    true_gradient_gamma,
    variance_probe,
)
from vind.estimators import GradientEstimate, bbvi_gradient, vind_gradient, vind_uncoupled_gradient
from vind.families import FamilySpec, GammaFactor
from vind.models import TargetModel
from vind.optimize import FitConfig, fit
from vind.streams import RandomStream

from models_fixtures import gamma_normal


def kl_numeric_grad(a, b, a_s, b_s, h=1e-5):
    ga = (kl_gamma(a + h, b, a_s, b_s) - kl_gamma(a - h, b, a_s, b_s)) / (2 * h)
    gb = (kl_gamma(a, b + h, a_s, b_s) - kl_gamma(a, b - h, a_s, b_s)) / (2 * h)
    return -ga, -gb


# -- closed-form KL and its gradient ------------------------------------------------


@pytest.mark.parametrize("a, b, a_s, b_s", [(2.0, 3.0, 5.0, 1.5), (0.7, 0.2, 1.3, 4.0), (110.0, 130.0, 150.0, 140.0)])
def test_kl_gamma_matches_quadrature(a, b, a_s, b_s):
    q, p = stats.gamma(a, scale=1 / b), stats.gamma(a_s, scale=1 / b_s)
    lo, hi = q.ppf(1e-15), q.isf(1e-15)
    ref, _ = integrate.quad(lambda x: q.pdf(x) * (q.logpdf(x) - p.logpdf(x)), lo, hi, limit=200,
                            epsabs=1e-13, epsrel=1e-11)
    assert kl_gamma(a, b, a_s, b_s) == pytest.approx(ref, rel=1e-7, abs=1e-11)


def test_true_gradient_zero_at_optimum():
    assert true_gradient_gamma(10.0, 9.0, 10.0, 9.0) == (0.0, 0.0)
    assert true_gradient_gamma(3.3, 0.4, 3.3, 0.4) == pytest.approx((0.0, 0.0), abs=1e-14)
    assert true_gradient_gamma(11.0, 9.0, 10.0, 9.0)[0] < 0
    assert true_gradient_gamma(9.0, 9.0, 10.0, 9.0)[0] > 0


def test_true_gradient_matches_numerical_kl_derivative():
    ga, gb = true_gradient_gamma(8.0, 9.0, 10.0, 9.0)
    na, nb = kl_numeric_grad(8.0, 9.0, 10.0, 9.0)
    assert ga == pytest.approx(na, rel=1e-6)
    assert gb == pytest.approx(nb, rel=1e-6)


def test_true_gradient_rejects_nonpositive():
    with pytest.raises(Exception):
        true_gradient_gamma(-1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("start", [(8.0, 7.0), (12.0, 11.5)])
def test_true_gradient_drives_fit_to_posterior(start):
    a_s, b_s = 10.0, 9.0
    fam = FamilySpec([GammaFactor("g")])
    target = TargetModel(lambda t: stats.gamma(a_s, scale=1 / b_s).logpdf(t["g"]))
    params = fam.params({"g.alpha": start[0], "g.beta": start[1]}, {"g.alpha": 1.0})

    def grad(p):
        return true_gradient_gamma(p["g.alpha"], p["g.beta"], a_s, b_s)

    trace = fit(target, fam, params, FitConfig(oracle_estimator(grad, ["g.alpha", "g.beta"]), iterations=3000,
                                               lrs={"g.alpha": 0.01, "g.beta": 0.01}, n_elbo=1))
    p = trace.final_params
    assert abs(p["g.alpha"] - a_s) <= 0.05 and abs(p["g.beta"] - b_s) <= 0.05


# -- measurement ---------------------------------------------------------------------


def test_oracle_estimator_has_no_error(stream):
    model, fam, params, post = gamma_normal()
    g = true_gradient_gamma(params["tau.alpha"], params["tau.beta"], *post)
    est = oracle_estimator(lambda p: g, ["tau.alpha", "tau.beta"])
    s = measure_estimator(est, model, fam, params, {"tau.alpha": g[0], "tau.beta": g[1]}, 2, 100, stream)
    for b, v in zip(["tau.alpha", "tau.beta"], g):
        assert s.bias[b] == pytest.approx(0.0, abs=1e-14 * abs(v))
        assert s.variance[b] == pytest.approx(0.0, abs=1e-28 * v * v)
    assert s.n_reps == 100


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=100, max_size=300), st.floats(-1e6, 1e6))
def test_mse_is_bias_squared_plus_variance(values, truth):
    values = np.array(values)

    def fake(model, family, params, stream, n):
        return GradientEstimate.from_samples({"x": values[:n]}, "fake")

    s = measure_estimator(fake, None, None, None, {"x": truth}, 1, len(values), None)
    assert s.mse["x"] == pytest.approx(s.bias["x"] ** 2 + s.variance["x"], rel=1e-9, abs=1e-300)


def test_measure_needs_enough_reps(stream):
    model, fam, params, _ = gamma_normal()
    with pytest.raises(ValueError):
        measure_estimator(bbvi_gradient, model, fam, params, {"tau.alpha": 0.0}, 2, 99, stream)


def test_bbvi_error_is_mostly_variance(stream):
    # 10^5 reps so the sampling noise in bias^2 stays below variance / 10^3
    model, fam, params, post = gamma_normal()
    g = true_gradient_gamma(params["tau.alpha"], params["tau.beta"], *post)[0]
    s = measure_estimator(bbvi_gradient, model, fam, params, {"tau.alpha": g}, 2, 10**5, stream, blocks=["tau.alpha"])
    assert s.variance["tau.alpha"] / s.mse["tau.alpha"] >= 0.999


def test_vind_variance_below_bbvi_paired(seed):
    model, fam, params, post = gamma_normal(eps=1.0)
    g = {"tau.alpha": true_gradient_gamma(params["tau.alpha"], params["tau.beta"], *post)[0]}
    v = measure_estimator(vind_gradient, model, fam, params, g, 2, 1000, RandomStream(seed), blocks=["tau.alpha"])
    b = measure_estimator(bbvi_gradient, model, fam, params, g, 2, 1000, RandomStream(seed), blocks=["tau.alpha"])
    assert v.variance["tau.alpha"] < b.variance["tau.alpha"]


def test_sequential_measurement_matches_vectorized_in_distribution(seed):
    model, fam, params, post = gamma_normal(eps=1.0)
    g = {"tau.alpha": 0.0}
    a = measure_estimator(vind_gradient, model, fam, params, g, 2, 400, RandomStream(seed), blocks=["tau.alpha"])
    b = measure_estimator(vind_gradient, model, fam, params, g, 2, 400, RandomStream(seed + 1), blocks=["tau.alpha"],
                          vectorized=False)
    se = np.sqrt(a.variance["tau.alpha"] / 400 + b.variance["tau.alpha"] / 400)
    assert abs(a.mean["tau.alpha"] - b.mean["tau.alpha"]) <= 5 * se
    assert 0.7 < a.variance["tau.alpha"] / b.variance["tau.alpha"] < 1.4


def test_mse_sweep_rows(stream):
    model, fam, params, (a_s, b_s) = gamma_normal()
    rows = mse_sweep(model, fam, params, [0.1, 1.0], 3, stream, a_s, b_s, n_reps=100)
    assert len(rows) == 3 * (2 + 1)
    assert [r["iter"] for r in rows] == [0, 0, 0, 1, 1, 1, 2, 2, 2]
    assert {r["estimator"] for r in rows} == {"bbvi", "vind"}
    for r in rows:
        assert r["mse"] == pytest.approx(r["bias"] ** 2 + r["variance"], rel=1e-9)
        assert np.isnan(r["epsilon"]) == (r["estimator"] == "bbvi")
    # the ascent follows the exact gradient, so alpha moves toward alpha*
    assert rows[0]["alpha"] < rows[-1]["alpha"] < a_s


def test_mse_sweep_extra_estimators(stream):
    model, fam, params, (a_s, b_s) = gamma_normal()
    ests = {"vind": (vind_gradient, True), "vind_uncoupled": (vind_uncoupled_gradient, True),
            "bbvi": (bbvi_gradient, False)}
    rows = mse_sweep(model, fam, params, [1.0, 10.0, 100.0], 2, stream, a_s, b_s, estimators=ests, n_reps=100)
    assert len(rows) == 2 * (3 + 3 + 1)


# -- variance probe ------------------------------------------------------------------


def probe_snapshots(params, n):
    return [(i, {"tau.alpha": params["tau.alpha"] + i / 10}) for i in range(n)]


def test_variance_probe_at_init_matches_measure(seed):
    model, fam, params, _ = gamma_normal()
    rows = variance_probe(probe_snapshots(params, 1), params, model, fam, {"vind": vind_gradient}, 1, 1000,
                          RandomStream(seed))
    direct = measure_estimator(vind_gradient, model, fam, params, {"tau.alpha": 0.0, "tau.beta": 0.0}, 1, 1000,
                               RandomStream(seed).split(1)[0])
    got = {r["block"]: r["variance"] for r in rows}
    assert got["tau.alpha"] == pytest.approx(direct.variance["tau.alpha"], rel=1e-12)


def test_variance_probe_schedule_and_determinism(seed):
    model, fam, params, _ = gamma_normal()
    ests = {"vind": vind_gradient, "bbvi": bbvi_gradient}
    a = variance_probe(probe_snapshots(params, 7), params, model, fam, ests, 3, 200, RandomStream(seed))
    b = variance_probe(probe_snapshots(params, 7), params, model, fam, ests, 3, 200, RandomStream(seed))
    assert a == b
    assert sorted({r["iter"] for r in a}) == [0, 3, 6]
    assert len(a) == 3 * 2 * 2


# -- smoothing -----------------------------------------------------------------------


def test_smooth_examples():
    x = np.array([3.0, -1.0, 4.0, 1.5])
    np.testing.assert_array_equal(smooth(x, 1), x)
    np.testing.assert_allclose(smooth(np.full(6, 2.5), 4), 2.5)
    np.testing.assert_allclose(smooth([0, 10], 2), [0, 5])
    assert smooth([], 3).size == 0
    with pytest.raises(ValueError):
        smooth(x, 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.integers(1, 20))
def test_smooth_is_trailing_mean(xs, window):
    out = smooth(xs, window)
    ref = [np.mean(xs[max(0, i + 1 - window): i + 1]) for i in range(len(xs))]
    np.testing.assert_allclose(out, ref, rtol=1e-9, atol=1e-9)
