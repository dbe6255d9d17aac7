"""Gradient oracles for the Gamma-Normal model and bias/variance/MSE measurement."""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import DomainError, VindError
from .estimators import GradientEstimate
from .optimize import adam_init, adam_step
from .special import digamma, lgamma, trigamma

__all__ = [
    "kl_gamma",
    "true_gradient_gamma",
    "expected_vind_gradient_gamma",
    "oracle_estimator",
    "EstimatorStats",
    "measure_estimator",
    "mse_sweep",
    "variance_probe",
    "smooth",
]


def _positive(*xs):
    for x in xs:
        if not np.all(np.asarray(x) > 0):
            raise DomainError("Gamma parameters must be > 0")


def kl_gamma(alpha, beta, alpha_star, beta_star):
    """KL(Gamma(alpha, beta) || Gamma(alpha_star, beta_star)), rate parameterization."""
    _positive(alpha, beta, alpha_star, beta_star)
    return (
        (alpha - alpha_star) * digamma(alpha) - lgamma(alpha) + lgamma(alpha_star)
        + alpha_star * (np.log(beta) - np.log(beta_star)) + alpha * (beta_star - beta) / beta
    )


def true_gradient_gamma(alpha, beta, alpha_star, beta_star):
    """ELBO gradient (d/d alpha, d/d beta) when the posterior is Gamma(alpha_star, beta_star)."""
    _positive(alpha, beta, alpha_star, beta_star)
    d_alpha = (alpha - alpha_star) * trigamma(alpha) + (beta_star - beta) / beta
    d_beta = alpha_star / beta - alpha * beta_star / beta**2
    return -d_alpha, -d_beta


def expected_vind_gradient_gamma(alpha, beta, alpha_star, beta_star, eps, one_sided=False):
    """Exact mean of the coupled alpha-difference for a Gamma posterior.

    log p - log q is linear in (log theta, theta), so its expectation under
    Gamma(a, beta) is available through digamma; this is the quantity the
    finite-difference estimator targets, bias included.
    """
    _positive(alpha, beta, alpha_star, beta_star, eps)
    lo = alpha if one_sided else alpha - eps
    hi = alpha + eps
    if lo <= 0:
        raise DomainError("alpha - eps must be > 0 for a two-sided difference")
    d_log = digamma(hi) - digamma(lo)
    d_mean = (hi - lo) / beta
    return ((alpha_star - alpha) * d_log - (beta_star - beta) * d_mean) / (hi - lo)


def oracle_estimator(grad_fn, blocks):
    """Wrap ``grad_fn(params) -> tuple of values`` as a fit/measure estimator."""

    def estimator(*args):
        params, n = (args[0], 1) if len(args) == 2 else (args[2], args[4])
        vals = grad_fn(params)
        samples = {b: np.full(int(n), float(v)) for b, v in zip(blocks, vals)}
        return GradientEstimate.from_samples(samples, "oracle")

    return estimator


@dataclass
class EstimatorStats:
    bias: Dict[str, float]
    variance: Dict[str, float]
    mse: Dict[str, float]
    n_reps: int
    true_gradient: Dict[str, float]
    variance_se: Dict[str, float]
    mean: Dict[str, float]
    error: Optional[str] = None


def _stats(estimates, true_grad, n_reps, error=None):
    out = {k: {} for k in ("bias", "variance", "mse", "variance_se", "mean")}
    for b, e in estimates.items():
        e = np.asarray(e, dtype=float)
        t = float(true_grad[b])
        mean = float(np.mean(e))
        var = float(np.var(e))
        dev = e - t
        out["mean"][b] = mean
        out["bias"][b] = mean - t
        out["variance"][b] = var
        out["mse"][b] = float(np.mean(dev * dev))
        m4 = float(np.mean((e - mean) ** 4))
        out["variance_se"][b] = float(np.sqrt(max(m4 - var * var, 0.0) / max(len(e), 1)))
    return EstimatorStats(out["bias"], out["variance"], out["mse"], n_reps,
                          {b: float(true_grad[b]) for b in estimates}, out["variance_se"], out["mean"], error)


def measure_estimator(estimator, model, family, params, true_grad, n_per_estimate, n_reps, stream,
                      blocks=None, vectorized=True):
    """Bias, variance and MSE of ``estimator`` over ``n_reps`` independent estimates.

    ``estimator(model, family, params, stream, n)`` must return a
    :class:`GradientEstimate`. With ``vectorized`` (default) one call draws
    ``n_reps * n_per_estimate`` samples and the per-sample terms are grouped
    into replicates, which is equivalent for sample-average estimators.
    ``true_grad`` maps block -> scalar.
    """
    n_reps, n_per = int(n_reps), int(n_per_estimate)
    if n_reps < 100:
        raise ValueError("n_reps must be >= 100")
    blocks = list(true_grad) if blocks is None else list(blocks)
    if vectorized:
        est = estimator(model, family, params, stream, n_reps * n_per)
        if est.n_samples != n_reps * n_per or not all(b in est.samples for b in blocks):
            raise ValueError("estimator did not return per-sample terms")
        reps = {b: est.samples[b].reshape((n_reps, n_per) + est.samples[b].shape[1:]).mean(axis=1)
                for b in blocks}
        return _stats(reps, true_grad, n_reps)
    reps = {b: [] for b in blocks}
    error = None
    for s in stream.split(n_reps):
        try:
            est = estimator(model, family, params, s, n_per)
        except VindError as exc:
            error = f"{type(exc).__name__}: {exc}"
            break
        for b in blocks:
            reps[b].append(est.values[b])
    done = len(reps[blocks[0]])
    if done == 0:
        raise VindError(error or "no replicates completed")
    return _stats(reps, true_grad, done, error)


def mse_sweep(model, family, params, eps_list, iterations, stream, alpha_star, beta_star,
              estimators=None, n_per_estimate=2, n_reps=1000, lr=0.25, block="tau.alpha"):
    """Ascend alpha with the exact gradient and measure estimators at every step.

    ``estimators`` maps a name to ``(estimator_fn, uses_eps)``; the default
    is BBVI plus coupled VIND at every epsilon. Returns rows
    ``(iteration, estimator, epsilon, block, bias, variance, mse)`` where
    epsilon is NaN for estimators that do not use it. Bias is the Monte-Carlo
    bias; ``exact_bias`` in each row is the analytic VIND bias (NaN
    otherwise).
    """
    from .estimators import bbvi_gradient, vind_gradient

    if estimators is None:
        estimators = {"bbvi": (bbvi_gradient, False), "vind": (vind_gradient, True)}
    fname, local = block.split(".", 1)
    beta_name = f"{fname}.beta"

    def truth(p):
        return true_gradient_gamma(p[block], p[beta_name], alpha_star, beta_star)[0]

    state = adam_init(params, {block: lr})
    rows = []
    for it in range(int(iterations)):
        g_true = truth(params)
        for name, (fn, uses_eps) in estimators.items():
            eps_values = eps_list if uses_eps else [float("nan")]
            for eps in eps_values:
                p = params.with_blocks(**{block: {"epsilon": float(eps)}}) if uses_eps else params
                est = lambda m, f, pp, s, n, fn=fn: fn(m, f, pp, s, n, blocks=[block])  # noqa: E731
                st = measure_estimator(est, model, family, p, {block: g_true}, n_per_estimate, n_reps,
                                       stream.split(1)[0])
                exact = float("nan")
                if uses_eps and name == "vind":
                    exact = expected_vind_gradient_gamma(p[block], p[beta_name], alpha_star, beta_star, eps) - g_true
                rows.append({
                    "iter": it, "estimator": name, "epsilon": float(eps), "block": block,
                    "bias": st.bias[block], "variance": st.variance[block], "mse": st.mse[block],
                    "exact_bias": exact, "alpha": float(params[block]),
                })
        state, params = adam_step(state, {block: g_true}, params)
    return rows


def _block_variance(samples):
    s = np.asarray(samples, dtype=float)
    return float(np.sum(np.var(s.reshape(len(s), -1), axis=0)))


def variance_probe(snapshots, params, model, family, estimators, every_k, n_probe, stream):
    """Per-block variance of single-sample gradient terms at probed snapshots.

    ``snapshots`` is a list of ``(iteration, {block: value})`` (e.g. from a
    fit trace) and ``params`` a template supplying block metadata.
    ``estimators`` maps name -> estimator function. Matrix and vector blocks
    report the summed variance of their entries. Returns rows
    ``(iter, estimator, block, variance)``.
    """
    rows = []
    for it, values in snapshots:
        if it % int(every_k):
            continue
        p = params.with_values(values)
        s = stream.split(1)[0]
        for name, fn in estimators.items():
            est = fn(model, family, p, s, int(n_probe))
            for b, samp in est.samples.items():
                rows.append({"iter": it, "estimator": name, "block": b, "variance": _block_variance(samp)})
    return rows


def smooth(series, window):
    """Trailing moving average; the first ``window - 1`` entries average the available prefix."""
    window = int(window)
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)
