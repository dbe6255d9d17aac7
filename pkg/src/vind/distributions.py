"""Base samplers and normalized log-densities.

Samplers are vectorized: ``size`` gives the batch shape and every parameter
broadcasts against it. Log-densities return ``-inf`` outside the support and
raise :class:`DomainError` for invalid parameters or non-finite input.

Matrix conventions: the Wishart scale is ``V`` and the multivariate Student
is parameterized by a symmetric scale ``S`` with shape matrix ``S @ S``.
"""

import numpy as np

from .errors import DomainError
from .special import lgamma, multigammaln

__all__ = [
    "sample_gamma",
    "sample_chi_square",
    "sample_std_normal_vec",
    "sample_wishart_identity",
    "sample_poisson",
    "sample_poisson_positive",
    "log_pdf_gamma",
    "log_pdf_beta",
    "log_pdf_dirichlet",
    "log_pdf_normal_diag",
    "log_pdf_wishart",
    "log_pdf_student_mv",
    "log_pmf_poisson",
    "is_psd",
    "sym_sqrt",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _require_positive(name, value):
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)) or np.any(value <= 0):
        raise DomainError(f"{name} must be finite and > 0, got {value}")
    return value


def _require_finite(name, value):
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{name} contains non-finite values")
    return value


def _batch_shape(size, *params):
    if size is None:
        return np.broadcast_shapes(*(np.shape(p) for p in params))
    return tuple(np.atleast_1d(size).astype(int))


def _standard_gamma(stream, shape):
    """Gamma(shape, 1) draws for a flat array of shapes (Marsaglia-Tsang).

    Shapes below 1 are boosted: Gamma(a) = Gamma(a + 1) * U**(1/a).
    """
    shape = np.asarray(shape, dtype=float).ravel()
    boost = shape < 1.0
    a = np.where(boost, shape + 1.0, shape)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(a)
    pending = np.arange(a.size)
    while pending.size:
        x = stream.normal(pending.size)
        u = stream.uniform(pending.size)
        dp = d[pending]
        v = 1.0 + c[pending] * x
        ok = v > 0
        v3 = np.where(ok, v, 1.0) ** 3
        accept = ok & (np.log(u) < 0.5 * x * x + dp - dp * v3 + dp * np.log(v3))
        out[pending[accept]] = dp[accept] * v3[accept]
        pending = pending[~accept]
    if boost.any():
        u = stream.uniform(int(boost.sum()))
        out[boost] *= u ** (1.0 / shape[boost])
    return out


def sample_gamma(stream, shape, rate=1.0, size=None):
    """Draw from Gamma(shape, rate), density proportional to x**(shape-1) exp(-rate x)."""
    shape = _require_positive("shape", shape)
    rate = _require_positive("rate", rate)
    bshape = _batch_shape(size, shape, rate)
    a = np.broadcast_to(shape, bshape)
    g = _standard_gamma(stream, a).reshape(bshape)
    out = g / rate
    return out if out.ndim else float(out)


def sample_chi_square(stream, df, size=None):
    df = _require_positive("df", df)
    return 2.0 * sample_gamma(stream, df / 2.0, 1.0, size)


def sample_std_normal_vec(stream, p, size=None):
    """Standard normal vectors of length ``p``; result shape ``size + (p,)``."""
    if int(p) != p or p < 1:
        raise DomainError(f"dimension p must be a positive integer, got {p}")
    lead = () if size is None else tuple(np.atleast_1d(size).astype(int))
    return stream.normal(lead + (int(p),))


def sample_wishart_identity(stream, df, p, size=None):
    """Draw W(df, I_p) by the Bartlett decomposition; needs df > p - 1."""
    p = int(p)
    if p < 1:
        raise DomainError("dimension p must be >= 1")
    df = float(df)
    if not np.isfinite(df) or df <= p - 1:
        raise DomainError(f"Wishart degrees of freedom must satisfy df > p - 1 = {p - 1}, got {df}")
    lead = () if size is None else tuple(np.atleast_1d(size).astype(int))
    n = int(np.prod(lead)) if lead else 1
    A = np.zeros((n, p, p))
    diag_df = df - np.arange(p)
    chi = 2.0 * _standard_gamma(stream, np.broadcast_to(diag_df / 2.0, (n, p))).reshape(n, p)
    idx = np.arange(p)
    A[:, idx, idx] = np.sqrt(chi)
    rows, cols = np.tril_indices(p, -1)
    if rows.size:
        A[:, rows, cols] = stream.normal((n, rows.size))
    W = A @ np.swapaxes(A, -1, -2)
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    return W.reshape(lead + (p, p))


def sample_poisson(stream, rate, size=None):
    rate = _require_positive("rate", rate)
    bshape = _batch_shape(size, rate)
    out = stream.generator.poisson(np.broadcast_to(rate, bshape))
    return out if np.ndim(out) else int(out)


def sample_poisson_positive(stream, rate, size=None):
    """Poisson(rate) conditioned on being >= 1.

    Uses the first arrival of a unit-rate Poisson process on [0, rate]: given at
    least one event, the first arrival T is exponential truncated to [0, rate]
    and the remaining count is Poisson(rate - T).
    """
    rate = _require_positive("rate", rate)
    bshape = _batch_shape(size, rate)
    r = np.broadcast_to(rate, bshape)
    u = stream.uniform(bshape)
    t = -np.log1p(u * np.expm1(-r))
    rest = np.clip(r - t, 0.0, None)
    out = 1 + stream.generator.poisson(rest)
    return out if np.ndim(out) else int(out)


# -- log densities --------------------------------------------------------


def log_pdf_gamma(theta, alpha, beta):
    theta = _require_finite("theta", theta)
    alpha = _require_positive("alpha", alpha)
    beta = _require_positive("beta", beta)
    pos = theta > 0
    t = np.where(pos, theta, 1.0)
    val = alpha * np.log(beta) - lgamma(alpha) + (alpha - 1.0) * np.log(t) - beta * t
    out = np.where(pos, val, -np.inf)
    return out if out.ndim else float(out)


def log_pdf_beta(theta, alpha, beta):
    theta = _require_finite("theta", theta)
    alpha = _require_positive("alpha", alpha)
    beta = _require_positive("beta", beta)
    inside = (theta > 0) & (theta < 1)
    t = np.where(inside, theta, 0.5)
    val = (
        lgamma(alpha + beta) - lgamma(alpha) - lgamma(beta)
        + (alpha - 1.0) * np.log(t) + (beta - 1.0) * np.log1p(-t)
    )
    out = np.where(inside, val, -np.inf)
    return out if out.ndim else float(out)


def log_pdf_dirichlet(theta, alpha, simplex_tol=1e-9):
    """Log-density with respect to Lebesgue measure on the first p - 1 coordinates."""
    theta = _require_finite("theta", theta)
    alpha = _require_positive("alpha", alpha)
    inside = np.all(theta > 0, axis=-1) & (np.abs(theta.sum(axis=-1) - 1.0) <= simplex_tol)
    t = np.where(theta > 0, theta, 1.0)
    val = lgamma(alpha.sum()) - np.sum(lgamma(alpha)) + np.sum((alpha - 1.0) * np.log(t), axis=-1)
    out = np.where(inside, val, -np.inf)
    return out if out.ndim else float(out)


def log_pdf_normal_diag(theta, mu, scale):
    """Diagonal Gaussian; ``scale`` holds per-coordinate standard deviations."""
    theta = _require_finite("theta", theta)
    mu = _require_finite("mu", mu)
    scale = _require_positive("scale", scale)
    z = (theta - mu) / scale
    val = -0.5 * z * z - np.log(scale) - 0.5 * _LOG_2PI
    out = np.sum(np.broadcast_to(val, np.broadcast_shapes(val.shape, mu.shape)), axis=-1)
    return out if np.ndim(out) else float(out)


def _eigh_checked(M, name):
    M = _require_finite(name, M)
    if M.shape[-1] != M.shape[-2]:
        raise DomainError(f"{name} must be square")
    if not np.allclose(M, np.swapaxes(M, -1, -2), rtol=1e-10, atol=1e-12 * np.max(np.abs(M))):
        raise DomainError(f"{name} must be symmetric")
    return np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))


def log_pdf_wishart(S, df, V):
    """Wishart log-density W(S; df, V) for positive-definite S."""
    S = _require_finite("S", S)
    V = np.asarray(V, dtype=float)
    p = V.shape[-1]
    df = float(df)
    if not np.isfinite(df) or df <= p - 1:
        raise DomainError(f"Wishart df must satisfy df > p - 1 = {p - 1}, got {df}")
    evals_v, evecs_v = _eigh_checked(V, "V")
    if np.any(evals_v <= 0):
        raise DomainError("Wishart scale V must be positive definite")
    Vinv = (evecs_v / evals_v) @ evecs_v.T
    logdet_v = np.sum(np.log(evals_v))
    Ssym = 0.5 * (S + np.swapaxes(S, -1, -2))
    evals = np.linalg.eigvalsh(Ssym)
    pd = np.all(evals > 0, axis=-1)
    logdet_s = np.sum(np.log(np.where(evals > 0, evals, 1.0)), axis=-1)
    tr = np.einsum("ij,...ji->...", Vinv, Ssym)
    val = (
        0.5 * (df - p - 1.0) * logdet_s - 0.5 * tr
        - 0.5 * df * p * np.log(2.0) - 0.5 * df * logdet_v - multigammaln(0.5 * df, p)
    )
    out = np.where(pd, val, -np.inf)
    return out if np.ndim(out) else float(out)


def log_pdf_student_mv(theta, df, mu, S):
    """Multivariate Student with location ``mu``, symmetric scale ``S`` (shape ``S @ S``)."""
    theta = _require_finite("theta", theta)
    mu = _require_finite("mu", mu)
    df = float(_require_positive("df", df))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    p = S.shape[-1]
    evals, evecs = _eigh_checked(S, "S")
    if np.any(evals <= 0):
        raise DomainError("Student scale S must be positive definite")
    # (theta - mu)^T S^-2 (theta - mu)
    proj = ((theta - mu) @ evecs) / evals
    delta = np.sum(proj * proj, axis=-1)
    out = (
        lgamma(0.5 * (df + p)) - lgamma(0.5 * df) - 0.5 * p * np.log(df * np.pi)
        - np.sum(np.log(evals)) - 0.5 * (df + p) * np.log1p(delta / df)
    )
    return out if np.ndim(out) else float(out)


def log_pmf_poisson(k, rate):
    k = _require_finite("k", k)
    rate = _require_positive("rate", rate)
    valid = (k >= 0) & (k == np.floor(k))
    kk = np.where(valid, k, 0.0)
    val = kk * np.log(rate) - rate - lgamma(kk + 1.0)
    out = np.where(valid, val, -np.inf)
    return out if out.ndim else float(out)


# -- matrix helpers -------------------------------------------------------


def is_psd(S, rtol=1e-12, eig_tol=1e-10):
    """Check symmetry (relative ``rtol``) and eigenvalues >= -eig_tol * largest."""
    S = np.asarray(S, dtype=float)
    scale = np.max(np.abs(S), axis=(-1, -2), keepdims=True)
    sym = np.all(np.abs(S - np.swapaxes(S, -1, -2)) <= rtol * scale, axis=(-1, -2))
    evals = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))
    top = evals[..., -1]
    return sym & np.all(evals >= -eig_tol * np.abs(top)[..., None], axis=-1)


def sym_sqrt(V, floor=1e-12):
    """Symmetric square root C with C @ C = V, eigenvalues floored at ``floor``."""
    V = np.asarray(V, dtype=float)
    evals, evecs = np.linalg.eigh(0.5 * (V + V.T))
    return (evecs * np.sqrt(np.maximum(evals, floor))) @ evecs.T
