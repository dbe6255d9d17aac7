"""Target log-densities for the three experiments.

Each model exposes ``log_p(theta)`` and ``grad_log_p(theta)`` where
``theta`` maps variable names to arrays with a leading batch axis, so a
whole batch of draws is scored in one call. The variable names match the
factor names of the variational families built in
:mod:`vind.experiments`.

Student-t convention: the shape matrix is Sigma and the model is written in
terms of the precision-like ``prec = inv(Sigma)``:

    log St(x; mu, Sigma, nu) = lgamma((nu + d)/2) - lgamma(nu/2) - d/2 log(nu pi)
                               + 1/2 log|prec| - (nu + d)/2 log(1 + r' prec r / nu)
"""

from dataclasses import dataclass, field

import numpy as np

from .distributions import log_pdf_gamma, log_pdf_wishart, sample_chi_square, sample_gamma, sample_std_normal_vec
from .errors import DataError, DomainError
from .special import digamma, lgamma

__all__ = [
    "TargetModel",
    "family_target",
    "GammaNormalData",
    "GammaNormalModel",
    "gamma_normal_log_density",
    "conjugate_posterior_gamma_normal",
    "synth_gamma_normal",
    "LinRegData",
    "LinRegModel",
    "linreg_log_density",
    "conjugate_posterior_linreg",
    "synth_linreg",
    "StudentWishartData",
    "StudentWishartModel",
    "student_wishart_log_density",
    "synth_student",
    "heldout_log_loss",
]

_LOG_2PI = np.log(2.0 * np.pi)


class TargetModel:
    """Wrap plain callables as a target; ``grad_log_p`` is optional."""

    def __init__(self, log_p, grad_log_p=None):
        self._log_p = log_p
        self._grad = grad_log_p
        if grad_log_p is not None:
            self.grad_log_p = grad_log_p

    def log_p(self, theta):
        return self._log_p(theta)


def family_target(family, params):
    """Target equal to the variational density itself (the ELBO optimum)."""
    lams = family.lams(params)

    def grad(theta):
        return {f.name: f.grad_theta_log_q(theta[f.name], lams[f.name]) for f in family.factors}

    return TargetModel(lambda theta: family.log_q(params, theta), grad)


def _finite(name, a):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


# -- Gamma-Normal: x_i ~ N(mu, 1/tau), tau ~ Gamma(alpha0, beta0) -----------


@dataclass(frozen=True)
class GammaNormalData:
    x: np.ndarray
    mu: float = 0.0
    alpha0: float = 1.0
    beta0: float = 1.0

    def __post_init__(self):
        x = _finite("x", np.atleast_1d(self.x))
        if x.ndim != 1 or x.size < 1:
            raise DataError("need at least one observation")
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise DomainError("prior alpha0 and beta0 must be > 0")
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.x.size

    @property
    def sum_sq(self):
        return float(np.sum((self.x - self.mu) ** 2))


class GammaNormalModel:
    def __init__(self, data, name="tau"):
        self.data = data
        self.name = name

    def log_p(self, theta):
        return gamma_normal_log_density(self.data, theta[self.name])

    def grad_log_p(self, theta):
        d = self.data
        tau = np.asarray(theta[self.name], dtype=float)
        return {self.name: (0.5 * d.n + d.alpha0 - 1.0) / tau - 0.5 * d.sum_sq - d.beta0}


def gamma_normal_log_density(data, tau):
    tau = np.asarray(tau, dtype=float)
    ok = tau > 0
    t = np.where(ok, tau, 1.0)
    lik = 0.5 * data.n * (np.log(t) - _LOG_2PI) - 0.5 * t * data.sum_sq
    out = np.where(ok, lik + log_pdf_gamma(t, data.alpha0, data.beta0), -np.inf)
    return out if out.ndim else float(out)


def conjugate_posterior_gamma_normal(data):
    """Posterior shape and rate of tau."""
    return data.alpha0 + 0.5 * data.n, data.beta0 + 0.5 * data.sum_sq


def synth_gamma_normal(stream, n, tau_true, mu=0.0, alpha0=1.0, beta0=1.0):
    if n < 1:
        raise ValueError("n must be >= 1")
    x = mu + stream.normal(int(n)) / np.sqrt(tau_true)
    return GammaNormalData(x, mu, alpha0, beta0)


# -- Bayesian linear regression ---------------------------------------------


@dataclass(frozen=True)
class LinRegData:
    """y = X w + noise / sqrt(tau); w ~ N(0, s0 I), tau ~ Gamma(alpha0, beta0).

    ``s0`` is the prior variance of each weight. With ``hierarchical=True``
    the weight prior becomes N(0, s0 / tau I), which makes the model conjugate.
    """

    X: np.ndarray
    y: np.ndarray
    s0: float = 1.0
    alpha0: float = 5.0
    beta0: float = 5.0
    hierarchical: bool = False
    XtX: np.ndarray = field(init=False, repr=False)
    Xty: np.ndarray = field(init=False, repr=False)
    yty: float = field(init=False, repr=False)

    def __post_init__(self):
        X = _finite("X", self.X)
        y = _finite("y", self.y)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError("X must be n x d and y of length n")
        if X.shape[0] < X.shape[1] or X.shape[1] < 1:
            raise DataError("need n >= d >= 1")
        if min(self.s0, self.alpha0, self.beta0) <= 0:
            raise DomainError("prior parameters must be > 0")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "XtX", X.T @ X)
        object.__setattr__(self, "Xty", X.T @ y)
        object.__setattr__(self, "yty", float(y @ y))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


class LinRegModel:
    def __init__(self, data, weights="w", precision="tau"):
        self.data = data
        self.w_name = weights
        self.tau_name = precision

    def log_p(self, theta):
        return linreg_log_density(self.data, theta[self.w_name], theta[self.tau_name])

    def grad_log_p(self, theta):
        D = self.data
        w = np.asarray(theta[self.w_name], dtype=float)
        tau = np.asarray(theta[self.tau_name], dtype=float)
        rss = _rss(D, w)
        prior_prec = tau[..., None] / D.s0 if D.hierarchical else 1.0 / D.s0
        g_w = tau[..., None] * (D.Xty - w @ D.XtX) - prior_prec * w
        g_tau = 0.5 * D.n / tau - 0.5 * rss + (D.alpha0 - 1.0) / tau - D.beta0
        if D.hierarchical:
            g_tau = g_tau + 0.5 * D.d / tau - 0.5 * np.sum(w * w, axis=-1) / D.s0
        return {self.w_name: g_w, self.tau_name: g_tau}

    def point_log_lik(self, theta, X, y):
        """log N(y_j; x_j'w, 1/tau) for each draw (rows) and point (columns)."""
        w = np.atleast_2d(theta[self.w_name])
        tau = np.atleast_1d(theta[self.tau_name])[:, None]
        r = y[None, :] - w @ X.T
        return 0.5 * (np.log(tau) - _LOG_2PI) - 0.5 * tau * r * r


def _rss(D, w):
    # sum_i (y_i - x_i'w)^2 for a batch of w
    return D.yty - 2.0 * w @ D.Xty + np.einsum("...i,ij,...j->...", w, D.XtX, w)


def linreg_log_density(data, w, tau):
    w = np.asarray(w, dtype=float)
    tau = np.asarray(tau, dtype=float)
    ok = tau > 0
    t = np.where(ok, tau, 1.0)
    rss = _rss(data, w)
    ww = np.sum(w * w, axis=-1)
    lik = 0.5 * data.n * (np.log(t) - _LOG_2PI) - 0.5 * t * rss
    if data.hierarchical:
        prior_w = 0.5 * data.d * (np.log(t / data.s0) - _LOG_2PI) - 0.5 * t * ww / data.s0
    else:
        prior_w = -0.5 * data.d * (np.log(data.s0) + _LOG_2PI) - 0.5 * ww / data.s0
    out = np.where(ok, lik + prior_w + log_pdf_gamma(t, data.alpha0, data.beta0), -np.inf)
    return out if out.ndim else float(out)


def conjugate_posterior_linreg(data):
    """Normal-gamma posterior of the hierarchical model.

    Returns ``(mean, precision, alpha, beta, log_evidence)`` with
    w | tau ~ N(mean, inv(tau * precision)) and tau ~ Gamma(alpha, beta).
    """
    if not data.hierarchical:
        raise DomainError("closed-form posterior needs the hierarchical weight prior")
    prec = data.XtX + np.eye(data.d) / data.s0
    mean = np.linalg.solve(prec, data.Xty)
    alpha = data.alpha0 + 0.5 * data.n
    beta = data.beta0 + 0.5 * (data.yty - mean @ prec @ mean)
    _, logdet = np.linalg.slogdet(prec)
    log_ev = (
        -0.5 * data.n * _LOG_2PI
        - 0.5 * data.d * np.log(data.s0) - 0.5 * logdet
        + data.alpha0 * np.log(data.beta0) - alpha * np.log(beta)
        + lgamma(alpha) - lgamma(data.alpha0)
    )
    return mean, prec, alpha, beta, float(log_ev)


def synth_linreg(stream, n=506, d=13, tau_true=1.0, s0=1.0, alpha0=5.0, beta0=5.0):
    """Gaussian design, weights drawn from the prior, noise precision ``tau_true``."""
    X = sample_std_normal_vec(stream, d, n)
    w = np.sqrt(s0) * stream.normal(d)
    y = X @ w + stream.normal(n) / np.sqrt(tau_true)
    return LinRegData(X, y, s0, alpha0, beta0)


# -- Student-t with Wishart / Gamma / Gaussian priors -------------------------


@dataclass(frozen=True)
class StudentWishartData:
    X: np.ndarray
    mu_scale: float = 1.0
    W0: np.ndarray = None
    p0: float = None
    a0: float = 3.0
    b0: float = 1.0

    def __post_init__(self):
        X = _finite("X", self.X)
        if X.ndim != 2 or X.shape[0] <= X.shape[1]:
            raise DataError("returns must be n x d with n > d")
        d = X.shape[1]
        p0 = d + 2.0 if self.p0 is None else float(self.p0)
        W0 = np.eye(d) / p0 if self.W0 is None else np.asarray(self.W0, dtype=float)
        if p0 <= d - 1:
            raise DomainError(f"Wishart prior df must exceed d - 1 = {d - 1}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "W0", W0)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def split(self, n_train):
        """Contiguous prefix for training, suffix held out."""
        kw = dict(mu_scale=self.mu_scale, W0=self.W0, p0=self.p0, a0=self.a0, b0=self.b0)
        return StudentWishartData(self.X[:n_train], **kw), self.X[n_train:]


def _student_point_terms(X, mu, prec, nu):
    """Per-point Student log-likelihoods, shape (batch, n), plus pieces for gradients."""
    d = X.shape[-1]
    r = X[None, :, :] - mu[:, None, :]
    delta = np.einsum("bni,bij,bnj->bn", r, prec, r)
    chol_ok = True
    try:
        L = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        chol_ok = False
    if not chol_ok:
        raise DomainError("precision matrix must be positive definite")
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    nu_ = nu[:, None]
    ll = (
        lgamma(0.5 * (nu + d))[:, None] - lgamma(0.5 * nu)[:, None]
        - 0.5 * d * np.log(nu_ * np.pi) + 0.5 * logdet[:, None]
        - 0.5 * (nu_ + d) * np.log1p(delta / nu_)
    )
    return ll, r, delta


def _sw_batch(theta, names):
    mu = np.atleast_2d(np.asarray(theta[names[0]], dtype=float))
    prec = np.asarray(theta[names[1]], dtype=float)
    prec = prec[None] if prec.ndim == 2 else prec
    nu = np.atleast_1d(np.asarray(theta[names[2]], dtype=float))
    return mu, prec, nu


class StudentWishartModel:
    """Multivariate Student likelihood; variables ``mu``, ``prec`` (inverse shape), ``nu``."""

    def __init__(self, data, names=("mu", "prec", "nu")):
        self.data = data
        self.names = tuple(names)

    def log_p(self, theta):
        mu, prec, nu = _sw_batch(theta, self.names)
        return student_wishart_log_density(self.data, mu, prec, nu)

    def grad_log_p(self, theta):
        D = self.data
        mu, prec, nu = _sw_batch(theta, self.names)
        d = D.d
        _, r, delta = _student_point_terms(D.X, mu, prec, nu)
        nu_ = nu[:, None]
        w = (nu_ + d) / (nu_ + delta)
        g_mu = np.einsum("bn,bij,bnj->bi", w, prec, r) - mu / D.mu_scale**2
        prec_inv = np.linalg.inv(prec)
        g_prec = (
            0.5 * D.n * prec_inv
            - 0.5 * np.einsum("bn,bni,bnj->bij", w, r, r)
            + 0.5 * (D.p0 - d - 1.0) * prec_inv
            - 0.5 * np.linalg.inv(D.W0)
        )
        g_nu = np.sum(
            0.5 * digamma(0.5 * (nu + d))[:, None] - 0.5 * digamma(0.5 * nu)[:, None]
            - 0.5 * d / nu_ - 0.5 * np.log1p(delta / nu_)
            + 0.5 * (nu_ + d) * delta / (nu_ * (nu_ + delta)),
            axis=1,
        ) + (D.a0 - 1.0) / nu - D.b0
        return {self.names[0]: g_mu, self.names[1]: g_prec, self.names[2]: g_nu}

    def point_log_lik(self, theta, X):
        mu, prec, nu = _sw_batch(theta, self.names)
        return _student_point_terms(np.asarray(X, dtype=float), mu, prec, nu)[0]


def student_wishart_log_density(data, mu, prec, nu):
    """Joint log density of (mu, prec, nu) and the data; batched over leading axis."""
    mu = np.asarray(mu, dtype=float)
    scalar = mu.ndim == 1
    mu = np.atleast_2d(mu)
    prec = np.asarray(prec, dtype=float)
    prec = prec[None] if prec.ndim == 2 else prec
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    ok = nu > 0
    nu_safe = np.where(ok, nu, 1.0)
    ll, _, _ = _student_point_terms(data.X, mu, prec, nu_safe)
    d = data.d
    s2 = data.mu_scale**2
    prior_mu = -0.5 * d * (np.log(s2) + _LOG_2PI) - 0.5 * np.sum(mu * mu, axis=-1) / s2
    prior_prec = log_pdf_wishart(prec, data.p0, data.W0)
    prior_nu = log_pdf_gamma(nu_safe, data.a0, data.b0)
    out = np.where(ok, ll.sum(axis=1) + prior_mu + prior_prec + prior_nu, -np.inf)
    return float(out[0]) if scalar else out


def synth_student(stream, n, d, mu=None, Sigma=None, nu=5.0, **prior):
    """Draw n points from a d-dim Student with shape Sigma (default identity)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mu = np.zeros(d) if mu is None else np.asarray(mu, dtype=float)
    Sigma = np.eye(d) if Sigma is None else np.asarray(Sigma, dtype=float)
    L = np.linalg.cholesky(Sigma)
    Z = sample_std_normal_vec(stream, d, n)
    c = sample_chi_square(stream, nu, n)
    X = mu + (Z @ L.T) / np.sqrt(c / nu)[:, None]
    return StudentWishartData(X, **prior)


def heldout_log_loss(point_log_lik):
    """Mean over held-out points of -log of the draw-averaged likelihood.

    ``point_log_lik`` has shape (draws, points).
    """
    a = np.asarray(point_log_lik, dtype=float)
    m = a.max(axis=0)
    log_pred = m + np.log(np.mean(np.exp(a - m), axis=0))
    return float(-np.mean(log_pred))
