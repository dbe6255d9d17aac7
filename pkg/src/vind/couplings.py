"""Coupled draws of (theta at lambda - eps, theta at lambda, theta at lambda + eps).

Each coupling builds the three draws from shared base randomness so that
the two perturbed draws are strongly positively correlated. The
constructions rest on additivity: sums of Gamma (chi-square, Wishart,
Poisson) variables with a common scale add their shape parameters.

Every function accepts ``size`` (number of independent triples) and a
``one_sided`` flag. In one-sided mode ``minus`` is ``None`` and the
difference is taken between ``center`` and ``plus`` with step ``eps``;
two-sided mode raises :class:`BoundaryError` when ``lambda - eps`` is
invalid.
"""

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .distributions import (
    sample_chi_square,
    sample_gamma,
    sample_poisson,
    sample_poisson_positive,
    sample_std_normal_vec,
    sample_wishart_identity,
)
from .errors import BoundaryError, DomainError

__all__ = [
    "CoupledTriple",
    "GammaBase",
    "WishartBase",
    "StudentBase",
    "couple_gamma",
    "couple_beta",
    "couple_dirichlet",
    "couple_wishart",
    "couple_student_mv",
    "couple_poisson",
]


@dataclass
class CoupledTriple:
    """Batch of coupled draws for one perturbed parameter.

    ``weight`` multiplies the per-draw difference; it is 1 except for the
    conditioned Poisson coupling, where it is the probability that the
    coupling increment is non-zero.
    """

    minus: Optional[Any]
    center: Any
    plus: Any
    epsilon: float
    param_id: str
    weight: float = 1.0

    @property
    def one_sided(self):
        return self.minus is None

    @property
    def step(self):
        return self.epsilon if self.one_sided else 2.0 * self.epsilon

    @property
    def prefactor(self):
        """Factor applied to the mean raw difference: weight / step."""
        return self.weight / self.step


@dataclass
class GammaBase:
    gamma_core: np.ndarray
    inc1: Optional[np.ndarray]
    inc2: np.ndarray

    @property
    def center_sum(self):
        """Unit-rate gamma variable underlying the center draw."""
        return self.gamma_core if self.inc1 is None else self.gamma_core + self.inc1


@dataclass
class WishartBase:
    W1: np.ndarray
    W2: Optional[np.ndarray]
    W3: np.ndarray

    @property
    def center_sum(self):
        return self.W1 if self.W2 is None else self.W1 + self.W2


@dataclass
class StudentBase:
    Z: np.ndarray
    c_total: np.ndarray
    df: float

    @property
    def u(self):
        """Standardized direction Z / sqrt(c_total / df); center = mu + S u."""
        return self.Z / np.sqrt(self.c_total / self.df)[..., None]


def _check_eps(eps):
    eps = float(eps)
    if not np.isfinite(eps) or eps <= 0:
        raise DomainError(f"epsilon must be > 0, got {eps}")
    return eps


def _boundary(name, value, eps, one_sided):
    if not one_sided and value <= eps:
        raise BoundaryError(
            f"{name}={value} must exceed epsilon={eps} for a two-sided coupling; "
            "use one-sided mode near the boundary",
            block=name,
        )


def couple_gamma(stream, alpha, beta, eps, size=None, one_sided=False):
    """Couple Gamma(alpha -/+ eps, beta) around Gamma(alpha, beta).

    minus = g_core / beta, center = (g_core + g1) / beta,
    plus = (g_core + g1 + g2) / beta, with g_core ~ Gamma(alpha - eps),
    g1, g2 ~ Gamma(eps). The returned :class:`GammaBase` carries the
    unit-rate variables for the reparameterization gradient in beta.
    """
    eps = _check_eps(eps)
    alpha, beta = float(alpha), float(beta)
    if alpha <= 0 or beta <= 0:
        raise DomainError("alpha and beta must be > 0")
    _boundary("alpha", alpha, eps, one_sided)
    if one_sided:
        core = sample_gamma(stream, alpha, 1.0, size)
        g2 = sample_gamma(stream, eps, 1.0, size)
        base = GammaBase(core, None, g2)
        triple = CoupledTriple(None, core / beta, (core + g2) / beta, eps, "alpha")
        return triple, base
    core = sample_gamma(stream, alpha - eps, 1.0, size)
    g1 = sample_gamma(stream, eps, 1.0, size)
    g2 = sample_gamma(stream, eps, 1.0, size)
    center = core + g1
    triple = CoupledTriple(core / beta, center / beta, (center + g2) / beta, eps, "alpha")
    return triple, GammaBase(core, g1, g2)


def _split_gamma(stream, shape, eps, one_sided, size):
    """Return (lower, total) with total ~ Gamma(shape) and lower ~ Gamma(shape - eps)."""
    if one_sided:
        total = sample_gamma(stream, shape, 1.0, size)
        return None, total
    lower = sample_gamma(stream, shape - eps, 1.0, size)
    return lower, lower + sample_gamma(stream, eps, 1.0, size)


def couple_beta(stream, alpha, beta, eps, size=None, one_sided=(False, False)):
    """Couple a Beta(alpha, beta) draw in both the alpha and beta directions.

    Both triples share the same base gammas, so their centers coincide.
    ``one_sided`` is a pair of flags for the (alpha, beta) directions.
    """
    eps = _check_eps(eps)
    alpha, beta = float(alpha), float(beta)
    if alpha <= 0 or beta <= 0:
        raise DomainError("alpha and beta must be > 0")
    if isinstance(one_sided, bool):
        one_sided = (one_sided, one_sided)
    _boundary("alpha", alpha, eps, one_sided[0])
    _boundary("beta", beta, eps, one_sided[1])
    ga_lo, ga = _split_gamma(stream, alpha, eps, one_sided[0], size)
    gb_lo, gb = _split_gamma(stream, beta, eps, one_sided[1], size)
    ga_hi = ga + sample_gamma(stream, eps, 1.0, size)
    gb_hi = gb + sample_gamma(stream, eps, 1.0, size)
    center = ga / (ga + gb)
    t_alpha = CoupledTriple(
        None if ga_lo is None else ga_lo / (ga_lo + gb),
        center,
        ga_hi / (ga_hi + gb),
        eps,
        "alpha",
    )
    t_beta = CoupledTriple(
        None if gb_lo is None else ga / (ga + gb_lo),
        center,
        ga / (ga + gb_hi),
        eps,
        "beta",
    )
    return t_alpha, t_beta


def couple_dirichlet(stream, alpha, eps, size=None, one_sided=None):
    """Coordinate-wise coupling of a Dirichlet(alpha) draw.

    Returns a :class:`CoupledTriple` whose ``minus``/``plus`` have a leading
    coordinate axis: ``plus[j]`` is the draw with ``alpha_j`` raised by eps.
    ``minus`` entries for one-sided coordinates are copies of ``center``
    and are flagged in ``one_sided_mask``.
    """
    eps = _check_eps(eps)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or np.any(alpha <= 0):
        raise DomainError("alpha must be a positive vector")
    p = alpha.size
    mask = np.zeros(p, dtype=bool) if one_sided is None else np.broadcast_to(np.asarray(one_sided, bool), (p,))
    bad = (~mask) & (alpha <= eps)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise BoundaryError(f"alpha[{j}]={alpha[j]} must exceed epsilon={eps}", block=f"alpha[{j}]")
    lead = () if size is None else tuple(np.atleast_1d(size).astype(int))
    shape_lo = np.where(mask, alpha, alpha - eps)
    g_lo = sample_gamma(stream, np.broadcast_to(shape_lo, lead + (p,)), 1.0)
    g1 = sample_gamma(stream, eps, 1.0, lead + (p,))
    g2 = sample_gamma(stream, eps, 1.0, lead + (p,))
    g_mid = np.where(mask, g_lo, g_lo + g1)
    g_hi = g_mid + g2
    total = g_mid.sum(axis=-1, keepdims=True)
    center = g_mid / total
    minus = np.empty((p,) + center.shape)
    plus = np.empty((p,) + center.shape)
    for j in range(p):
        for out, gj in ((minus, g_lo[..., j]), (plus, g_hi[..., j])):
            num = g_mid.copy()
            num[..., j] = gj
            out[j] = num / (total + (gj - g_mid[..., j])[..., None])
    minus[mask] = center
    triple = CoupledTriple(minus, center, plus, eps, "alpha")
    triple.one_sided_mask = mask
    return triple


def couple_wishart(stream, d, C, eps, size=None, one_sided=False):
    """Couple W(d -/+ eps, V) with V = C @ C for a symmetric C.

    minus = C W1 C, center = C (W1 + W2) C, plus = C (W1 + W2 + W3) C with
    W1 ~ W(d - eps, I) and W2, W3 ~ W(eps, I). Requires eps > p - 1 and
    d - eps > p - 1 for nonsingular Wishart pieces.
    """
    eps = _check_eps(eps)
    C = np.asarray(C, dtype=float)
    p = C.shape[-1]
    d = float(d)
    if eps <= p - 1:
        raise BoundaryError(f"Wishart coupling needs epsilon > p - 1 = {p - 1}, got {eps}", block="df")
    if one_sided:
        if d <= p - 1:
            raise DomainError(f"Wishart df must exceed p - 1 = {p - 1}")
        W1 = sample_wishart_identity(stream, d, p, size)
        W2 = None
        mid = W1
    else:
        if d - eps <= p - 1:
            raise BoundaryError(
                f"Wishart coupling needs d - epsilon > p - 1 = {p - 1}, got d={d}, epsilon={eps}",
                block="df",
            )
        W1 = sample_wishart_identity(stream, d - eps, p, size)
        W2 = sample_wishart_identity(stream, eps, p, size)
        mid = W1 + W2
    W3 = sample_wishart_identity(stream, eps, p, size)
    hi = mid + W3
    sandwich = lambda M: C @ M @ C  # noqa: E731
    triple = CoupledTriple(
        None if one_sided else sandwich(W1), sandwich(mid), sandwich(hi), eps, "df"
    )
    return triple, WishartBase(W1, W2, W3)


def couple_student_mv(stream, d, mu, S, eps, size=None, one_sided=False, normalization="exact"):
    """Couple multivariate Student draws in the degrees of freedom.

    All three draws share Z and the chi-square pieces c_lo ~ chi2(d - eps),
    c1, c2 ~ chi2(eps): center = mu + S Z / sqrt((c_lo + c1) / d).

    With ``normalization="exact"`` the perturbed draws divide their
    chi-square sums by d - eps and d + eps, so each marginal is the Student
    at the shifted degrees of freedom. ``normalization="paper"`` divides all
    three sums by d, which couples Student draws whose scale also shifts by
    sqrt(d / (d -/+ eps)).
    """
    eps = _check_eps(eps)
    if normalization not in ("exact", "paper"):
        raise ValueError("normalization must be 'exact' or 'paper'")
    d = float(d)
    mu = np.asarray(mu, dtype=float)
    S = np.atleast_2d(np.asarray(S, dtype=float))
    p = S.shape[-1]
    if d <= 0:
        raise DomainError("degrees of freedom must be > 0")
    _boundary("df", d, eps, one_sided)
    lead = () if size is None else tuple(np.atleast_1d(size).astype(int))
    Z = sample_std_normal_vec(stream, p, lead or None)
    if one_sided:
        c_lo = None
        c_mid = sample_chi_square(stream, d, lead or None)
    else:
        c_lo = sample_chi_square(stream, d - eps, lead or None)
        c_mid = c_lo + sample_chi_square(stream, eps, lead or None)
    c_hi = c_mid + sample_chi_square(stream, eps, lead or None)
    SZ = Z @ S.T

    def draw(c, denom):
        return mu + SZ / np.sqrt(np.asarray(c) / denom)[..., None]

    d_lo, d_hi = (d, d) if normalization == "paper" else (d - eps, d + eps)
    triple = CoupledTriple(
        None if c_lo is None else draw(c_lo, d_lo), draw(c_mid, d), draw(c_hi, d_hi), eps, "df"
    )
    return triple, StudentBase(Z, np.asarray(c_mid), d)


def couple_poisson(stream, rate, eps, size=None, mode="conditioned", one_sided=False):
    """Couple Poisson(rate -/+ eps) counts by additivity.

    Naive mode: plus = minus + K with K ~ Poisson(2 eps), weight 1.
    Conditioned mode (default): K is drawn conditioned on K >= 1 and the
    difference is weighted by P(K >= 1) = 1 - exp(-2 eps); draws with K = 0
    carry no information. ``center`` is an independent-increment draw at
    ``rate`` for assembling joint parameter vectors.
    """
    eps = _check_eps(eps)
    rate = float(rate)
    if rate <= 0:
        raise DomainError("Poisson rate must be > 0")
    if mode not in ("conditioned", "naive"):
        raise ValueError("mode must be 'conditioned' or 'naive'")
    _boundary("rate", rate, eps, one_sided)
    gap = eps if one_sided else 2.0 * eps
    if one_sided:
        center = sample_poisson(stream, rate, size)
        lower = center
    else:
        lower = sample_poisson(stream, rate - eps, size)
        center = lower + sample_poisson(stream, eps, size)
    if mode == "conditioned":
        inc = sample_poisson_positive(stream, gap, size)
        weight = -np.expm1(-gap)
    else:
        inc = sample_poisson(stream, gap, size)
        weight = 1.0
    triple = CoupledTriple(None if one_sided else lower, center, lower + inc, eps, "rate", weight)
    return triple
