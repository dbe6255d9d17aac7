"""Mean-field variational families built from per-factor blocks.

A :class:`FamilySpec` is an ordered product of factors. Each factor owns a
named random variable (``theta[factor.name]``) and a few parameter blocks,
addressed globally as ``"<factor>.<param>"``. Blocks are tagged either
``"reparam"`` (pathwise gradient through base noise) or ``"fd"`` (numerical
derivative through a coupling).

Draws are batched: ``theta[name]`` carries a leading sample axis.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from . import couplings as cp
from .distributions import (
    log_pdf_beta,
    log_pdf_dirichlet,
    log_pdf_gamma,
    log_pdf_normal_diag,
    log_pdf_student_mv,
    log_pdf_wishart,
    log_pmf_poisson,
    sample_chi_square,
    sample_gamma,
    sample_poisson,
    sample_std_normal_vec,
    sample_wishart_identity,
)
from .errors import BoundaryError, CapabilityError, ContractError, DomainError
from .special import digamma, multidigamma

__all__ = [
    "ParamBlock",
    "VariationalParams",
    "Perturbation",
    "JointDraw",
    "FamilySpec",
    "GaussianFactor",
    "GammaFactor",
    "BetaFactor",
    "DirichletFactor",
    "WishartFactor",
    "StudentFactor",
    "PoissonFactor",
    "sample_joint",
    "log_q",
    "assemble_reparam_gradient",
]

REPARAM = "reparam"
FD = "fd"


@dataclass(frozen=True)
class ParamBlock:
    name: str
    kind: str
    value: Any
    epsilon: Optional[float] = None
    one_sided: Any = False
    domain: str = "real"

    def __post_init__(self):
        if self.kind not in (REPARAM, FD):
            raise ValueError(f"{self.name}: kind must be 'reparam' or 'fd'")
        if self.kind == FD and (self.epsilon is None or not self.epsilon > 0):
            raise DomainError(f"{self.name}: finite-difference blocks need epsilon > 0")


@dataclass(frozen=True)
class VariationalParams:
    blocks: tuple

    def __post_init__(self):
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError("block names must be unique")

    @property
    def names(self):
        return [b.name for b in self.blocks]

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def __getitem__(self, name):
        return self.block(name).value

    def __contains__(self, name):
        return name in self.names

    def values(self):
        return {b.name: b.value for b in self.blocks}

    def with_values(self, updates):
        return VariationalParams(tuple(
            replace(b, value=updates[b.name]) if b.name in updates else b for b in self.blocks
        ))

    def with_blocks(self, **changes):
        """Replace fields of named blocks: ``with_blocks(**{"q.alpha": {"epsilon": 0.5}})``."""
        return VariationalParams(tuple(
            replace(b, **changes[b.name]) if b.name in changes else b for b in self.blocks
        ))

    def fd_blocks(self):
        return [b.name for b in self.blocks if b.kind == FD]

    def reparam_blocks(self):
        return [b.name for b in self.blocks if b.kind == REPARAM]


@dataclass
class Perturbation:
    """Coupled draws for one finite-difference block.

    ``minus``/``plus`` have shape ``(k, n, *theta_shape)`` for the k scalar
    coordinates of the block. One-sided coordinates reuse the center draw as
    ``minus`` and have ``step = eps`` instead of ``2 eps``.
    """

    factor: str
    minus: np.ndarray
    plus: np.ndarray
    step: np.ndarray
    weight: np.ndarray
    lam_minus: list
    lam_plus: list


@dataclass
class JointDraw:
    """A batch of ``n`` joint draws (center assembly plus perturbed variants)."""

    center: Dict[str, np.ndarray]
    perturbed: Dict[str, Perturbation] = field(default_factory=dict)
    base: Dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(next(iter(self.center.values())))

    @property
    def weight(self):
        return {k: p.weight for k, p in self.perturbed.items()}


# -- helpers ----------------------------------------------------------------


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _coords(value):
    return int(np.size(value))


def _shifted(lam, local, j, delta):
    v = np.array(lam[local], dtype=float)
    if v.ndim == 0:
        v = v + delta
    else:
        v.flat[j] += delta
    out = dict(lam)
    out[local] = v if v.ndim else float(v)
    return out


def _scalar_perturbation(factor, local, lam, triple, eps):
    one = triple.one_sided
    minus = triple.center if one else triple.minus
    return Perturbation(
        factor=factor,
        minus=np.asarray(minus, dtype=float)[None],
        plus=np.asarray(triple.plus, dtype=float)[None],
        step=np.array([eps if one else 2.0 * eps]),
        weight=np.array([triple.weight]),
        lam_minus=[lam if one else _shifted(lam, local, 0, -eps)],
        lam_plus=[_shifted(lam, local, 0, eps)],
    )


class Factor:
    """One mean-field factor. Subclasses define sampling, densities and gradients."""

    param_kinds: Dict[str, str] = {}
    fd_capable: tuple = ()
    reparam_capable: tuple = ()

    def __init__(self, name):
        self.name = name

    def block_names(self):
        return [f"{self.name}.{p}" for p in self.param_kinds]

    def domain(self, local):
        return "real"

    def validate(self, lam):
        pass

    def sample(self, stream, lam, n):
        raise NotImplementedError

    def couple(self, stream, lam, n, fd):
        """``fd`` maps local block name -> (eps, one_sided)."""
        raise NotImplementedError

    def log_q(self, theta, lam):
        raise NotImplementedError

    def grad_theta_log_q(self, theta, lam):
        raise CapabilityError(f"{type(self).__name__} has no theta-gradient")

    def score(self, theta, lam, base=None):
        raise NotImplementedError

    def reparam_grad(self, base, theta, lam, g):
        raise CapabilityError(f"{type(self).__name__} has no reparameterized blocks")

    def project(self, lam, fd_eps, margin):
        """Clip into the domain; return (lam, {local: one_sided flag(s)})."""
        return lam, {}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class GaussianFactor(Factor):
    """Diagonal Gaussian: theta = loc + scale * Z; ``scale`` holds standard deviations.

    ``loc`` may also be used as a finite-difference block through the
    deterministic coupling F(Z, loc -/+ eps).
    """

    param_kinds = {"loc": REPARAM, "scale": REPARAM}
    fd_capable = ("loc",)
    reparam_capable = ("loc", "scale")

    def __init__(self, name, dim=1):
        super().__init__(name)
        self.dim = int(dim)

    def domain(self, local):
        return "positive" if local == "scale" else "real"

    def validate(self, lam):
        if np.any(np.asarray(lam["scale"]) <= 0):
            raise DomainError(f"{self.name}.scale must be > 0")

    def sample(self, stream, lam, n):
        Z = sample_std_normal_vec(stream, self.dim, n)
        return lam["loc"] + lam["scale"] * Z, Z

    def couple(self, stream, lam, n, fd):
        theta, Z = self.sample(stream, lam, n)
        eps, one_sided = fd["loc"]
        one = np.broadcast_to(np.asarray(one_sided, bool), (self.dim,))
        I = np.eye(self.dim)
        minus = np.stack([theta if one[j] else theta - eps * I[j] for j in range(self.dim)])
        plus = np.stack([theta + eps * I[j] for j in range(self.dim)])
        pert = Perturbation(
            self.name, minus, plus,
            np.where(one, eps, 2 * eps), np.ones(self.dim),
            [lam if one[j] else _shifted(lam, "loc", j, -eps) for j in range(self.dim)],
            [_shifted(lam, "loc", j, eps) for j in range(self.dim)],
        )
        return theta, Z, {"loc": pert}

    def log_q(self, theta, lam):
        return log_pdf_normal_diag(theta, lam["loc"], lam["scale"])

    def grad_theta_log_q(self, theta, lam):
        return -(theta - lam["loc"]) / np.square(lam["scale"])

    def score(self, theta, lam, base=None):
        s = np.asarray(lam["scale"], dtype=float)
        r = theta - lam["loc"]
        return {"loc": r / s**2, "scale": -1.0 / s + r**2 / s**3}

    def reparam_grad(self, base, theta, lam, g):
        return {"loc": g, "scale": g * base}

    def project(self, lam, fd_eps, margin):
        scale = np.asarray(lam["scale"], dtype=float)
        if np.all(scale >= margin):
            return lam, {}
        return {**lam, "scale": np.maximum(scale, margin)}, {}


class GammaFactor(Factor):
    """Gamma(alpha, beta) with rate beta; theta = g / beta with g ~ Gamma(alpha, 1)."""

    param_kinds = {"alpha": FD, "beta": REPARAM}
    fd_capable = ("alpha",)
    reparam_capable = ("beta",)

    def domain(self, local):
        return "positive"

    def validate(self, lam):
        if not (lam["alpha"] > 0 and lam["beta"] > 0):
            raise DomainError(f"{self.name}: alpha and beta must be > 0")

    def sample(self, stream, lam, n):
        g = sample_gamma(stream, lam["alpha"], 1.0, n)
        return g / lam["beta"], g

    def couple(self, stream, lam, n, fd):
        eps, one_sided = fd["alpha"]
        triple, base = cp.couple_gamma(stream, lam["alpha"], lam["beta"], eps, n, bool(one_sided))
        return triple.center, base.center_sum, {"alpha": _scalar_perturbation(self.name, "alpha", lam, triple, eps)}

    def log_q(self, theta, lam):
        return log_pdf_gamma(theta, lam["alpha"], lam["beta"])

    def grad_theta_log_q(self, theta, lam):
        return (lam["alpha"] - 1.0) / theta - lam["beta"]

    def score(self, theta, lam, base=None):
        a, b = lam["alpha"], lam["beta"]
        return {"alpha": np.log(theta) + np.log(b) - digamma(a), "beta": a / b - theta}

    def reparam_grad(self, base, theta, lam, g):
        return {"beta": -base / lam["beta"] ** 2 * g}

    def project(self, lam, fd_eps, margin):
        out = {k: max(float(lam[k]), margin) for k in ("alpha", "beta")}
        flags = {}
        if "alpha" in fd_eps:
            flags["alpha"] = out["alpha"] <= fd_eps["alpha"] + margin
        return (lam if out == {k: lam[k] for k in out} else {**lam, **out}), flags


class BetaFactor(Factor):
    param_kinds = {"alpha": FD, "beta": FD}
    fd_capable = ("alpha", "beta")

    def domain(self, local):
        return "positive"

    def validate(self, lam):
        if not (lam["alpha"] > 0 and lam["beta"] > 0):
            raise DomainError(f"{self.name}: alpha and beta must be > 0")

    def sample(self, stream, lam, n):
        ga = sample_gamma(stream, lam["alpha"], 1.0, n)
        gb = sample_gamma(stream, lam["beta"], 1.0, n)
        return ga / (ga + gb), None

    def couple(self, stream, lam, n, fd):
        eps_a, one_a = fd.get("alpha", (None, False))
        eps_b, one_b = fd.get("beta", (None, False))
        eps = eps_a if eps_a is not None else eps_b
        if eps_a is not None and eps_b is not None and eps_a != eps_b:
            raise ContractError("Beta coupling uses a single epsilon for both directions")
        ta, tb = cp.couple_beta(stream, lam["alpha"], lam["beta"], eps, n, (bool(one_a), bool(one_b)))
        pert = {}
        if "alpha" in fd:
            pert["alpha"] = _scalar_perturbation(self.name, "alpha", lam, ta, eps)
        if "beta" in fd:
            pert["beta"] = _scalar_perturbation(self.name, "beta", lam, tb, eps)
        return ta.center, None, pert

    def log_q(self, theta, lam):
        return log_pdf_beta(theta, lam["alpha"], lam["beta"])

    def grad_theta_log_q(self, theta, lam):
        return (lam["alpha"] - 1.0) / theta - (lam["beta"] - 1.0) / (1.0 - theta)

    def score(self, theta, lam, base=None):
        a, b = lam["alpha"], lam["beta"]
        common = digamma(a + b)
        return {
            "alpha": np.log(theta) - digamma(a) + common,
            "beta": np.log1p(-theta) - digamma(b) + common,
        }

    def project(self, lam, fd_eps, margin):
        out = {k: max(float(lam[k]), margin) for k in ("alpha", "beta")}
        flags = {k: out[k] <= fd_eps[k] + margin for k in fd_eps}
        return (lam if out == {k: lam[k] for k in out} else {**lam, **out}), flags


class DirichletFactor(Factor):
    """Dirichlet(alpha); ``alpha`` is a vector block perturbed coordinate by coordinate."""

    param_kinds = {"alpha": FD}
    fd_capable = ("alpha",)

    def __init__(self, name, dim):
        super().__init__(name)
        self.dim = int(dim)

    def domain(self, local):
        return "positive"

    def validate(self, lam):
        a = np.asarray(lam["alpha"])
        if a.shape != (self.dim,) or np.any(a <= 0):
            raise DomainError(f"{self.name}.alpha must be a positive vector of length {self.dim}")

    def sample(self, stream, lam, n):
        g = sample_gamma(stream, np.broadcast_to(lam["alpha"], (n, self.dim)), 1.0)
        return g / g.sum(axis=-1, keepdims=True), None

    def couple(self, stream, lam, n, fd):
        eps, one_sided = fd["alpha"]
        t = cp.couple_dirichlet(stream, lam["alpha"], eps, n, one_sided)
        one = t.one_sided_mask
        pert = Perturbation(
            self.name, t.minus, t.plus, np.where(one, eps, 2 * eps), np.ones(self.dim),
            [lam if one[j] else _shifted(lam, "alpha", j, -eps) for j in range(self.dim)],
            [_shifted(lam, "alpha", j, eps) for j in range(self.dim)],
        )
        return t.center, None, {"alpha": pert}

    def log_q(self, theta, lam):
        return log_pdf_dirichlet(theta, lam["alpha"])

    def score(self, theta, lam, base=None):
        a = np.asarray(lam["alpha"], dtype=float)
        return {"alpha": np.log(theta) - digamma(a) + digamma(a.sum())}

    def project(self, lam, fd_eps, margin):
        a = np.asarray(lam["alpha"], dtype=float)
        out = np.maximum(a, margin)
        flags = {"alpha": out <= fd_eps["alpha"] + margin} if "alpha" in fd_eps else {}
        return (lam if np.array_equal(out, a) else {**lam, "alpha": out}), flags


class WishartFactor(Factor):
    """Wishart(df, V) over p x p matrices with V = root @ root, root symmetric."""

    param_kinds = {"df": FD, "root": REPARAM}
    fd_capable = ("df",)
    reparam_capable = ("root",)

    def __init__(self, name, dim):
        super().__init__(name)
        self.dim = int(dim)

    def domain(self, local):
        return "df>p-1" if local == "df" else "symmetric"

    def validate(self, lam):
        if not lam["df"] > self.dim - 1:
            raise DomainError(f"{self.name}.df must exceed p - 1 = {self.dim - 1}")
        C = np.asarray(lam["root"])
        if C.shape != (self.dim, self.dim):
            raise DomainError(f"{self.name}.root must be {self.dim}x{self.dim}")

    @staticmethod
    def scale(lam):
        C = np.asarray(lam["root"], dtype=float)
        return C @ C

    def sample(self, stream, lam, n):
        W = sample_wishart_identity(stream, lam["df"], self.dim, n)
        C = np.asarray(lam["root"], dtype=float)
        return C @ W @ C, W

    def couple(self, stream, lam, n, fd):
        eps, one_sided = fd["df"]
        triple, base = cp.couple_wishart(stream, lam["df"], lam["root"], eps, n, bool(one_sided))
        return triple.center, base.center_sum, {"df": _scalar_perturbation(self.name, "df", lam, triple, eps)}

    def log_q(self, theta, lam):
        return log_pdf_wishart(theta, lam["df"], self.scale(lam))

    def grad_theta_log_q(self, theta, lam):
        p = self.dim
        Vinv = np.linalg.inv(self.scale(lam))
        return 0.5 * (lam["df"] - p - 1.0) * np.linalg.inv(theta) - 0.5 * Vinv

    def score(self, theta, lam, base=None):
        p, d = self.dim, lam["df"]
        C = np.asarray(lam["root"], dtype=float)
        V = C @ C
        Vinv = np.linalg.inv(V)
        _, logdet_s = np.linalg.slogdet(theta)
        _, logdet_v = np.linalg.slogdet(V)
        s_df = 0.5 * (logdet_s - p * np.log(2.0) - logdet_v - multidigamma(0.5 * d, p))
        H = -0.5 * d * Vinv + 0.5 * Vinv @ theta @ Vinv
        return {"df": s_df, "root": H @ C + C @ H}

    def reparam_grad(self, base, theta, lam, g):
        C = np.asarray(lam["root"], dtype=float)
        # theta = C M C with M = base; gradient of f(C M C) restricted to symmetric C
        G = _sym(g)
        return {"root": G @ C @ base + base @ C @ G}

    def project(self, lam, fd_eps, margin):
        p = self.dim
        flags = {}
        d = float(lam["df"])
        if "df" in fd_eps:
            # keep d - eps > p - 1 so two-sided differencing stays valid
            floor = p - 1 + fd_eps["df"] + margin
            flags["df"] = False
        else:
            floor = p - 1 + margin
        C = np.asarray(lam["root"], dtype=float)
        out = dict(lam)
        changed = False
        if d < floor:
            out["df"] = floor
            changed = True
        if not np.array_equal(C, C.T):
            out["root"] = _sym(C)
            changed = True
        return (out if changed else lam), flags


class StudentFactor(Factor):
    """Multivariate Student with location ``loc``, symmetric scale ``scale`` and ``df``.

    theta = loc + scale @ Z / sqrt(c / df), Z ~ N(0, I), c ~ chi2(df).
    """

    param_kinds = {"df": FD, "loc": REPARAM, "scale": REPARAM}
    fd_capable = ("df",)
    reparam_capable = ("loc", "scale")

    def __init__(self, name, dim, normalization="exact"):
        super().__init__(name)
        self.dim = int(dim)
        self.normalization = normalization

    def domain(self, local):
        return {"df": "positive", "loc": "real", "scale": "symmetric-pd"}[local]

    def validate(self, lam):
        if not lam["df"] > 0:
            raise DomainError(f"{self.name}.df must be > 0")
        S = np.asarray(lam["scale"], dtype=float)
        if S.shape != (self.dim, self.dim) or np.any(np.linalg.eigvalsh(_sym(S)) <= 0):
            raise DomainError(f"{self.name}.scale must be symmetric positive definite")

    def sample(self, stream, lam, n):
        d = float(lam["df"])
        Z = sample_std_normal_vec(stream, self.dim, n)
        c = sample_chi_square(stream, d, n)
        base = cp.StudentBase(Z, c, d)
        return lam["loc"] + base.u @ np.asarray(lam["scale"]).T, base

    def couple(self, stream, lam, n, fd):
        eps, one_sided = fd["df"]
        triple, base = cp.couple_student_mv(
            stream, lam["df"], lam["loc"], lam["scale"], eps, n, bool(one_sided), self.normalization
        )
        return triple.center, base, {"df": _scalar_perturbation(self.name, "df", lam, triple, eps)}

    def log_q(self, theta, lam):
        return log_pdf_student_mv(theta, lam["df"], lam["loc"], lam["scale"])

    def _parts(self, theta, lam):
        S = np.asarray(lam["scale"], dtype=float)
        Sinv = np.linalg.inv(S)
        r = theta - lam["loc"]
        a = r @ Sinv.T
        b = a @ Sinv.T
        delta = np.sum(a * a, axis=-1)
        return Sinv, r, a, b, delta

    def grad_theta_log_q(self, theta, lam):
        d, p = float(lam["df"]), self.dim
        _, _, _, b, delta = self._parts(theta, lam)
        return -((d + p) / (d + delta))[..., None] * b

    def score(self, theta, lam, base=None):
        d, p = float(lam["df"]), self.dim
        Sinv, _, a, b, delta = self._parts(theta, lam)
        w = (d + p) / (d + delta)
        s_df = 0.5 * (
            digamma(0.5 * (d + p)) - digamma(0.5 * d) - p / d
            - np.log1p(delta / d) + (d + p) * delta / (d * (d + delta))
        )
        outer = a[..., :, None] * b[..., None, :]
        s_scale = -Sinv + 0.5 * w[..., None, None] * (outer + np.swapaxes(outer, -1, -2))
        return {"df": s_df, "loc": w[..., None] * b, "scale": s_scale}

    def reparam_grad(self, base, theta, lam, g):
        u = base.u
        outer = u[..., :, None] * g[..., None, :]
        return {"loc": g, "scale": 0.5 * (outer + np.swapaxes(outer, -1, -2))}

    def project(self, lam, fd_eps, margin):
        out = dict(lam)
        changed = False
        if lam["df"] < margin:
            out["df"] = margin
            changed = True
        S = np.asarray(lam["scale"], dtype=float)
        evals, evecs = np.linalg.eigh(_sym(S))
        if not np.array_equal(S, S.T) or evals.min() < margin:
            out["scale"] = (evecs * np.maximum(evals, margin)) @ evecs.T
            changed = True
        flags = {"df": out["df"] <= fd_eps["df"] + margin} if "df" in fd_eps else {}
        return (out if changed else lam), flags


class PoissonFactor(Factor):
    """Poisson(rate). ``mode`` selects the conditioned (default) or naive coupling."""

    param_kinds = {"rate": FD}
    fd_capable = ("rate",)

    def __init__(self, name, mode="conditioned"):
        super().__init__(name)
        self.mode = mode

    def domain(self, local):
        return "positive"

    def validate(self, lam):
        if not lam["rate"] > 0:
            raise DomainError(f"{self.name}.rate must be > 0")

    def sample(self, stream, lam, n):
        return sample_poisson(stream, lam["rate"], n).astype(float), None

    def couple(self, stream, lam, n, fd):
        eps, one_sided = fd["rate"]
        t = cp.couple_poisson(stream, lam["rate"], eps, n, self.mode, bool(one_sided))
        t.minus = None if t.minus is None else np.asarray(t.minus, dtype=float)
        t.center = np.asarray(t.center, dtype=float)
        t.plus = np.asarray(t.plus, dtype=float)
        return t.center, None, {"rate": _scalar_perturbation(self.name, "rate", lam, t, eps)}

    def log_q(self, theta, lam):
        return log_pmf_poisson(theta, lam["rate"])

    def score(self, theta, lam, base=None):
        return {"rate": theta / lam["rate"] - 1.0}

    def project(self, lam, fd_eps, margin):
        r = max(float(lam["rate"]), margin)
        flags = {"rate": r <= fd_eps["rate"] + margin} if "rate" in fd_eps else {}
        return (lam if r == lam["rate"] else {**lam, "rate": r}), flags


class FamilySpec:
    """Ordered mean-field product of factors."""

    def __init__(self, factors):
        self.factors = list(factors)
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError("factor names must be unique")
        self._by_name = {f.name: f for f in self.factors}

    def factor(self, name):
        return self._by_name[name]

    def block_names(self):
        return [b for f in self.factors for b in f.block_names()]

    def owner(self, block):
        fname, local = block.split(".", 1)
        return self._by_name[fname], local

    def params(self, values, epsilon=None, kinds=None, one_sided=None):
        """Build validated :class:`VariationalParams` from ``{block: value}``."""
        epsilon = epsilon or {}
        kinds = kinds or {}
        one_sided = one_sided or {}
        missing = set(self.block_names()) - set(values)
        if missing:
            raise ContractError(f"missing values for blocks {sorted(missing)}")
        extra = set(values) - set(self.block_names())
        if extra:
            raise ContractError(f"unknown blocks {sorted(extra)}")
        blocks = []
        for f in self.factors:
            for local, default_kind in f.param_kinds.items():
                name = f"{f.name}.{local}"
                kind = kinds.get(name, default_kind)
                if kind == FD and local not in f.fd_capable:
                    raise CapabilityError(f"{name} has no coupling")
                if kind == REPARAM and local not in f.reparam_capable:
                    raise CapabilityError(f"{name} is not reparameterizable")
                value = values[name]
                value = float(value) if np.ndim(value) == 0 else np.array(value, dtype=float)
                blocks.append(ParamBlock(
                    name, kind, value,
                    epsilon=epsilon.get(name) if kind == FD else None,
                    one_sided=one_sided.get(name, False),
                    domain=f.domain(local),
                ))
        params = VariationalParams(tuple(blocks))
        self.validate(params)
        return params

    def lams(self, params):
        out = {f.name: {} for f in self.factors}
        for b in params.blocks:
            fname, local = b.name.split(".", 1)
            out[fname][local] = b.value
        return out

    def validate(self, params):
        for f, lam in zip(self.factors, self.lams(params).values()):
            f.validate(lam)

    def log_q(self, params, theta, per_factor=False):
        lams = self.lams(params)
        parts = {f.name: f.log_q(theta[f.name], lams[f.name]) for f in self.factors}
        if per_factor:
            return parts
        return sum(parts.values())

    def sample(self, params, stream, n):
        return sample_joint(self, params, stream, n, perturb=())

    def __repr__(self):
        return f"FamilySpec({self.factors!r})"


def sample_joint(family, params, stream, n, perturb=None):
    """Draw ``n`` joint samples, coupling the blocks listed in ``perturb``.

    ``perturb`` defaults to every finite-difference block. Each factor uses
    its own sub-stream, so factors are sampled independently and a factor's
    draws do not depend on which other blocks are perturbed.
    """
    n = int(n)
    if perturb is None:
        perturb = params.fd_blocks()
    perturb = set(perturb)
    lams = family.lams(params)
    streams = stream.split(len(family.factors))
    draw = JointDraw(center={})
    for f, s in zip(family.factors, streams):
        lam = lams[f.name]
        fd = {}
        for local in f.param_kinds:
            name = f"{f.name}.{local}"
            if name in perturb:
                b = params.block(name)
                if b.epsilon is None:
                    raise ContractError(f"{name} has no epsilon for coupling")
                fd[local] = (b.epsilon, b.one_sided)
        try:
            if fd:
                theta, base, pert = f.couple(s, lam, n, fd)
                for local, p in pert.items():
                    draw.perturbed[f"{f.name}.{local}"] = p
            else:
                theta, base = f.sample(s, lam, n)
        except BoundaryError as exc:
            raise BoundaryError(str(exc), block=f"{f.name}.{exc.block}" if exc.block else f.name) from exc
        draw.center[f.name] = np.asarray(theta, dtype=float)
        draw.base[f.name] = base
    return draw


def log_q(family, params, theta):
    """Normalized joint log-density of a theta assembly under ``params``."""
    return family.log_q(params, theta)


def assemble_reparam_gradient(family, params, draws, grad_logratio, blocks=None):
    """Per-sample chain-rule gradients for reparameterized blocks.

    ``grad_logratio`` maps factor name -> gradient of log p - log q with
    respect to that factor's theta at the center draws. Returns
    ``{block: array (n, *block_shape)}``.
    """
    lams = family.lams(params)
    if blocks is None:
        blocks = params.reparam_blocks()
    out = {}
    for f in family.factors:
        wanted = [local for local in f.param_kinds if f"{f.name}.{local}" in blocks]
        if not wanted:
            continue
        base = draws.base.get(f.name)
        if base is None:
            raise ContractError(f"draws carry no base randomness for factor {f.name}")
        grads = f.reparam_grad(base, draws.center[f.name], lams[f.name], grad_logratio[f.name])
        for local in wanted:
            if local not in grads:
                raise CapabilityError(f"{f.name}.{local} is not reparameterizable")
            out[f"{f.name}.{local}"] = grads[local]
    return out
