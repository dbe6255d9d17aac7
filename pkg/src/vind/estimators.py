"""Monte-Carlo estimators of the ELBO gradient.

Every estimator is a pure function of ``(model, family, params, stream, n)``
and returns a :class:`GradientEstimate` holding per-block means and the
per-sample terms they average. All of them share one engine,
:func:`estimate_gradient`, which assigns a method to each block:

``bbvi``
    score function weighted by the full log ratio log p - log q.
``bbvi_rb``
    score of factor i weighted by log p - log q_i (other factors' log q dropped).
``reparam``
    pathwise gradient through the base noise.
``vind``
    coupled central difference of log p - log q with q held at the center
    parameters; one-sided blocks difference (center, plus) over eps.
``vind_uncoupled``
    same formula with the perturbed factor's minus and plus drawn independently.
``naive_fd``
    coupled difference with q evaluated at the shifted parameters.

The model must expose ``log_p(theta)`` and, for reparameterized blocks,
``grad_log_p(theta)``; ``theta`` maps factor names to batched arrays.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import CapabilityError, ContractError, EstimatorError
from .families import FD, sample_joint

__all__ = [
    "GradientEstimate",
    "METHODS",
    "estimate_gradient",
    "bbvi_gradient",
    "bbvi_rb_gradient",
    "reparam_gradient",
    "vind_gradient",
    "vind_uncoupled_gradient",
    "naive_fd_gradient",
    "ESTIMATORS",
]

METHODS = ("bbvi", "bbvi_rb", "reparam", "vind", "vind_uncoupled", "naive_fd")
_DIFFERENCING = ("vind", "vind_uncoupled", "naive_fd")


@dataclass
class GradientEstimate:
    values: Dict[str, np.ndarray]
    n_samples: int
    estimator_id: str
    samples: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __getitem__(self, block):
        return self.values[block]

    def __contains__(self, block):
        return block in self.values

    @property
    def blocks(self):
        return list(self.values)

    @classmethod
    def from_samples(cls, samples, estimator_id):
        n = len(next(iter(samples.values()))) if samples else 0
        values = {b: s.mean(axis=0) for b, s in samples.items()}
        return cls(values, n, estimator_id, samples)


def _checked_log_p(model, theta, what):
    lp = np.asarray(model.log_p(theta), dtype=float)
    bad = ~np.isfinite(lp)
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        raise EstimatorError(
            f"non-finite log p at a {what} draw (index {i})",
            theta={k: np.asarray(v)[i] for k, v in theta.items()},
        )
    return lp


def _check_finite(samples, method):
    for b, s in samples.items():
        if not np.all(np.isfinite(s)):
            raise EstimatorError(f"{method}: non-finite gradient term for block {b}")


def _substitute(center, factor, arr):
    """Flatten a (k, n, ...) perturbed factor into a (k*n) assembly."""
    k, n = arr.shape[:2]
    theta = {}
    for name, value in center.items():
        if name == factor:
            theta[name] = arr.reshape((k * n,) + arr.shape[2:])
        else:
            theta[name] = np.broadcast_to(value, (k,) + value.shape).reshape((k * n,) + value.shape[1:])
    return theta


def _to_block(terms, value):
    # (k, n) -> (n,) for scalar blocks, (n, *shape) for vector blocks
    if np.ndim(value) == 0:
        return terms[0]
    return terms.T.reshape((terms.shape[1],) + np.shape(value))


def _broadcast(w, s):
    return w.reshape(w.shape + (1,) * (s.ndim - w.ndim))


def _validate_methods(family, params, methods):
    for b, m in methods.items():
        if m not in METHODS:
            raise ValueError(f"unknown estimator {m!r} for block {b}")
        f, local = family.owner(b)
        if m == "reparam" and local not in f.reparam_capable:
            raise CapabilityError(f"{b} is not reparameterizable")
        if m in _DIFFERENCING:
            if local not in f.fd_capable:
                raise CapabilityError(f"{b} has no coupling")
            if params.block(b).epsilon is None:
                raise ContractError(f"{b} needs an epsilon for {m}")


def estimate_gradient(model, family, params, stream, n, methods, estimator_id=None):
    """Estimate the ELBO gradient with a per-block choice of method.

    ``methods`` maps block name -> one of :data:`METHODS`; blocks not listed
    are left out of the estimate (frozen). All methods share the same
    center draws.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    _validate_methods(family, params, methods)
    if estimator_id is None:
        estimator_id = "+".join(sorted(set(methods.values())))
    lams = family.lams(params)
    coupled = [b for b, m in methods.items() if m in _DIFFERENCING]
    s_main, s_aux = stream.split(2)
    draws = sample_joint(family, params, s_main, n, perturb=coupled)
    center = draws.center
    samples = {}

    needs_score = [b for b, m in methods.items() if m in ("bbvi", "bbvi_rb")]
    reparam = [b for b, m in methods.items() if m == "reparam"]
    lp = None
    if needs_score:
        lp = _checked_log_p(model, center, "center")
        lq = {f.name: f.log_q(center[f.name], lams[f.name]) for f in family.factors}
        lq_total = sum(lq.values())
        scores = {}
        for b in needs_score:
            f, local = family.owner(b)
            if f.name not in scores:
                scores[f.name] = f.score(center[f.name], lams[f.name], draws.base.get(f.name))
            s = np.asarray(scores[f.name][local], dtype=float)
            ratio = lp - (lq_total if methods[b] == "bbvi" else lq[f.name])
            samples[b] = _broadcast(ratio, s) * s

    if reparam:
        if not hasattr(model, "grad_log_p"):
            raise CapabilityError(f"{type(model).__name__} has no theta-gradient")
        gp = model.grad_log_p(center)
        owners = {family.owner(b)[0] for b in reparam}
        g = {}
        for f in owners:
            g[f.name] = np.asarray(gp[f.name], dtype=float) - f.grad_theta_log_q(center[f.name], lams[f.name])
        for f in owners:
            wanted = [b for b in reparam if family.owner(b)[0] is f]
            base = draws.base.get(f.name)
            if base is None:
                raise ContractError(f"draws carry no base randomness for factor {f.name}")
            grads = f.reparam_grad(base, center[f.name], lams[f.name], g[f.name])
            for b in wanted:
                samples[b] = np.asarray(grads[family.owner(b)[1]], dtype=float)

    aux = None
    for b in coupled:
        m = methods[b]
        f, local = family.owner(b)
        lam = lams[f.name]
        pert = draws.perturbed[b]
        plus, minus = pert.plus, pert.minus
        if m == "vind_uncoupled":
            if np.any(pert.weight != 1.0):
                raise CapabilityError(f"{b}: uncoupled differencing needs an unweighted coupling")
            if aux is None:
                aux = sample_joint(family, params, s_aux, n, perturb=coupled)
            minus = aux.perturbed[b].minus
        lp_plus = _checked_log_p(model, _substitute(center, f.name, plus), "plus").reshape(plus.shape[:2])
        lp_minus = _checked_log_p(model, _substitute(center, f.name, minus), "minus").reshape(minus.shape[:2])
        if m == "naive_fd":
            lq_plus = np.stack([f.log_q(plus[j], pert.lam_plus[j]) for j in range(len(plus))])
            lq_minus = np.stack([f.log_q(minus[j], pert.lam_minus[j]) for j in range(len(minus))])
        else:
            lq_plus = f.log_q(plus, lam)
            lq_minus = f.log_q(minus, lam)
        diff = (lp_plus - lq_plus) - (lp_minus - lq_minus)
        terms = diff * (pert.weight / pert.step)[:, None]
        samples[b] = _to_block(terms, params[b])

    _check_finite(samples, estimator_id)
    ordered = {b: samples[b] for b in params.names if b in samples}
    return GradientEstimate.from_samples(ordered, estimator_id)


def _blocks(params, blocks):
    return params.names if blocks is None else list(blocks)


def bbvi_gradient(model, family, params, stream, n, blocks=None):
    """Score-function gradient for every block."""
    return estimate_gradient(model, family, params, stream, n,
                             {b: "bbvi" for b in _blocks(params, blocks)}, "bbvi")


def bbvi_rb_gradient(model, family, params, stream, n, blocks=None):
    """Per-factor score gradient with other factors' log q dropped from the weight."""
    return estimate_gradient(model, family, params, stream, n,
                             {b: "bbvi_rb" for b in _blocks(params, blocks)}, "bbvi_rb")


def reparam_gradient(model, family, params, stream, n, blocks=None):
    """Pathwise gradient; defaults to the reparameterized blocks."""
    blocks = params.reparam_blocks() if blocks is None else list(blocks)
    return estimate_gradient(model, family, params, stream, n, {b: "reparam" for b in blocks}, "reparam")


def _fd_methods(params, blocks, fd_method):
    return {b: (fd_method if params.block(b).kind == FD else "reparam") for b in _blocks(params, blocks)}


def vind_gradient(model, family, params, stream, n, blocks=None):
    """Coupled numerical derivative for fd blocks, pathwise gradient for the rest."""
    return estimate_gradient(model, family, params, stream, n, _fd_methods(params, blocks, "vind"), "vind")


def vind_uncoupled_gradient(model, family, params, stream, n, blocks=None):
    return estimate_gradient(model, family, params, stream, n,
                             _fd_methods(params, blocks, "vind_uncoupled"), "vind_uncoupled")


def naive_fd_gradient(model, family, params, stream, n, blocks=None):
    return estimate_gradient(model, family, params, stream, n,
                             _fd_methods(params, blocks, "naive_fd"), "naive_fd")


ESTIMATORS = {
    "bbvi": bbvi_gradient,
    "bbvi_rb": bbvi_rb_gradient,
    "reparam": reparam_gradient,
    "vind": vind_gradient,
    "vind_uncoupled": vind_uncoupled_gradient,
    "naive_fd": naive_fd_gradient,
}
