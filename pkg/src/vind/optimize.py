"""Adam ascent of the ELBO with per-block learning rates and domain projection."""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Union

import numpy as np

from .errors import EstimatorError, OptimizerError, VindError
from .estimators import GradientEstimate, estimate_gradient
from .families import FD, sample_joint
from .streams import as_stream

__all__ = [
    "AdamState",
    "adam_init",
    "adam_step",
    "project",
    "default_lr",
    "estimate_elbo",
    "FitConfig",
    "FitRecord",
    "FitTrace",
    "fit",
]

MARGIN = 1e-3


def default_lr(block):
    """0.01 for finite-difference shape/df blocks, 0.001 for location/scale blocks."""
    return 0.01 if block.kind == FD else 0.001


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    lrs: Dict[str, float]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lrs=None):
    lrs = dict(lrs or {})
    zeros = {b.name: np.zeros_like(np.asarray(b.value, dtype=float)) for b in params.blocks}
    return AdamState(
        m=zeros,
        v={k: z.copy() for k, z in zeros.items()},
        lrs={b.name: float(lrs.get(b.name, default_lr(b))) for b in params.blocks},
    )


def adam_step(state, grads, params):
    """One bias-corrected Adam ascent step on the blocks present in ``grads``.

    Returns ``(new_state, new_params)``; inputs are not modified.
    """
    values = grads.values if isinstance(grads, GradientEstimate) else dict(grads)
    for b, g in values.items():
        if not np.all(np.isfinite(g)):
            raise OptimizerError("non-finite gradient", block=b)
    t = state.t + 1
    m, v = dict(state.m), dict(state.v)
    updates = {}
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for b, g in values.items():
        g = np.asarray(g, dtype=float)
        m[b] = state.beta1 * state.m[b] + (1.0 - state.beta1) * g
        v[b] = state.beta2 * state.v[b] + (1.0 - state.beta2) * g * g
        step = state.lrs[b] * (m[b] / c1) / (np.sqrt(v[b] / c2) + state.eps)
        new = np.asarray(params[b], dtype=float) + step
        updates[b] = float(new) if new.ndim == 0 else new
    new_state = AdamState(m, v, state.lrs, t, state.beta1, state.beta2, state.eps)
    return new_state, params.with_values(updates)


def project(params, family, margin=MARGIN, floors=None):
    """Clip every block into its domain and refresh one-sided flags.

    ``floors`` optionally raises the lower bound of named blocks. In-domain
    parameters come back unchanged.
    """
    floors = floors or {}
    lams = family.lams(params)
    values, flags = {}, {}
    for f in family.factors:
        lam = dict(lams[f.name])
        for local in lam:
            name = f"{f.name}.{local}"
            if name in floors:
                v = np.maximum(lam[local], floors[name])
                lam[local] = float(v) if np.ndim(v) == 0 else v
        fd_eps = {}
        for local in lam:
            b = params.block(f"{f.name}.{local}")
            if b.kind == FD:
                fd_eps[local] = b.epsilon
        new, fl = f.project(lam, fd_eps, margin)
        for local, val in new.items():
            values[f"{f.name}.{local}"] = val
        for local, flag in fl.items():
            flags[f"{f.name}.{local}"] = flag
    changes = {}
    for b in params.blocks:
        upd = {}
        if values[b.name] is not b.value and not np.array_equal(values[b.name], b.value):
            upd["value"] = values[b.name]
        if b.name in flags:
            flag = flags[b.name]
            flag = bool(flag) if np.ndim(flag) == 0 else np.asarray(flag, bool)
            if not np.array_equal(flag, b.one_sided):
                upd["one_sided"] = flag
        if upd:
            changes[b.name] = upd
    return params.with_blocks(**changes) if changes else params


def estimate_elbo(model, family, params, stream, n, return_se=False):
    """Monte-Carlo mean of log p - log q over ``n`` fresh draws."""
    draws = sample_joint(family, params, stream, int(n), perturb=())
    terms = np.asarray(model.log_p(draws.center), dtype=float) - family.log_q(params, draws.center)
    if not np.all(np.isfinite(terms)):
        i = int(np.flatnonzero(~np.isfinite(terms))[0])
        raise EstimatorError("non-finite ELBO term", theta={k: v[i] for k, v in draws.center.items()})
    mean = float(np.mean(terms))
    if return_se:
        return mean, float(np.std(terms) / np.sqrt(len(terms)))
    return mean


@dataclass
class FitConfig:
    """``estimator`` maps block -> method name (blocks left out stay frozen),
    or is a callable ``(params, stream) -> GradientEstimate``."""

    estimator: Union[Dict[str, str], Callable]
    n_samples: int = 3
    iterations: int = 1000
    lrs: Dict[str, float] = field(default_factory=dict)
    seed: int = 0
    n_elbo: int = 20
    margin: float = MARGIN
    floors: Dict[str, float] = field(default_factory=dict)
    probe: Optional[Callable] = None
    probe_every: int = 0


@dataclass
class FitRecord:
    iteration: int
    neg_elbo: float
    params: Dict[str, np.ndarray]
    probe: object = None


@dataclass
class FitTrace:
    records: list = field(default_factory=list)
    error: Optional[str] = None
    final_params: object = None

    @property
    def iterations(self):
        return np.array([r.iteration for r in self.records])

    @property
    def neg_elbo(self):
        return np.array([r.neg_elbo for r in self.records])

    def series(self, block):
        return np.array([r.params[block] for r in self.records])

    def __len__(self):
        return len(self.records)


def _snapshot(params):
    return {b.name: np.array(b.value, copy=True) if np.ndim(b.value) else b.value for b in params.blocks}


def fit(model, family, init_params, config):
    """Run ``config.iterations`` Adam steps; return the trace.

    Record 0 is the initial evaluation. Each iteration draws gradient and
    ELBO samples from fresh sub-streams of ``config.seed``. A failure stops
    the run and is stored in ``trace.error`` with the partial trace.
    """
    stream = as_stream(config.seed)
    params = project(init_params, family, config.margin, config.floors)
    if callable(config.estimator):
        grad_fn = config.estimator
    else:
        methods = dict(config.estimator)

        def grad_fn(p, s):
            return estimate_gradient(model, family, p, s, config.n_samples, methods)

    state = adam_init(params, config.lrs)
    trace = FitTrace()

    def record(it, p, s_elbo, s_probe):
        neg = -estimate_elbo(model, family, p, s_elbo, config.n_elbo)
        probe = None
        if config.probe is not None and config.probe_every and it % config.probe_every == 0:
            probe = config.probe(p, s_probe)
        trace.records.append(FitRecord(it, neg, _snapshot(p), probe))

    try:
        s_elbo, s_probe = stream.split(2)
        record(0, params, s_elbo, s_probe)
        for it in range(1, int(config.iterations) + 1):
            s_grad, s_elbo, s_probe = stream.split(3)
            grads = grad_fn(params, s_grad)
            state, params = adam_step(state, grads, params)
            params = project(params, family, config.margin, config.floors)
            record(it, params, s_elbo, s_probe)
    except VindError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"
    trace.final_params = params
    return trace
