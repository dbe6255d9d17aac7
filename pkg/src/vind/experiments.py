"""Experiment setups and the run driver behind the CLI.

Each ``*_setup`` function turns a :class:`RunConfig` into a model, a
variational family, initial parameters, per-block estimator choices and
learning rates. :func:`run_experiment` runs one experiment and writes
``trace.csv``, ``stats.csv`` (sweep and probe experiments) and ``run.json``.
"""

import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import emit_config
from .data import load_returns_csv, write_rows
from .diagnostics import mse_sweep, smooth, variance_probe
from .distributions import sym_sqrt
from .errors import ConfigError, DataError, VindError
from .estimators import ESTIMATORS
from .families import FD, FamilySpec, GammaFactor, GaussianFactor, WishartFactor
from .models import (
    GammaNormalModel,
    LinRegData,
    LinRegModel,
    StudentWishartData,
    StudentWishartModel,
    conjugate_posterior_gamma_normal,
    heldout_log_loss,
    synth_gamma_normal,
    synth_linreg,
    synth_student,
)
from .optimize import FitConfig, fit, project
from .streams import RandomStream

__all__ = [
    "Setup",
    "gamma_normal_setup",
    "linreg_setup",
    "student_wishart_setup",
    "arm_methods",
    "run_fit",
    "run_experiment",
    "RunResult",
]

# learning rates used when the config gives none; see README
LINREG_LRS = {"w.loc": 0.01, "w.scale": 0.01, "tau.alpha": 1.0, "tau.beta": 1.0}
STUDENT_LRS = {
    "mu.loc": 0.01, "mu.scale": 0.01, "prec.root": 0.01, "nu.beta": 0.01,
    "prec.df": 0.001, "nu.alpha": 0.02,
}


@dataclass
class Setup:
    model: object
    family: FamilySpec
    params: object
    methods: dict
    lrs: dict
    iterations: int
    holdout: object = None
    info: dict = field(default_factory=dict)


def _merge_init(values, cfg):
    out = dict(values)
    for k, v in cfg.init.items():
        if k not in out:
            raise ConfigError(f"init: unknown block {k!r}")
        out[k] = np.asarray(v, dtype=float) if np.ndim(v) else float(v)
    return out


def _epsilon(defaults, cfg):
    out = dict(defaults)
    for k, v in cfg.epsilon.items():
        if k not in out:
            raise ConfigError(f"epsilon: {k!r} is not a finite-difference block")
        out[k] = v
    return out


def _params(family, values, eps, cfg):
    try:
        return project(family.params(_merge_init(values, cfg), epsilon=eps), family)
    except VindError as exc:
        raise ConfigError(f"initial parameters: {exc}") from exc


def arm_methods(params, arm, overrides=None):
    """Per-block methods: fd blocks use ``arm``, the rest the pathwise gradient.

    ``"bbvi_rb-frozen-p"`` freezes the Wishart degrees of freedom and uses
    Rao-Blackwellized BBVI on the other fd blocks. ``overrides`` may set any
    block to a method or to ``"frozen"``.
    """
    methods = {}
    for b in params.blocks:
        if b.kind != FD:
            methods[b.name] = "reparam"
        elif arm == "bbvi_rb-frozen-p":
            if not b.name.endswith(".df"):
                methods[b.name] = "bbvi_rb"
        else:
            methods[b.name] = arm
    for k, m in (overrides or {}).items():
        if k not in params:
            raise ConfigError(f"estimator: unknown block {k!r}")
        if m == "frozen":
            methods.pop(k, None)
        else:
            methods[k] = m
    return methods


def _split(n, n_train):
    n_train = n if n_train is None else n_train
    if n_train > n:
        raise ConfigError(f"data.n_train = {n_train} exceeds the {n} available rows")
    return n_train


def gamma_normal_setup(cfg, stream):
    dc, pc = cfg.data, cfg.prior
    data = synth_gamma_normal(stream, dc.n or 100, dc.tau_true, dc.mu,
                              alpha0=pc.alpha0 or 100.0, beta0=pc.beta0 or 100.0)
    a_star, b_star = conjugate_posterior_gamma_normal(data)
    family = FamilySpec([GammaFactor("tau")])
    params = _params(family, {"tau.alpha": 110.0, "tau.beta": b_star},
                     _epsilon({"tau.alpha": 1.0}, cfg), cfg)
    return Setup(GammaNormalModel(data), family, params, {"tau.alpha": "vind"}, {},
                 cfg.sweep.iterations, info={"alpha_star": a_star, "beta_star": b_star, "data": data})


def linreg_setup(cfg, stream):
    dc, pc = cfg.data, cfg.prior
    prior = dict(s0=pc.s0 or 1.0, alpha0=pc.alpha0 or 5.0, beta0=pc.beta0 or 5.0)
    if dc.source == "csv":
        table = load_returns_csv(dc.path)
        target = dc.target_column or table.columns[-1]
        if target not in table.columns:
            raise DataError(f"target column {target!r} not in {dc.path}")
        j = table.columns.index(target)
        X = np.delete(table.values, j, axis=1)
        y = table.values[:, j]
    else:
        n = dc.n or 506
        full = synth_linreg(stream, n, dc.d or 13, dc.tau_true, **prior)
        X, y = full.X, full.y
    n_train = _split(len(y), dc.n_train)
    data = LinRegData(X[:n_train], y[:n_train], **prior)
    holdout = (X[n_train:], y[n_train:]) if n_train < len(y) else None
    d = data.d
    family = FamilySpec([GaussianFactor("w", d), GammaFactor("tau")])
    values = {"w.loc": np.zeros(d), "w.scale": np.ones(d), "tau.alpha": 200.0, "tau.beta": 50.0}
    params = _params(family, values, _epsilon({"tau.alpha": 1.0}, cfg), cfg)
    methods = arm_methods(params, cfg.fit.arm, cfg.estimator)
    lrs = {**LINREG_LRS, **cfg.lr}
    return Setup(LinRegModel(data), family, params, methods, lrs, cfg.fit.iterations or 6000, holdout)


def student_wishart_setup(cfg, stream):
    dc, pc = cfg.data, cfg.prior
    if dc.source == "csv":
        X = load_returns_csv(dc.path).values
    else:
        d = dc.d or 5
        X = synth_student(stream, dc.n or 160, d, nu=dc.nu_true).X
    n_train = _split(len(X), dc.n_train if dc.n_train or dc.source == "csv" else min(120, len(X)))
    d = X.shape[1]
    p0 = pc.p0 or d + 2.0
    data = StudentWishartData(X[:n_train], mu_scale=pc.mu_scale or 1.0, W0=np.eye(d) / p0, p0=p0,
                              a0=pc.a0 or 3.0, b0=pc.b0 or 1.0)
    holdout = X[n_train:] if n_train < len(X) else None
    family = FamilySpec([GaussianFactor("mu", d), WishartFactor("prec", d), GammaFactor("nu")])
    eps = _epsilon({"prec.df": 2.0 * d, "nu.alpha": 1.0}, cfg)
    # start p one unit inside the two-sided region so the minus-side Wishart is well conditioned
    p_init = max(p0, d - 1 + eps["prec.df"] + 1.0)
    W = np.linalg.inv(np.cov(data.X.T)) / p_init
    values = {
        "mu.loc": np.zeros(d), "mu.scale": np.full(d, data.mu_scale),
        "prec.df": p_init, "prec.root": sym_sqrt(W),
        "nu.alpha": data.a0, "nu.beta": data.b0,
    }
    params = _params(family, values, eps, cfg)
    methods = arm_methods(params, cfg.fit.arm, cfg.estimator)
    lrs = {**STUDENT_LRS, **cfg.lr}
    return Setup(StudentWishartModel(data), family, params, methods, lrs, cfg.fit.iterations or 2000, holdout)


def run_fit(setup, cfg, seed=None):
    fc = cfg.fit
    conf = FitConfig(setup.methods, n_samples=fc.n_samples, iterations=setup.iterations, lrs=setup.lrs,
                     seed=cfg.seed if seed is None else seed, n_elbo=fc.n_elbo)
    return fit(setup.model, setup.family, setup.params, conf)


def _flat_columns(params):
    cols = []
    for b in params.blocks:
        v = np.asarray(b.value)
        if v.ndim == 0:
            cols.append((b.name, None))
        else:
            for idx in np.ndindex(v.shape):
                cols.append((f"{b.name}[{','.join(map(str, idx))}]", idx))
    return cols


def _trace_rows(trace, params, window):
    cols = _flat_columns(params)
    header = ["iter", "neg_elbo", "neg_elbo_smoothed"] + [c for c, _ in cols]
    sm = smooth(trace.neg_elbo, window)
    rows = []
    for r, s in zip(trace.records, sm):
        row = [int(r.iteration), float(r.neg_elbo), float(s)]
        for name, idx in cols:
            block = name.split("[")[0]
            v = r.params[block]
            row.append(float(v if idx is None else np.asarray(v)[idx]))
        rows.append(row)
    return header, rows


def _heldout(setup, params, stream, n_draws):
    if setup.holdout is None:
        return None
    draws = setup.family.sample(params, stream, n_draws).center
    if isinstance(setup.model, LinRegModel):
        X, y = setup.holdout
        return heldout_log_loss(setup.model.point_log_lik(draws, X, y))
    return heldout_log_loss(setup.model.point_log_lik(draws, setup.holdout))


STATS_HEADER = ["iter", "estimator", "epsilon", "block", "bias", "variance", "mse"]


@dataclass
class RunResult:
    status: int
    files: list
    summary: dict


def run_experiment(config):
    """Run one experiment and write its outputs; returns a :class:`RunResult`.

    Status 0 means every output was written and the run finished; 3 means a
    numerical failure (partial outputs are still written).
    """
    t0 = time.time()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = RandomStream(config.seed)
    s_data, s_run, s_post = root.split(3)
    summary = {}
    files = []
    status = 0
    kind = config.experiment

    if kind == "gamma-normal-mse":
        setup = gamma_normal_setup(config, s_data)
        sc = config.sweep
        a_star, b_star = setup.info["alpha_star"], setup.info["beta_star"]
        rows = mse_sweep(setup.model, setup.family, setup.params, sc.epsilons, sc.iterations, s_run,
                         a_star, b_star, n_per_estimate=sc.n_per_estimate, n_reps=sc.n_reps, lr=sc.lr)
        write_rows(out / "stats.csv", STATS_HEADER + ["exact_bias"],
                   [[r["iter"], r["estimator"], r["epsilon"], r["block"], r["bias"], r["variance"], r["mse"],
                     r["exact_bias"]] for r in rows])
        files.append("stats.csv")
        path = {}
        for r in rows:
            path.setdefault(r["iter"], r["alpha"])
        write_rows(out / "trace.csv", ["iter", "tau.alpha", "tau.beta"],
                   [[it, a, float(b_star)] for it, a in sorted(path.items())])
        files.append("trace.csv")
        summary.update(alpha_star=a_star, beta_star=b_star)
    else:
        if kind == "variance-probe":
            builder = student_wishart_setup if config.probe.model == "student-wishart" else linreg_setup
        else:
            builder = linreg_setup if kind == "linreg-fit" else student_wishart_setup
        setup = builder(config, s_data)
        trace = run_fit(setup, config)
        header, rows = _trace_rows(trace, setup.params, config.fit.smooth_window)
        write_rows(out / "trace.csv", header, rows)
        files.append("trace.csv")
        if trace.error:
            status = 3
            summary["error"] = trace.error
        final = trace.final_params
        summary["final_neg_elbo_smoothed"] = float(rows[-1][2])
        summary["final_params"] = {b.name: np.asarray(b.value).tolist() for b in final.blocks}
        summary["methods"] = setup.methods
        if kind == "variance-probe":
            pc = config.probe
            ests = {}
            for name in pc.estimators:
                fn = ESTIMATORS[name]
                ests[name] = (lambda m, f, p, s, n, fn=fn: fn(m, f, p, s, n))
            snaps = [(r.iteration, r.params) for r in trace.records]
            probe_rows = variance_probe(snaps, setup.params, setup.model, setup.family, ests, pc.every,
                                        pc.n_probe, s_post)
            nan = float("nan")
            write_rows(out / "stats.csv", STATS_HEADER,
                       [[r["iter"], r["estimator"], _eps_of(setup.params, r["block"], r["estimator"]), r["block"],
                         nan, r["variance"], nan] for r in probe_rows])
            files.append("stats.csv")
        elif status == 0:
            try:
                loss = _heldout(setup, final, s_post, config.fit.n_predictive)
            except VindError as exc:
                loss, status = None, 3
                summary["error"] = f"{type(exc).__name__}: {exc}"
            if loss is not None:
                summary["heldout_log_loss_per_observation"] = loss

    meta = {
        "config": json.loads(json.dumps(config.model_dump(mode="json"))),
        "config_toml": emit_config(config),
        "seed": config.seed,
        "versions": {"vind": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "wall_clock_seconds": time.time() - t0,
        "status": status,
        "files": files,
        "summary": summary,
    }
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=_json_default)
    files.append("run.json")
    return RunResult(status, files, summary)


def _eps_of(params, block, estimator):
    b = params.block(block)
    if b.kind == FD and estimator in ("vind", "vind_uncoupled", "naive_fd"):
        return float(b.epsilon)
    return float("nan")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)
