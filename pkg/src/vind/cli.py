"""Command-line entry point: ``vind run|validate|synth|version``.

Exit codes: 0 ok, 1 config error, 2 data error, 3 runtime error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import emit_config, load_config, parse_synth_spec
from .data import write_returns_csv, write_rows
from .errors import ConfigError, DataError, VindError
from .streams import RandomStream

OK, CONFIG_ERROR, DATA_ERROR, RUNTIME_ERROR = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="vind", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a TOML config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="override the output directory")
    val = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    val.add_argument("config")
    syn = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    syn.add_argument("spec")
    syn.add_argument("--seed", type=int)
    syn.add_argument("--out", help="output CSV path")
    sub.add_parser("version", help="print the package version")
    return p


def _with_overrides(cfg, seed, out):
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["output_dir"] = out
    if not updates:
        return cfg
    # re-validate so overrides obey the same rules as file values
    from .config import RunConfig

    return RunConfig.model_validate({**cfg.model_dump(), **updates})


def _synth(spec_path, seed, out):
    try:
        text = Path(spec_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read spec {spec_path}: {exc}") from exc
    spec = parse_synth_spec(text)
    stream = RandomStream(spec.seed if seed is None else seed)
    path = Path(out or spec.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    if spec.kind == "student":
        from .models import synth_student

        write_returns_csv(path, synth_student(stream, spec.n, spec.d, nu=spec.nu).X)
    elif spec.kind == "linreg":
        from .models import synth_linreg

        data = synth_linreg(stream, spec.n, spec.d, spec.tau_true)
        cols = [f"x{j}" for j in range(spec.d)] + ["y"]
        write_returns_csv(path, np.column_stack([data.X, data.y]), cols)
    else:
        from .models import synth_gamma_normal

        x = synth_gamma_normal(stream, spec.n, spec.tau_true).x
        write_rows(path, ["index", "x"], [[i, v] for i, v in enumerate(x)])
    return path


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "version":
            print(__version__)
            return OK
        if args.command == "validate":
            print(emit_config(load_config(args.config)), end="")
            return OK
        if args.command == "synth":
            print(_synth(args.spec, args.seed, args.out))
            return OK
        from .experiments import run_experiment

        cfg = _with_overrides(load_config(args.config), args.seed, args.out)
        result = run_experiment(cfg)
        for f in result.files:
            print(Path(cfg.output_dir) / f)
        if result.status:
            print(f"vind: run failed: {result.summary.get('error')}", file=sys.stderr)
        return result.status
    except ConfigError as exc:
        print(f"vind: config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except DataError as exc:
        print(f"vind: data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (VindError, ArithmeticError, ValueError) as exc:
        print(f"vind: runtime error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except Exception as exc:  # noqa: BLE001
        print(f"vind: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
