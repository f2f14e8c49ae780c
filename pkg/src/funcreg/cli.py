"""Command-line front end: ``funcreg fit | bench | sfim``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure. Failures print one JSON object ``{"error", "message"}``
on stderr. Every artifact embeds the seed, a hash of the effective
configuration and the tool version; reruns with the same inputs and seed
produce identical bytes (wall-clock timings go to separate files).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DegenerateError,
    FuncRegError,
    IncompatibleGridsError,
    InsufficientDataError,
    NoAdmissibleModelError,
    SingularDesignError,
)
from .estimators import FunctionalLocalLinear
from .fpca import fit_fpca
from .funcspace import FunctionalSample, read_curves_csv
from .selection import SelectionGrid, select_all
from .sfim import IdJoinError, fit_sfim, join_responses, read_response_csv, restrict_domain
from .simbench import ESTIMATORS, MODELS, SimConfig, run_benchmark

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "FLLR_SEED"


class CliError(Exception):
    def __init__(self, code, message, exit_code=EXIT_USAGE):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _exit_code_for(exc):
    if isinstance(exc, IdJoinError):
        return EXIT_USAGE
    if isinstance(exc, (SingularDesignError, DegenerateError, NoAdmissibleModelError,
                        np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (IncompatibleGridsError, InsufficientDataError)):
        return EXIT_DATA
    if isinstance(exc, FuncRegError):
        return EXIT_NUMERIC
    return EXIT_DATA


def _fail(code, message, exit_code):
    print(json.dumps({"error": code, "message": str(message)}), file=sys.stderr)
    return exit_code


# --- configuration ----------------------------------------------------------------


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise CliError("CONFIG_READ", exc) from None
    except json.JSONDecodeError as exc:
        raise CliError("CONFIG_PARSE", exc) from None
    if not isinstance(cfg, dict):
        raise CliError("CONFIG_PARSE", "config must be a JSON object")
    return cfg


def _merge(args, keys, defaults):
    """Flags win over the config file, which wins over defaults."""
    cfg = _load_config(args.config)
    unknown = set(cfg) - set(keys) - {"seed"}
    if unknown:
        raise CliError("CONFIG_KEY", f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, defaults.get(key))
    out["seed"] = _resolve_seed(args.seed, cfg.get("seed"))
    return out


def _resolve_seed(flag, from_config):
    for source, value in (("--seed", flag), ("config", from_config),
                          (SEED_ENV, os.environ.get(SEED_ENV))):
        if value is None or value == "":
            continue
        try:
            return int(value)
        except (TypeError, ValueError):
            raise CliError("SEED", f"{source}: seed must be an integer, got {value!r}") from None
    return 0


def _digest(effective):
    blob = json.dumps(effective, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _manifest(command, args, seed, effective):
    return {
        "command": command,
        "config_path": args.config,
        "seed": seed,
        "output_dir": str(args.out),
        "tool_version": __version__,
        "config_sha256": _digest(effective),
    }


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _read_inputs(curves, response):
    try:
        ids, sample = read_curves_csv(curves)
        responses = read_response_csv(response)
    except OSError as exc:
        raise CliError("READ", exc, EXIT_DATA) from None
    except FuncRegError:
        raise
    except ValueError as exc:
        raise CliError("PARSE", exc, EXIT_DATA) from None
    return ids, sample, join_responses(ids, responses)


# --- the LL pipeline shared by fit and sfim ------------------------------------------


def _ll_pipeline(sample, y, opts):
    n = sample.n
    J_max = opts["J_max"] if opts["J_max"] is not None else min(10, n - 5)
    if n < 7:
        raise InsufficientDataError("automatic selection needs at least 7 curves")
    fpca = fit_fpca(sample, max(J_max, 1))
    grid = SelectionGrid.default(n, J_max=J_max, available=fpca.n_components)
    sel = select_all(sample, y, fpca, grid, opts["criterion"], opts["B"], opts["seed"])
    basis = fpca.eigenfunctions.truncate(sel.J_opt) if sel.J_opt else None
    model = FunctionalLocalLinear(sample, y, basis)
    fitted, coeffs = model.predict(sample, sel.J_opt, sel.k_reg, sel.k_deriv)
    if not np.all(np.isfinite(fitted)) or not np.all(np.isfinite(coeffs)):
        raise SingularDesignError("degenerate local fit at a sample curve")
    return fpca, sel, fitted, model.derivative_curves(coeffs)


FIT_KEYS = ("criterion", "B", "J_max")
FIT_DEFAULTS = {"criterion": "cv", "B": 100, "J_max": None}


def cmd_fit(args):
    opts = _merge(args, FIT_KEYS, FIT_DEFAULTS)
    ids, sample, y = _read_inputs(args.curves, args.response)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    effective = {"command": "fit", **opts}
    manifest = _manifest("fit", args, opts["seed"], effective)
    t0 = time.perf_counter()
    fpca, sel, fitted, deriv = _ll_pipeline(sample, y, opts)
    elapsed = time.perf_counter() - t0

    _write(out / "model.json", _dump({"manifest": manifest, "fpca": fpca.to_dict(),
                                      "selection": sel.to_dict()}))
    report = {
        "manifest": manifest,
        "n": sample.n,
        "J_opt": sel.J_opt,
        "k_reg": sel.k_reg,
        "k_deriv": sel.k_deriv,
        "criterion": sel.criterion,
        "B": sel.B,
        "selection": sel.to_dict(),
        "residual_mse": float(np.mean((y - fitted) ** 2)),
    }
    _write(out / "fit_report.json", _dump(report))
    with open(out / "fitted.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# seed", manifest["seed"], "config_sha256", manifest["config_sha256"],
                    "tool_version", __version__])
        w.writerow(["id", "y", "fitted"] + [f"d@{t!r}" for t in sample.grid.points.tolist()])
        for i, yi, fi, row in zip(ids, y, fitted, deriv):
            w.writerow([i, repr(float(yi)), repr(float(fi))] + [repr(float(v)) for v in row])
    _write(out / "timing.json", _dump({"wallclock_seconds": elapsed}))
    return EXIT_OK


BENCH_KEYS = ("model", "n", "n_test", "nsr", "rho", "a", "runs", "estimators", "threads",
              "B", "criterion", "grid_M")
BENCH_DEFAULTS = {"model": "M1", "n": 100, "n_test": 500, "nsr": 0.05, "rho": 0.05, "a": 1.0,
                  "runs": 1, "estimators": ",".join(ESTIMATORS), "threads": 1, "B": 100,
                  "criterion": "cv", "grid_M": 101}


def _estimator_list(spec):
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    items = [s.strip() for s in items if s.strip()]
    bad = [s for s in items if s not in ESTIMATORS]
    if bad or not items:
        raise CliError("ESTIMATORS", f"estimators must be drawn from {ESTIMATORS}, got {bad}")
    return tuple(e for e in ESTIMATORS if e in items)


def cmd_bench(args):
    opts = _merge(args, BENCH_KEYS, BENCH_DEFAULTS)
    if not 0 <= float(opts["rho"]) < 1:
        raise CliError("RHO_RANGE", f"rho must lie in [0, 1), got {opts['rho']}")
    if opts["model"] not in MODELS:
        raise CliError("MODEL", f"model must be one of {MODELS}")
    if int(opts["threads"]) < 1:
        raise CliError("THREADS", "threads must be >= 1")
    estimators = _estimator_list(opts["estimators"])
    try:
        config = SimConfig(model=opts["model"], n_train=int(opts["n"]),
                           n_test=int(opts["n_test"]), nsr=float(opts["nsr"]),
                           rho=float(opts["rho"]), a=float(opts["a"]),
                           grid_M=int(opts["grid_M"]), seed=opts["seed"],
                           runs=int(opts["runs"]), criterion=opts["criterion"], B=int(opts["B"]))
    except ValueError as exc:
        raise CliError("CONFIG_VALUE", exc) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # threads only changes scheduling, so it stays out of the hashed configuration
    effective = {"command": "bench", **config.to_dict(), "estimators": list(estimators)}
    report = run_benchmark(config, estimators, threads=int(opts["threads"]))
    report.manifest = _manifest("bench", args, config.seed, effective)
    _write(out / "bench_report.csv", report.csv_text())
    _write(out / "aggregate.json", report.aggregate_json())
    _write(out / "timings.csv", report.timings_csv_text())
    return EXIT_OK


def _parse_restrict(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise CliError("RESTRICT", f"--restrict expects lo:hi, got {text!r}") from None
    return lo, hi


SFIM_KEYS = FIT_KEYS + ("restrict",)


def cmd_sfim(args):
    opts = _merge(args, SFIM_KEYS, {**FIT_DEFAULTS, "restrict": None})
    restrict = _parse_restrict(opts["restrict"]) if opts["restrict"] else None
    ids, sample, y = _read_inputs(args.curves, args.response)
    if restrict is not None:
        try:
            sample = restrict_domain(sample, *restrict)
        except ValueError as exc:
            raise CliError("RESTRICT", exc) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    effective = {"command": "sfim", **opts}
    manifest = _manifest("sfim", args, opts["seed"], effective)
    fpca, sel, _, deriv = _ll_pipeline(sample, y, opts)
    fit = fit_sfim(sample, y, FunctionalSample(sample.grid, deriv))
    report = {
        "manifest": manifest,
        "n": sample.n,
        "restrict": list(restrict) if restrict else None,
        "J_opt": sel.J_opt,
        "k_reg": sel.k_reg,
        "k_deriv": sel.k_deriv,
        "link_k": fit.link.k,
        "pearson_r": fit.pearson_r,
        "grid": sample.grid.points.tolist(),
        "beta_hat": fit.beta_hat.values.tolist(),
        "index": dict(zip(ids, fit.index_scores.tolist())),
        "fitted": dict(zip(ids, fit.fitted.tolist())),
    }
    _write(out / "sfim_report.json", _dump(report))
    return EXIT_OK


# --- argument parsing -----------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="funcreg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"funcreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config; flags override its keys")
        sp.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV} or 0)")
        sp.add_argument("--out", default=".", help="output directory")

    def selection(sp):
        sp.add_argument("curves", help="curve CSV: header t,t_1..t_M then id,v_1..v_M")
        sp.add_argument("response", help="response CSV: header then id,y")
        sp.add_argument("--criterion", choices=("cv", "aicc"))
        sp.add_argument("--B", type=int, help="bootstrap replicates (default 100)")
        sp.add_argument("--J-max", dest="J_max", type=int, help="largest candidate dimension")

    fit = sub.add_parser("fit", help="automatic LL fit of user curves")
    selection(fit)
    common(fit)
    fit.set_defaults(func=cmd_fit)

    bench = sub.add_parser("bench", help="Monte-Carlo benchmark on a simulation model")
    bench.add_argument("--model", choices=MODELS)
    bench.add_argument("--n", type=int, help="training sample size")
    bench.add_argument("--n-test", dest="n_test", type=int)
    bench.add_argument("--nsr", type=float)
    bench.add_argument("--rho", type=float)
    bench.add_argument("--a", type=float)
    bench.add_argument("--runs", type=int)
    bench.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATORS)}")
    bench.add_argument("--threads", type=int)
    bench.add_argument("--B", type=int)
    bench.add_argument("--criterion", choices=("cv", "aicc"))
    bench.add_argument("--grid-M", dest="grid_M", type=int)
    common(bench)
    bench.set_defaults(func=cmd_bench)

    sfim = sub.add_parser("sfim", help="single-functional index model")
    selection(sfim)
    sfim.add_argument("--restrict", help="lo:hi sub-domain in grid coordinates")
    common(sfim)
    sfim.set_defaults(func=cmd_sfim)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc, exc.exit_code)
    except FuncRegError as exc:
        return _fail(exc.code, exc, _exit_code_for(exc))
    except np.linalg.LinAlgError as exc:
        return _fail("LINALG", exc, EXIT_NUMERIC)
    except ValueError as exc:
        return _fail("INVALID_ARGUMENT", exc, EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
