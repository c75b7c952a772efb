"""Experiment driver: config parsing, named suites, CSV/plot emission.

Configs are flat ``key=value`` text (``#`` comments, blank lines ignored);
repeating a key builds a list (used for ``epsilon``).  Unknown keys are
hard errors with line/column diagnostics.  Every run writes a
``manifest.json`` (config echo, library versions, seed, wall time and the
failure stage if any) next to the result CSVs; plots are optional SVG
files.  Exit codes: 0 all assertions passed, 1 assertion failure, 2
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .convex_order import atomic_from_csv, convex_order_check_1d, convex_order_check_lp
from .convexity import prekopa_closure_suite, second_difference_test
from .measures import build_gamma_grid, measure_from_potential, potential_field, \
    validate_inputs
from .ou import build_ou_kernel
from .potentials import PotentialGrammarError, evaluate_potential, parse_potential
from .schrodinger import fortet_solve, gauge_integral, sinkhorn_solve, solution_to_csv
from .transport import gj_criterion_check, monotonicity_experiment, sweep_to_csv, \
    trials_to_csv, zero_noise_sweep

EXPERIMENTS = ("solve", "limit-sweep", "monotonicity", "gj-check",
               "order-check", "prekopa-suite")

# keys accepted per experiment (on top of the common ones)
COMMON_KEYS = {"experiment", "dimension", "L", "N", "seed", "tol", "out",
               "plots", "quiet"}
EXPERIMENT_KEYS = {
    "solve": {"V", "W", "epsilon", "scheme", "solver_tol", "write_coupling",
              "waive_compactness"},
    "limit-sweep": {"V", "W", "epsilon", "solver_tol", "final_gap_rel",
                    "waive_compactness"},
    "monotonicity": {"V", "W", "epsilon", "n_trials", "solver_tol",
                     "waive_compactness"},
    "gj-check": {"V", "W", "n_trials", "expect", "waive_compactness"},
    "order-check": {"eta_csv", "nu_csv", "method", "expect"},
    "prekopa-suite": {"epsilon", "n_cases"},
}

DEFAULTS = {
    "dimension": 1,
    "L": 6.0,
    "N": 301,
    "seed": 0,
    "tol": 1e-8,
    "solver_tol": 1e-10,
    "V": "0",
    "W": "0",
    "scheme": "sinkhorn",
    "n_trials": 50,
    "n_cases": 100,
    "final_gap_rel": 0.05,
    "method": "both",
    "expect": "hold",
    "plots": False,
    "quiet": False,
    "write_coupling": False,
    "waive_compactness": True,
    "out": "out",
}


class ConfigError(ValueError):
    """Configuration problem; carries (line, column) when known."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{loc}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


def _coerce(value: str):
    s = value.strip()
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def parse_config(text: str, experiment: str | None = None) -> dict:
    """Parse flat key=value config text into a dict with defaults filled.

    Repeated keys accumulate into lists.  Unknown keys (for the given
    experiment, if known) raise ConfigError with line/column.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if not stripped.strip():
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key=value'", lineno,
                              len(line) - len(line.lstrip()))
        key, _, value = stripped.partition("=")
        col = line.index(key.strip()) if key.strip() in line else 0
        key = key.strip()
        if not key:
            raise ConfigError("empty key", lineno, col)
        val = _coerce(value)
        if key in raw:
            if not isinstance(raw[key], list):
                raw[key] = [raw[key]]
            raw[key].append(val)
        else:
            raw[key] = val
        raw.setdefault("_locations", {})[key] = (lineno, col)
    locations = raw.pop("_locations", {})
    exp = experiment or raw.get("experiment")
    if exp is not None:
        if exp not in EXPERIMENTS:
            line, col = locations.get("experiment", (None, None))
            raise ConfigError(f"unknown experiment {exp!r} "
                              f"(expected one of {', '.join(EXPERIMENTS)})", line, col)
        allowed = COMMON_KEYS | EXPERIMENT_KEYS[exp]
        for key in raw:
            if key not in allowed:
                line, col = locations.get(key, (None, None))
                raise ConfigError(f"unknown key {key!r} for experiment {exp!r}",
                                  line, col)
        if "experiment" in raw and experiment and raw["experiment"] != experiment:
            line, col = locations.get("experiment", (None, None))
            raise ConfigError(f"config says experiment={raw['experiment']!r} but the "
                              f"subcommand is {experiment!r}", line, col)
    config = dict(DEFAULTS)
    config.update(raw)
    config["experiment"] = exp
    _validate_config(config, locations)
    return config


def _validate_config(config, locations):
    def fail(key, msg):
        line, col = locations.get(key, (None, None))
        raise ConfigError(msg, line, col)

    if config["dimension"] not in (1, 2):
        fail("dimension", "dimension must be 1 or 2")
    for key in ("tol", "solver_tol", "final_gap_rel"):
        if not (isinstance(config[key], (int, float)) and config[key] > 0):
            fail(key, f"{key} must be a positive number")
    eps = config.get("epsilon")
    if eps is not None:
        eps_list = eps if isinstance(eps, list) else [eps]
        if any(not (isinstance(e, (int, float)) and e > 0) for e in eps_list):
            fail("epsilon", "epsilon values must be positive numbers")
        if config["experiment"] == "limit-sweep":
            if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or len(eps_list) < 2:
                fail("epsilon", "limit-sweep needs a strictly decreasing epsilon list")
    for key in ("V", "W"):
        if key in EXPERIMENT_KEYS.get(config["experiment"] or "", set()) or True:
            try:
                parse_potential(str(config[key]))
            except PotentialGrammarError as exc:
                fail(key, f"bad potential spec for {key}: {exc}")
    if config["experiment"] == "order-check":
        for key in ("eta_csv", "nu_csv"):
            if key not in config:
                raise ConfigError(f"order-check requires {key}")


def _eps_list(config):
    eps = config.get("epsilon", 0.2)
    return [float(e) for e in (eps if isinstance(eps, list) else [eps])]


def _build_inputs(config):
    grid = build_gamma_grid(int(config["dimension"]), float(config["L"]),
                            int(config["N"]))
    V = potential_field(grid, evaluate_potential(str(config["V"]), grid.nodes))
    W = potential_field(grid, evaluate_potential(str(config["W"]), grid.nodes))
    return grid, V, W


def _maybe_plot(config, out_dir, name, xs, series, xlabel, ylabel):
    if not config["plots"]:
        return None
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for label, ys in series:
        ax.plot(xs, ys, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(out_dir) / f"{name}.svg"
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def _run_solve(config, out_dir, log):
    grid, V, W = _build_inputs(config)
    eps = _eps_list(config)[0]
    kernel = build_ou_kernel(grid, eps)
    tol = float(config["solver_tol"])
    if config["scheme"] == "fortet":
        sol = fortet_solve(V, W, kernel, tol=tol)
    elif config["scheme"] == "sinkhorn":
        mu = measure_from_potential(grid, V, +1)
        nu = measure_from_potential(grid, W, -1)
        sol = sinkhorn_solve(mu, nu, kernel, tol=tol)
    else:
        raise ConfigError(f"unknown scheme {config['scheme']!r}")
    solution_to_csv(sol, out_dir, write_coupling=bool(config["write_coupling"]))
    gauge = gauge_integral(sol.h, V.values, W.values, kernel) \
        if np.isfinite(sol.h).all() else float("nan")
    log(f"cost={sol.cost:.6g} iterations={sol.iterations} "
        f"marginal_tv={sol.marginal_error:.3g} gauge={gauge:.12g}")
    if grid.dimension == 1:
        _maybe_plot(config, out_dir, "potentials", grid.axis,
                    [("h", sol.h), ("log g", sol.log_g)], "x", "value")
    ok = sol.converged and sol.marginal_error < 100 * tol
    return ok, {"cost": sol.cost, "iterations": sol.iterations,
                "converged": sol.converged, "gauge_integral": gauge}


def _run_limit_sweep(config, out_dir, log):
    _, V, W = _build_inputs(config)
    eps = _eps_list(config)
    sweep = zero_noise_sweep(V, W, eps, tol=float(config["solver_tol"]))
    sweep_to_csv(sweep, Path(out_dir) / "sweep.csv")
    rel = sweep.final_gap / max(sweep.half_w2sq, 1e-300)
    log(f"half_w2sq={sweep.half_w2sq:.6g} final_gap={sweep.final_gap:.6g} "
        f"(relative {rel:.3g}) monotone={sweep.gap_monotone}")
    if sweep.rows:
        _maybe_plot(config, out_dir, "gap", [r["epsilon"] for r in sweep.rows],
                    [("gap", [r["gap"] for r in sweep.rows])], "epsilon", "gap")
    ok = sweep.gap_monotone and not sweep.failures \
        and rel < float(config["final_gap_rel"])
    return ok, {"half_w2sq": sweep.half_w2sq, "final_gap": sweep.final_gap,
                "relative_gap": rel, "monotone": sweep.gap_monotone,
                "failures": sweep.failures}


def _run_monotonicity(config, out_dir, log):
    _, V, W = _build_inputs(config)
    rep = monotonicity_experiment(V, W, _eps_list(config), int(config["n_trials"]),
                                  int(config["seed"]),
                                  solver_tol=float(config["solver_tol"]),
                                  tol=float(config["tol"]))
    trials_to_csv(rep.trials, Path(out_dir) / "trials.csv")
    log(f"trials={len(rep.trials)} violations={len(rep.violations)} "
        f"discarded={len(rep.discarded)} worst_margin={rep.worst_margin:.3g} "
        f"worst_certificate={rep.worst_certificate:.3g}")
    ok = rep.passed and rep.worst_certificate >= -1e-9
    return ok, {"violations": rep.violations, "discarded": len(rep.discarded),
                "worst_margin": rep.worst_margin,
                "worst_certificate": rep.worst_certificate}


def _run_gj_check(config, out_dir, log):
    grid, V, W = _build_inputs(config)
    mu = measure_from_potential(grid, V, +1)
    nu = measure_from_potential(grid, W, -1)
    rep = gj_criterion_check(mu, nu, int(config["n_trials"]), int(config["seed"]),
                             tol=float(config["tol"]))
    trials_to_csv(rep.trials, Path(out_dir) / "trials.csv")
    verdict = "holds" if rep.criterion_holds else \
        f"criterion (ii) violated, Lipschitz {'>' if not rep.lipschitz_ok else '<='} 1"
    log(f"w2={rep.w2_target:.6g} lipschitz={rep.lipschitz:.6g} {verdict} "
        f"consistent={rep.consistent}")
    expected = {"hold": True, "violation": False}.get(str(config["expect"]))
    if expected is None:
        raise ConfigError("expect must be 'hold' or 'violation'")
    ok = rep.consistent and rep.criterion_holds == expected
    return ok, {"w2": rep.w2_target, "lipschitz": rep.lipschitz,
                "criterion_holds": rep.criterion_holds,
                "consistent": rep.consistent,
                "violations": len(rep.violations), "discarded": len(rep.discarded)}


def _run_order_check(config, out_dir, log):
    eta = atomic_from_csv(config["eta_csv"])
    nu = atomic_from_csv(config["nu_csv"])
    tol = float(config["tol"])
    method = str(config["method"])
    verdicts = {}
    if method in ("1d", "both"):
        verdicts["1d"] = convex_order_check_1d(eta, nu, tol=tol).dominated
    if method in ("lp", "both"):
        verdicts["lp"] = convex_order_check_lp(eta, nu, tol=tol).dominated
    if not verdicts:
        raise ConfigError(f"unknown method {method!r} (expected 1d, lp or both)")
    agree = len(set(verdicts.values())) == 1
    dominated = next(iter(verdicts.values()))
    log(f"verdicts={verdicts} agree={agree}")
    expected = {"yes": True, "no": False, "hold": None}.get(str(config["expect"]))
    ok = agree and (expected is None or dominated == expected)
    return ok, {"verdicts": verdicts, "agree": agree}


def _run_prekopa_suite(config, out_dir, log):
    grid = build_gamma_grid(int(config["dimension"]), float(config["L"]),
                            int(config["N"]))
    kernel = build_ou_kernel(grid, _eps_list(config)[0])
    res = prekopa_closure_suite(kernel, int(config["n_cases"]),
                                int(config["seed"]), tol=float(config["tol"]))
    log(f"cases={res['n_cases']} failures={len(res['failures'])} "
        f"worst_convex={res['worst_convex_margin']:.3g} "
        f"worst_concave={res['worst_concave_margin']:.3g}")
    return res["passed"], {k: v for k, v in res.items()}


RUNNERS = {
    "solve": _run_solve,
    "limit-sweep": _run_limit_sweep,
    "monotonicity": _run_monotonicity,
    "gj-check": _run_gj_check,
    "order-check": _run_order_check,
    "prekopa-suite": _run_prekopa_suite,
}


def run(config: dict, out_dir=None, quiet: bool = False) -> int:
    """Execute one experiment; returns the process exit code.

    The manifest is written even on failure, with the failing stage.
    """
    out_dir = Path(out_dir if out_dir is not None else config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    def log(msg):
        if not quiet and not config.get("quiet"):
            print(msg)

    manifest = {
        "experiment": config["experiment"],
        "config": {k: v for k, v in config.items()},
        "versions": {"entlab": __version__, "numpy": np.__version__,
                     "scipy": __import__("scipy").__version__,
                     "python": sys.version.split()[0]},
        "seed": config["seed"],
        "stage": "start",
    }
    start = time.time()
    code = 0
    try:
        manifest["stage"] = "run"
        ok, results = RUNNERS[config["experiment"]](config, out_dir, log)
        manifest["results"] = _jsonable(results)
        manifest["stage"] = "completed"
        code = 0 if ok else 1
        log("PASS" if ok else "FAIL")
    except ConfigError as exc:
        manifest["stage"] = "config"
        manifest["error"] = str(exc)
        log(f"config error: {exc}")
        code = 2
    except Exception as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        log(f"error during {manifest['stage']}: {exc}")
        code = 1
    finally:
        manifest["wall_time_s"] = time.time() - start
        manifest["exit_code"] = code
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="entlab",
        description="Entropic-transport experiment driver.",
        epilog="Config format: flat key=value lines; '#' comments; repeated "
               "keys build lists (e.g. epsilon). Defaults: dimension=1, L=6, "
               "N=301, tol=1e-8, solver_tol=1e-10, seed=0, V=0, W=0. "
               "Potential grammar: sums of quadratic(a,b,c), abs-norm(a), "
               "indicator-ball(r), piecewise-linear(x1:y1,...), constants.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None,
                       help="path to a key=value config file")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default from config, else ./out)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed override")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        config = parse_config(text, experiment=args.experiment)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config["seed"] = args.seed
    return run(config, out_dir=args.out, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
