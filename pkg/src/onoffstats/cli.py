"""Command-line front end.

Subcommands: ``limit`` (single interval), ``significance`` (likelihood-ratio
test), ``scan`` (interval versus observed count, one row per count),
``toys`` (significance-distribution and coverage studies) and ``belt``
(confidence-belt export).  Results go to standard output as a plain table,
or to a file as comma-separated values / JSON; every output file embeds the
fully resolved configuration so a run can be reproduced from the artifact
alone.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .bayes import (
    ScanGrid,
    bayes_limit_flux,
    bayes_limit_onoff,
    bayes_limit_onoff_sys,
    bayes_limit_profile_known_bkg,
    bayes_upper_limit_poisson,
    chi2_approx_limit,
)
from .errors import (
    BracketingError,
    DomainError,
    EmptyConfidenceSetError,
    QuadratureError,
)
from .likelihoods import CountingObservation, FluxCalibration, KnownBackgroundModel, OnOffObservation
from .neyman import build_belt, fc_exact_interval, fc_marginal_interval, save_belt
from .significance import lima_significance, onoff_sys_significance
from .toymc import ToyConfig, coverage_study, significance_study

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

THREADS_ENV = "ONOFFSTATS_THREADS"

# fields each limit/scan method needs beyond n_obs and cl
METHOD_FIELDS = {
    "fc": ("b",),
    "fc-marginal": ("b", "sigma_b"),
    "bayes-poisson": ("b",),
    "bayes-profile": ("b", "sigma_b"),
    "chi2": ("b", "sigma_b"),
    "bayes-onoff": ("n_bg", "tau"),
    "bayes-onoff-sys": ("n_bg", "tau", "sigma_rel"),
    "bayes-flux-known": ("b", "sigma_b", "f_sim", "s_sim", "sigma_sim"),
    "bayes-flux-onoff-sys": ("n_bg", "tau", "sigma_rel", "f_sim", "s_sim", "sigma_sim"),
}
SIGNIFICANCE_FIELDS = {
    "lima": ("n_bg", "tau"),
    "onoff-sys": ("n_bg", "tau", "sigma_rel"),
}
POSITIVE_FIELDS = ("tau", "f_sim", "s_sim")
NONNEGATIVE_FIELDS = ("b", "sigma_b", "sigma_rel", "sigma_sim", "s_true", "b_true")
COUNT_FIELDS = ("n_obs", "n_bg", "n_start", "n_stop", "n_trials")
STRICT_SIGMA = {
    "fc-marginal": "sigma_b",
    "bayes-profile": "sigma_b",
    "chi2": "sigma_b",
    "bayes-onoff-sys": "sigma_rel",
    "bayes-flux-known": "sigma_b",
    "bayes-flux-onoff-sys": "sigma_rel",
    "onoff-sys": "sigma_rel",
}


class CliValidationError(Exception):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidationError([message])


def _add_common(p):
    p.add_argument("--cl", type=float, default=None, help="confidence level in (0, 1)")
    p.add_argument("--config", default=None, help="JSON file mirroring any flag")
    p.add_argument("--output", default=None, help="write results to this file")
    p.add_argument("--format", dest="out_format", choices=("table", "csv", "json"), default=None)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default from ${THREADS_ENV}, else 1)")


def _add_observation(p, flux=False):
    p.add_argument("--n-obs", type=int, default=None, help="on-zone (observed) count")
    p.add_argument("--n-bg", type=int, default=None, help="off-zone count")
    p.add_argument("--tau", type=float, default=None, help="off/on exposure ratio")
    p.add_argument("--sigma-rel", type=float, default=None,
                   help="relative zone-efficiency systematic (fraction, e.g. 0.03)")
    p.add_argument("--b", type=float, default=None, help="expected background (counts)")
    p.add_argument("--sigma-b", type=float, default=None,
                   help="absolute background uncertainty (counts)")
    if flux:
        p.add_argument("--f-sim", type=float, default=None, help="simulated reference flux")
        p.add_argument("--s-sim", type=float, default=None, help="simulated signal count at f-sim")
        p.add_argument("--sigma-sim", type=float, default=None,
                       help="absolute uncertainty of s-sim")


def _add_grid(p):
    p.add_argument("--s-max", type=float, default=None, help="signal/flux grid upper bound")
    p.add_argument("--s-points", type=int, default=None, help="number of grid points (Bayes)")
    p.add_argument("--s-step", type=float, default=None, help="signal grid step (belts)")
    p.add_argument("--belt-n-max", type=int, default=None, help="largest count in the belt")


def build_parser() -> _Parser:
    parser = _Parser(prog="onoffstats", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("limit", help="interval for a single observation")
    p.add_argument("--method", choices=sorted(METHOD_FIELDS), default=None)
    _add_observation(p, flux=True)
    _add_grid(p)
    _add_common(p)

    p = sub.add_parser("significance", help="likelihood-ratio significance")
    p.add_argument("--method", choices=sorted(SIGNIFICANCE_FIELDS), default=None)
    p.add_argument("--clamped", action="store_true", default=None,
                   help="pin the ratio to 1 for deficits (physical boundary)")
    _add_observation(p)
    _add_common(p)

    p = sub.add_parser("scan", help="interval versus observed count")
    p.add_argument("--method", choices=sorted(METHOD_FIELDS), default=None)
    p.add_argument("--n-start", type=int, default=None, help="first observed count")
    p.add_argument("--n-stop", type=int, default=None, help="last observed count (inclusive)")
    _add_observation(p, flux=True)
    _add_grid(p)
    _add_common(p)

    p = sub.add_parser("toys", help="toy Monte Carlo studies")
    p.add_argument("--study", choices=("significance", "coverage"), default=None)
    p.add_argument("--method", default=None,
                   help="significance: lima|onoff-sys; coverage: fc|bayes-poisson|"
                        "bayes-onoff|bayes-onoff-sys")
    p.add_argument("--s-true", type=float, default=None)
    p.add_argument("--b-true", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--sigma-rel", type=float, default=None)
    p.add_argument("--n-trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--clamped", action="store_true", default=None)
    p.add_argument("--s-points", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("belt", help="build and export a confidence belt")
    p.add_argument("--likelihood", choices=("exact", "marginal"), default=None)
    p.add_argument("--b", type=float, default=None)
    p.add_argument("--sigma-b", type=float, default=None)
    _add_grid(p)
    _add_common(p)

    return parser


_DEFAULTS = {
    "cl": 0.9,
    "out_format": "table",
    "threads": None,  # filled from env
    "clamped": False,
    "seed": 1,
    "n_trials": 1000,
    "study": "significance",
    "likelihood": "exact",
    "sigma_b": 0.0,
    "sigma_rel": 0.0,
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults; everything explicit."""
    cfg = {k: v for k, v in vars(args).items() if k != "config"}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliValidationError([f"cannot read config file {args.config}: {exc}"])
        if not isinstance(file_cfg, dict):
            raise CliValidationError(["config file must hold a JSON object"])
        for key, value in file_cfg.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise CliValidationError([f"unknown config key {key!r}"])
            if cfg[key] is None:
                cfg[key] = value
    for key, value in cfg.items():
        if value is None and key in _DEFAULTS:
            cfg[key] = _DEFAULTS[key]
    if cfg.get("threads") is None:
        env = os.environ.get(THREADS_ENV)
        cfg["threads"] = int(env) if env and env.isdigit() else 1
    return cfg


def _is_count(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config(cfg: dict) -> list[str]:
    """Every violation, not just the first."""
    errors = []
    command = cfg["command"]

    if command in ("limit", "scan", "significance"):
        registry = SIGNIFICANCE_FIELDS if command == "significance" else METHOD_FIELDS
        method = cfg.get("method")
        if method is None:
            errors.append("--method is required")
        elif method not in registry:
            errors.append(f"unknown method {method!r} for {command}")
        else:
            for name in registry[method]:
                if cfg.get(name) is None:
                    errors.append(f"method {method!r} requires --{name.replace('_', '-')}")
            strict = STRICT_SIGMA.get(method)
            if strict and cfg.get(strict) is not None and cfg[strict] <= 0:
                errors.append(f"method {method!r} requires --{strict.replace('_', '-')} > 0")
        if command in ("limit", "significance") and cfg.get("n_obs") is None:
            errors.append("--n-obs is required")
        if command == "scan":
            if cfg.get("n_start") is None or cfg.get("n_stop") is None:
                errors.append("scan requires --n-start and --n-stop")
            elif cfg["n_start"] > cfg["n_stop"]:
                errors.append("--n-start must not exceed --n-stop")

    if command == "toys":
        if cfg.get("study") == "significance" and cfg.get("method") not in SIGNIFICANCE_FIELDS:
            errors.append("toys --study significance needs --method lima or onoff-sys")
        if cfg.get("study") == "coverage" and cfg.get("method") not in (
            "fc", "bayes-poisson", "bayes-onoff", "bayes-onoff-sys",
        ):
            errors.append("toys --study coverage needs --method fc|bayes-poisson|"
                          "bayes-onoff|bayes-onoff-sys")
        for name in ("s_true", "b_true", "tau"):
            if cfg.get(name) is None:
                errors.append(f"toys requires --{name.replace('_', '-')}")
        if cfg.get("method") in ("onoff-sys", "bayes-onoff-sys") and not cfg.get("sigma_rel"):
            errors.append(f"method {cfg.get('method')!r} requires --sigma-rel > 0")

    if command == "belt":
        if cfg.get("b") is None:
            errors.append("belt requires --b")
        if cfg.get("likelihood") == "marginal" and not cfg.get("sigma_b"):
            errors.append("marginal belt requires --sigma-b > 0")
        if cfg.get("output") is None:
            errors.append("belt requires --output")

    for name in COUNT_FIELDS:
        value = cfg.get(name)
        if value is not None and not _is_count(value):
            errors.append(f"--{name.replace('_', '-')} must be an integer count, got {value!r}")
        elif value is not None and value < 0:
            errors.append(f"--{name.replace('_', '-')} must be >= 0, got {value}")
    for name in POSITIVE_FIELDS:
        value = cfg.get(name)
        if value is not None and value <= 0:
            errors.append(f"--{name.replace('_', '-')} must be > 0, got {value}")
    for name in NONNEGATIVE_FIELDS:
        value = cfg.get(name)
        if value is not None and value < 0:
            errors.append(f"--{name.replace('_', '-')} must be >= 0, got {value}")

    cl = cfg.get("cl")
    if cl is not None and not 0.0 < cl < 1.0:
        errors.append(f"--cl must be inside (0, 1), got {cl}")
    if cfg.get("threads") is not None and cfg["threads"] < 1:
        errors.append(f"--threads must be >= 1, got {cfg['threads']}")
    if cfg.get("n_trials") is not None and _is_count(cfg["n_trials"]) and cfg["n_trials"] < 1:
        errors.append("--n-trials must be >= 1")
    if cfg.get("s_points") is not None and cfg["s_points"] < 2:
        errors.append("--s-points must be >= 2")
    if cfg.get("s_step") is not None and cfg["s_step"] <= 0:
        errors.append("--s-step must be > 0")
    if cfg.get("s_max") is not None and cfg["s_max"] <= 0:
        errors.append("--s-max must be > 0")
    return errors


def _bayes_grid(cfg, b_ref, n_obs):
    if cfg.get("s_max") is None and cfg.get("s_points") is None:
        return None
    s_max = cfg.get("s_max")
    if s_max is None:
        # point-count override only: size the span for the largest count the
        # run will see so one grid serves every scan row
        n_top = max(n_obs, cfg.get("n_stop") or 0)
        s_max = n_top + b_ref + 10.0 * math.sqrt(n_top + b_ref + 1.0) + 20.0
    return ScanGrid.with_points(0.0, s_max, cfg.get("s_points") or 4000)


def _belt_grid(cfg, n_obs, b):
    from .neyman import DEFAULT_S_STEP, default_s_grid

    step = cfg.get("s_step") or (0.02 if cfg.get("method") == "fc-marginal" else DEFAULT_S_STEP)
    if cfg.get("s_max") is not None:
        return step * np.arange(int(math.ceil(cfg["s_max"] / step)) + 1)
    return default_s_grid(n_obs, b, step=step)


def compute_limit(cfg: dict, n_obs: int):
    method = cfg["method"]
    if method == "fc":
        return fc_exact_interval(
            n_obs, cfg["b"], cfg["cl"], _belt_grid(cfg, n_obs, cfg["b"]), cfg.get("belt_n_max")
        )
    if method == "fc-marginal":
        model = KnownBackgroundModel(cfg["b"], cfg["sigma_b"])
        return fc_marginal_interval(
            n_obs, model, cfg["cl"], _belt_grid(cfg, n_obs, cfg["b"]), cfg.get("belt_n_max")
        )
    if method == "bayes-poisson":
        return bayes_upper_limit_poisson(
            CountingObservation(n_obs), KnownBackgroundModel(cfg["b"]), cfg["cl"],
            grid=_bayes_grid(cfg, cfg["b"], n_obs),
        )
    if method == "bayes-profile":
        return bayes_limit_profile_known_bkg(
            CountingObservation(n_obs), KnownBackgroundModel(cfg["b"], cfg["sigma_b"]),
            cfg["cl"], grid=_bayes_grid(cfg, cfg["b"], n_obs),
        )
    if method == "chi2":
        return chi2_approx_limit(
            CountingObservation(n_obs), KnownBackgroundModel(cfg["b"], cfg["sigma_b"]), cfg["cl"]
        )
    if method == "bayes-onoff":
        obs = OnOffObservation(n_obs, cfg["n_bg"], cfg["tau"])
        return bayes_limit_onoff(obs, cfg["cl"], grid=_bayes_grid(cfg, cfg["n_bg"] / cfg["tau"], n_obs))
    if method == "bayes-onoff-sys":
        obs = OnOffObservation(n_obs, cfg["n_bg"], cfg["tau"], cfg["sigma_rel"])
        return bayes_limit_onoff_sys(obs, cfg["cl"], grid=_bayes_grid(cfg, cfg["n_bg"] / cfg["tau"], n_obs))
    calib = FluxCalibration(cfg["f_sim"], cfg["s_sim"], cfg["sigma_sim"])
    if method == "bayes-flux-known":
        return bayes_limit_flux(
            CountingObservation(n_obs), calib, cfg["cl"], "known-bkg",
            model=KnownBackgroundModel(cfg["b"], cfg["sigma_b"]),
        )
    if method == "bayes-flux-onoff-sys":
        obs = OnOffObservation(n_obs, cfg["n_bg"], cfg["tau"], cfg["sigma_rel"])
        return bayes_limit_flux(obs, calib, cfg["cl"], "onoff-sys")
    raise DomainError(f"unknown method {method!r}")


HARD_FLAGS = {"tail_mass", "too_coarse", "s_max_saturated"}


def _interval_row(n_obs, result):
    return {
        "n_obs": n_obs,
        "lower": result.lower,
        "upper": result.upper,
        "method": result.method,
        "cl": result.cl,
        "achieved_mass": result.achieved_mass,
        "flags": "|".join(result.flags),
    }


def run_limit(cfg, out):
    result = compute_limit(cfg, cfg["n_obs"])
    rows = [_interval_row(cfg["n_obs"], result)]
    emit(cfg, rows, out)
    hard = HARD_FLAGS.intersection(result.flags)
    if hard:
        print(f"numerical failure: flags {sorted(hard)}", file=sys.stderr)
        return EXIT_NUMERICAL
    for flag in result.flags:
        print(f"warning: {flag}", file=sys.stderr)
    return EXIT_OK


def run_significance(cfg, out):
    obs = OnOffObservation(cfg["n_obs"], cfg["n_bg"], cfg["tau"], cfg.get("sigma_rel") or 0.0)
    if cfg["method"] == "lima":
        res = lima_significance(obs, clamped=cfg["clamped"])
    else:
        res = onoff_sys_significance(obs, clamped=cfg["clamped"])
    rows = [{
        "n_obs": cfg["n_obs"],
        "n_bg": cfg["n_bg"],
        "tau": cfg["tau"],
        "sigma_rel": cfg.get("sigma_rel") or 0.0,
        "method": cfg["method"],
        "likelihood_ratio": res.lam,
        "s_value": res.s_value,
    }]
    emit(cfg, rows, out)
    return EXIT_OK


def run_scan(cfg, out):
    counts = list(range(cfg["n_start"], cfg["n_stop"] + 1))

    def one(n):
        try:
            result = compute_limit(cfg, n)
            row = _interval_row(n, result)
            row["error"] = ""
        except (DomainError, QuadratureError, BracketingError, EmptyConfidenceSetError,
                OverflowError) as exc:
            row = {"n_obs": n, "lower": None, "upper": None, "method": cfg["method"],
                   "cl": cfg["cl"], "achieved_mass": None, "flags": "", "error": str(exc)}
        return row

    if cfg["threads"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
            rows = list(pool.map(one, counts))
    else:
        rows = [one(n) for n in counts]
    emit(cfg, rows, out)
    if all(row["error"] for row in rows):
        print("numerical failure: every scan row failed", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def run_toys(cfg, out):
    toy = ToyConfig(
        s_true=cfg["s_true"], b_true=cfg["b_true"], tau=cfg["tau"],
        sigma=cfg.get("sigma_rel") or 0.0, n_trials=cfg["n_trials"], seed=cfg["seed"],
    )
    if cfg["study"] == "significance":
        summary = significance_study(
            toy, method=cfg["method"], clamped=cfg["clamped"], threads=cfg["threads"]
        )
        rows = [
            {"bin_lo": float(summary.hist_edges[i]), "bin_hi": float(summary.hist_edges[i + 1]),
             "count": int(summary.hist_counts[i])}
            for i in range(len(summary.hist_counts))
        ]
        extra = {
            "summary.mean": summary.mean,
            "summary.stddev": summary.stddev,
            "summary.ks_distance": summary.ks_distance,
            "summary.underflow": summary.underflow,
            "summary.overflow": summary.overflow,
            "summary.redraws": summary.redraws,
        }
        emit(cfg, rows, out, extra=extra)
    else:
        summary = coverage_study(
            toy, cfg["method"], cfg["cl"], threads=cfg["threads"],
            grid_points=cfg.get("s_points"),
        )
        rows = [{
            "coverage": summary.coverage,
            "wilson_low": summary.wilson_low,
            "wilson_high": summary.wilson_high,
            "n_covered": summary.n_covered,
            "n_trials": summary.n_trials,
        }]
        emit(cfg, rows, out)
    return EXIT_OK


def run_belt(cfg, out):
    model = None
    if cfg["likelihood"] == "marginal":
        model = KnownBackgroundModel(cfg["b"], cfg["sigma_b"])
    step = cfg.get("s_step") or (0.02 if cfg["likelihood"] == "marginal" else 0.005)
    s_max = cfg.get("s_max") or max(10.0, 25.0 + 10.0 * math.sqrt(cfg["b"] + 1.0))
    s_grid = step * np.arange(int(math.ceil(s_max / step)) + 1)
    belt = build_belt(cfg["b"], model, cfg["cl"], s_grid, cfg.get("belt_n_max"))
    with open(cfg["output"], "w") as fh:
        for key in sorted(cfg):
            fh.write(f"# config.{key} = {_fmt(cfg[key])}\n")
        save_belt(belt, fh)
    out.write(f"belt with {len(s_grid)} signal values written to {cfg['output']}\n")
    return EXIT_OK


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def emit(cfg: dict, rows: list[dict], out, extra: dict | None = None):
    """Render rows as table/csv/json; files embed the resolved config.

    The output path itself is left out of the embedded block so identical
    runs produce byte-identical artifacts wherever they are written.
    """
    fmt = cfg["out_format"]
    path = cfg.get("output")
    cfg = {k: v for k, v in cfg.items() if k != "output"}
    if fmt == "json":
        payload = {"config": {k: cfg[k] for k in sorted(cfg)}, "rows": rows}
        if extra:
            payload["summary"] = extra
        text = json.dumps(payload, indent=2, sort_keys=True, default=_fmt) + "\n"
    else:
        lines = []
        if fmt == "csv" or path:
            for key in sorted(cfg):
                lines.append(f"# {key} = {_fmt(cfg[key])}")
            if extra:
                for key in sorted(extra):
                    lines.append(f"# {key} = {_fmt(extra[key])}")
        if rows:
            headers = list(rows[0].keys())
            if fmt == "csv":
                lines.append(",".join(headers))
                for row in rows:
                    lines.append(",".join(_fmt(row[h]) for h in headers))
            else:
                widths = {h: max(len(h), *(len(_fmt(r[h])) for r in rows)) for h in headers}
                lines.append("  ".join(h.ljust(widths[h]) for h in headers))
                for row in rows:
                    lines.append("  ".join(_fmt(row[h]).ljust(widths[h]) for h in headers))
        if extra and fmt == "table":
            lines.extend(f"{k} = {_fmt(v)}" for k, v in extra.items())
        text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        out.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        errors = validate_config(cfg)
        if errors:
            raise CliValidationError(errors)
        runner = {
            "limit": run_limit,
            "significance": run_significance,
            "scan": run_scan,
            "toys": run_toys,
            "belt": run_belt,
        }[cfg["command"]]
        return runner(cfg, sys.stdout)
    except CliValidationError as exc:
        for message in exc.errors:
            print(f"error: {message}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DomainError, QuadratureError, BracketingError, EmptyConfidenceSetError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
