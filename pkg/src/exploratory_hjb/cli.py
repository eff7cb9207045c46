"""Command-line front end: ``exploratory-hjb {solve,anneal,stationary,sweep}``.

Configuration is an INI file (or the ``resolved-config.json`` echoed by a
previous run); ``--set section.key=value`` and ``--seed`` override it.  Every
run writes ``resolved-config.json``, its outputs, and ``manifest.json`` with
the sha256 of each output.  Wall-clock timings go to ``timing.json``, the
only file left out of the manifest, so two runs with the same config and
seed produce identical manifests.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 threshold failure under ``--check``.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (SweepAborted, fingerprint, gibbs_noise_floor, lambda_sweep)
from .grid import Grid, write_field_csv
from .landscape import InvalidLandscapeError, UnknownLandscapeError, builtin_landscape
from .operators import ProblemSpec
from .policy import bangbang_field, build_policy
from .sde import (InsufficientDataError, SdeConfig, SimulationBlowupError,
                  UnsupportedDimensionError, estimate_stationary, fit_gibbs, histogram_edges,
                  simulate_bangbang, simulate_exploratory, simulate_langevin)
from .solver import SolverConfig, SolverError, solve_hjb

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]


def _optional_ints(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return [int(round(t)) for t in _floats(text)]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _x0(text):
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return "uniform" if str(text).strip() == "uniform" else _floats(text)


def _dtau(text):
    return "auto" if str(text).strip() == "auto" else float(text)


# section -> key -> (parser, default)
SCHEMA = {
    "landscape": {"name": (str, "double_well_1d"), "dim": (int, 1), "c": (_optional_float, None)},
    "grid": {"halfwidth": (float, 3.0), "n": (int, 301)},
    "problem": {"lam": (float, 0.1), "rho": (float, 1.0), "a": (float, 0.5)},
    "solver": {"kind": (str, "exploratory"), "tol": (float, 1e-8), "max_iter": (int, 10000),
               "method": (str, "policy"), "damping": (float, 1.0), "dtau": (_dtau, "auto")},
    "sde": {"dt": (float, 1e-2), "horizon": (float, 20.0), "burn_in": (_optional_float, None),
            "n_paths": (int, 256), "seed": (int, 0), "x0": (_x0, "uniform"),
            "record_every": (int, 1), "trace_every": (int, 100), "box": (float, 3.0)},
    "anneal": {"beta": (float, 0.5), "threshold": (float, 0.01)},
    "stationary": {"run": (str, "exploratory"), "beta": (float, 0.65), "bin_width": (float, 0.05),
                   "delta": (float, 0.25), "beta_min": (float, 0.05), "beta_max": (float, 2.0),
                   "beta_count": (int, 25), "floor_seeds": (_optional_ints, None), "separation": (float, 3.0),
                   "min_mass": (float, 0.05), "beta_tolerance": (float, 0.1),
                   "min_samples": (int, 1000)},
    "sweep": {"lambdas": (_floats, [0.4, 0.2, 0.1, 0.05, 0.025]), "r": (float, 1.5),
              "doubling": (_bool, True), "max_spread": (float, 3.0), "max_doubling_change": (float, 0.1)},
}


def _raw_sections(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError("JSON config must map sections to key/value objects")
        return data
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def resolve_config(path=None, overrides=(), seed=None) -> dict:
    """Merge defaults, the config file and ``section.key=value`` overrides."""
    raw = _raw_sections(path) if path else {}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        raw.setdefault(section.strip(), {})[key.strip()] = value.strip()
    if seed is not None:
        raw.setdefault("sde", {})["seed"] = seed
    resolved = {}
    for section, keys in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in keys:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key, (parse, default) in keys.items():
            value = raw.get(section, {}).get(key, default)
            try:
                resolved[section][key] = parse(value) if value is not None else None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {value!r}") from exc
    return resolved


# ---------------------------------------------------------------------------
# building domain objects

def _landscape(cfg):
    c = cfg["landscape"]
    return builtin_landscape(c["name"], dim=c["dim"], c=c["c"])


def _grid(cfg, dim):
    return Grid(dim, cfg["grid"]["halfwidth"], cfg["grid"]["n"])


def _spec(cfg):
    p = cfg["problem"]
    return ProblemSpec(p["lam"], p["rho"], p["a"])


def _solver(cfg):
    s = cfg["solver"]
    return SolverConfig(tol=s["tol"], max_iter=s["max_iter"], dtau=s["dtau"],
                        damping=s["damping"], method=s["method"])


def _sde(cfg):
    s = cfg["sde"]
    x0 = s["x0"]
    return SdeConfig(dt=s["dt"], horizon=s["horizon"], burn_in=s["burn_in"], n_paths=s["n_paths"],
                     seed=s["seed"], x0=x0 if x0 == "uniform" else tuple(x0),
                     record_every=s["record_every"], trace_every=s["trace_every"], box=s["box"])


# ---------------------------------------------------------------------------
# output helpers

class Output:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.timing = {}

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def json(self, name: str, data) -> None:
        text = json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True)
        self.path(name).write_bytes((text + "\n").encode("utf-8"))

    def csv(self, name: str, header, rows) -> None:
        lines = [",".join(header)]
        lines += [",".join(_cell(v) for v in row) for row in rows]
        self.path(name).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    def finish(self, cfg) -> None:
        self.json("resolved-config.json", cfg)
        digests = {}
        for name in sorted(set(self.files)):
            digests[name] = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
        self.json("manifest.json", {"config_fingerprint": fingerprint(cfg), "files": digests})
        text = json.dumps(self.timing, sort_keys=True, indent=2)
        (self.root / "timing.json").write_bytes((text + "\n").encode("utf-8"))


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _clean(x):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# commands

def cmd_solve(cfg, out: Output, check: bool) -> int:
    land = _landscape(cfg)
    grid = _grid(cfg, land.dim)
    spec = _spec(cfg)
    kind = cfg["solver"]["kind"]
    if kind not in ("exploratory", "classical"):
        raise ConfigError(f"solver.kind must be exploratory or classical, got {kind!r}")
    start = time.perf_counter()
    try:
        v, report = solve_hjb(land, grid, spec, _solver(cfg), kind=kind)
    except SolverError as exc:
        out.json("report.json", _clean({"converged": False, "error": str(exc), "history": exc.history,
                                        "kind": kind, "method": cfg["solver"]["method"]}))
        out.timing["solve_seconds"] = time.perf_counter() - start
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.timing["solve_seconds"] = report.seconds
    v.to_csv(out.path("value.csv"))
    g_ok = True
    if kind == "exploratory":
        g = build_policy(v, spec).g_field()
        write_field_csv(out.path("g_lambda.csv"), grid, {"g_lambda": g})
        lo, hi = np.sqrt(2 * spec.a), np.sqrt(2.0)
        g_ok = bool(g.min() >= lo - 1e-12 and g.max() <= hi + 1e-12)
    else:
        g = bangbang_field(v, spec.a)
        sign = np.where(g < np.sqrt(2.0), 1, -1)
        write_field_csv(out.path("bangbang_regions.csv"), grid, {"laplacian_sign": sign, "g": g})
        g_ok = len(np.unique(g)) <= 2
    body = report.to_dict()
    body.pop("seconds")
    body["diffusion_bounds_ok"] = g_ok
    out.json("report.json", _clean(body))
    if check and not (report.residual <= cfg["solver"]["tol"] and g_ok):
        return EXIT_CHECK
    return EXIT_OK


def cmd_anneal(cfg, out: Output, check: bool) -> int:
    land = _landscape(cfg)
    if land.dim >= 3:
        raise UnsupportedDimensionError(
            f"bang-bang baseline unsupported for d={land.dim}: only d in {{1, 2}} is well posed")
    grid = _grid(cfg, land.dim)
    spec = _spec(cfg)
    sde = _sde(cfg)
    solver = _solver(cfg)
    start = time.perf_counter()
    v_ex, _ = solve_hjb(land, grid, spec, solver, kind="exploratory")
    v_cl, _ = solve_hjb(land, grid, spec, solver, kind="classical")
    runs = {
        "exploratory": simulate_exploratory(land, build_policy(v_ex, spec), sde, keep_samples=False),
        "langevin": simulate_langevin(land, cfg["anneal"]["beta"], replace(sde, box=grid.halfwidth),
                                      keep_samples=False),
        "bangbang": simulate_bangbang(land, v_cl, sde, spec.a, keep_samples=False),
    }
    out.timing["anneal_seconds"] = time.perf_counter() - start
    d = land.dim
    rows = []
    for name, ens in runs.items():
        fin = land.f(ens.finals)
        for i in range(ens.finals.shape[0]):
            rows.append([name, i] + list(ens.finals[i]) + [fin[i], ens.best_f[i]])
    out.csv("finals.csv", ["method", "path"] + [f"x_{k + 1}" for k in range(d)] + ["f", "best_f"], rows)
    times = runs["exploratory"].trace_times
    header = ["t"]
    cols = []
    for name, ens in runs.items():
        header += [f"{name}_min", f"{name}_median"]
        cols += [ens.best_f_trace.min(axis=0), np.median(ens.best_f_trace, axis=0)]
    out.csv("best_f_trace.csv", header, [[t] + [c[j] for c in cols] for j, t in enumerate(times)])
    thr = cfg["anneal"]["threshold"]
    summary = {"threshold": thr, "methods": {}}
    for name, ens in runs.items():
        best = ens.best_f
        summary["methods"][name] = {
            "min_best_f": float(best.min()), "median_best_f": float(np.median(best)),
            "mean_best_f": float(best.mean()), "fraction_below_threshold": float(np.mean(best <= thr)),
            "mean_final_f": float(land.f(ens.finals).mean()),
            "g_range": [float(ens.g_range[0]), float(ens.g_range[1])],
        }
    out.json("summary.json", _clean(summary))
    if check and not all(m["median_best_f"] <= thr for m in summary["methods"].values()):
        return EXIT_CHECK
    return EXIT_OK


def cmd_stationary(cfg, out: Output, check: bool) -> int:
    land = _landscape(cfg)
    grid = _grid(cfg, land.dim)
    spec = _spec(cfg)
    sde = _sde(cfg)
    st = cfg["stationary"]
    betas = np.geomspace(st["beta_min"], st["beta_max"], st["beta_count"])
    start = time.perf_counter()
    if st["run"] == "exploratory":
        v, _ = solve_hjb(land, grid, spec, _solver(cfg), kind="exploratory")
        box = grid.halfwidth
        edges = histogram_edges(box, land.dim, st["bin_width"])
        ens = simulate_exploratory(land, build_policy(v, spec), sde, edges=edges, keep_samples=False)
    elif st["run"] == "langevin":
        box = sde.box
        edges = histogram_edges(box, land.dim, st["bin_width"])
        ens = simulate_langevin(land, st["beta"], sde, edges=edges, keep_samples=False)
    else:
        raise ConfigError(f"stationary.run must be exploratory or langevin, got {st['run']!r}")
    est = estimate_stationary(ens)
    if est.n_samples < st["min_samples"]:
        raise InsufficientDataError(f"{est.n_samples} samples < stationary.min_samples={st['min_samples']}")
    fit = fit_gibbs(est, land, betas)
    beta_ref = fit.beta_star if st["run"] == "exploratory" else st["beta"]
    seeds = st["floor_seeds"] or [sde.seed + 1, sde.seed + 2]
    floor = gibbs_noise_floor(land, beta_ref, replace(sde, box=box), betas,
                              seeds=tuple(seeds), bin_width=st["bin_width"])
    floor_fits = list(zip(seeds, floor.fits))
    noise_floor = floor.noise_floor
    if st["run"] == "langevin":
        # the control run is itself a Gibbs-law sample and joins the floor
        floor_fits.insert(0, (sde.seed, fit))
        noise_floor = max(noise_floor, fit.tv_star)
    out.timing["stationary_seconds"] = time.perf_counter() - start
    est.to_csv(out.path("histogram.csv"))
    center = land.global_minimizer
    mass = est.mass_outside_ball(center, st["delta"])
    gibbs = {
        "run": st["run"], "beta_star": fit.beta_star, "tv_star": fit.tv_star,
        "noise_floor": noise_floor, "floor_beta": beta_ref,
        "floor_fits": [{"seed": s, "beta_star": f.beta_star, "tv_star": f.tv_star} for s, f in floor_fits],
        "ratio": fit.tv_star / noise_floor if noise_floor > 0 else float("inf"),
        "n_samples": est.n_samples,
    }
    if st["run"] == "langevin":
        gibbs["beta_relative_error"] = abs(fit.beta_star - st["beta"]) / st["beta"]
    out.json("gibbs_fit.json", _clean(gibbs))
    out.json("dirac_check.json", _clean({"center": list(center), "delta": st["delta"],
                                         "mass_outside_delta_ball": mass}))
    if not check:
        return EXIT_OK
    if st["run"] == "exploratory":
        ok = fit.tv_star >= st["separation"] * noise_floor and mass >= st["min_mass"]
    else:
        ok = (fit.tv_star <= noise_floor and all(
            abs(f.beta_star - st["beta"]) / st["beta"] <= st["beta_tolerance"] for _, f in floor_fits))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_sweep(cfg, out: Output, check: bool) -> int:
    land = _landscape(cfg)
    grid = _grid(cfg, land.dim)
    spec = _spec(cfg)
    sw = cfg["sweep"]
    start = time.perf_counter()
    code = EXIT_OK
    try:
        res = lambda_sweep(land, grid, spec, sw["lambdas"], sw["r"], _solver(cfg), doubling=sw["doubling"])
    except SweepAborted as exc:
        print(str(exc), file=sys.stderr)
        res, code = exc.partial, EXIT_NUMERIC
    out.timing["sweep_seconds"] = time.perf_counter() - start
    res.to_csv(out.path("sweep.csv"))
    summary = res.summary()
    summary["slope_available"] = res.slope is not None
    summary["completed"] = code == EXIT_OK
    out.json("sweep_summary.json", _clean(summary))
    if code == EXIT_OK and check:
        passed = (summary["strictly_decreasing"] is not False and res.ratio_spread <= sw["max_spread"]
                  and (not sw["doubling"] or res.max_doubling_change < sw["max_doubling_change"]))
        code = EXIT_OK if passed else EXIT_CHECK
    return code


COMMANDS = {"solve": cmd_solve, "anneal": cmd_anneal, "stationary": cmd_stationary, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exploratory-hjb",
                                     description="Exploratory temperature-control HJB experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file or resolved-config.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides sde.seed)")
        p.add_argument("--check", action="store_true", help="exit 4 if acceptance thresholds fail")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.set, args.seed)
        out = Output(Path(args.out))
        code = COMMANDS[args.command](cfg, out, args.check)
    except (ConfigError, UnknownLandscapeError, InvalidLandscapeError, UnsupportedDimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SimulationBlowupError, InsufficientDataError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.finish(cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
