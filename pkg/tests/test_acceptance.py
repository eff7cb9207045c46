"""End-to-end acceptance criteria A1-A12.

Each test records one pass/fail line (printed in the terminal summary) and
then asserts the criterion at its stated tolerance.  The stochastic
criteria run at fixed seeds; their budgets are noted next to each test.
"""
import json
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from exploratory_hjb.analysis import (dt_bias_allowance, exploratory_stationary, gibbs_noise_floor,
                                      lambda_sweep, mc_value_oracle)
from exploratory_hjb.grid import Grid, ScalarField
from exploratory_hjb.landscape import builtin_landscape, with_gaussian_bumps
from exploratory_hjb.operators import (GeneralProblem, ProblemSpec, gap_bound, operator_gap,
                                       softmax_integral_general)
from exploratory_hjb.policy import bangbang_field, build_policy
from exploratory_hjb.sde import (SdeConfig, estimate_stationary, fit_gibbs, gibbs_density,
                                 histogram_edges, simulate_exploratory, simulate_langevin, tv_distance)
from exploratory_hjb.solver import residual_field, solve_hjb

DW = builtin_landscape("double_well_1d")
SPEC = ProblemSpec(0.1, 1.0, 0.5)
GRID = Grid(1, 3.0, 301)
BETAS = np.geomspace(0.05, 2.0, 25)
EDGES = histogram_edges(3.0, 1, 0.05)

# every solve made by this module, for the residual (A2) and diffusion-bound (A4) sweeps
SOLVES = []


def solve(landscape, grid, spec, kind="exploratory"):
    v, rep = solve_hjb(landscape, grid, spec, kind=kind)
    SOLVES.append((landscape, spec, kind, v, rep))
    return v, rep


def test_a1_closed_form(acceptance):
    start = time.perf_counter()
    zero = builtin_landscape("zero")
    grid = Grid(1, 3.0, 301)
    v_ex, _ = solve(zero, grid, SPEC)
    v_cl, _ = solve(zero, grid, SPEC, "classical")
    secs = time.perf_counter() - start
    target = -(SPEC.lam / SPEC.rho) * np.log(1 - SPEC.a)
    err_ex = float(np.max(np.abs(v_ex.values - target)))
    err_cl = float(np.max(np.abs(v_cl.values)))
    ok = err_ex <= 1e-7 and err_cl <= 1e-9 and secs < 10 and abs(target - 0.069315) < 1e-6
    acceptance("A1", ok, f"|v_lam - {target:.6f}| = {err_ex:.1e} (<=1e-7), |v| = {err_cl:.1e} (<=1e-9), {secs:.2f}s")


@pytest.fixture(scope="module")
def sweep():
    start = time.perf_counter()
    res = lambda_sweep(DW, GRID, SPEC, [0.4, 0.2, 0.1, 0.05, 0.025], 1.5, doubling=True)
    return res, time.perf_counter() - start


def test_a3_rate(acceptance, sweep):
    res, secs = sweep
    # the sweep's solves count towards A2/A4 as well
    for lam in res.lambdas:
        for kind in ("exploratory", "classical"):
            solve(DW, GRID, SPEC.with_lam(lam), kind)
    dec = bool(np.all(np.diff(res.errors) < 0))
    spread = res.ratio_spread
    dbl = res.max_doubling_change
    ok = dec and spread <= 3.0 and dbl < 0.1 and secs < 600
    errs = ", ".join(f"{e:.4f}" for e in res.errors)
    acceptance("A3", ok, f"e = [{errs}] decreasing={dec}, ratio spread {spread:.3f} (<=3), "
                         f"doubling change {dbl:.1e} (<0.1), slope {res.slope:.3f}, {secs:.1f}s")


def test_a8_oracle(acceptance):
    rows, ok = [], True
    start = time.perf_counter()
    for lam in (0.1, 0.2):
        spec = SPEC.with_lam(lam)
        v, _ = solve(DW, GRID, spec)
        pol = build_policy(v, spec)
        cfg = SdeConfig(dt=0.01, horizon=14.0, n_paths=20000, seed=11)
        est, hw = mc_value_oracle(DW, pol, spec, [0.0], cfg)
        bias = dt_bias_allowance(DW, pol, spec, [0.0], cfg)
        v0 = v.values[GRID.n // 2]
        gap = abs(est - v0)
        ok &= gap <= hw + 3 * bias
        rows.append(f"lam={lam}: |{est:.4f} - {v0:.4f}| = {gap:.4f} <= {hw:.4f} + 3*{bias:.4f}")
    secs = time.perf_counter() - start
    ok &= secs < 600
    acceptance("A8", ok, "; ".join(rows) + f", {secs:.0f}s")


def test_a9_comparison(acceptance):
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for p in range(5):
        if p < 3:
            base, grid = DW, Grid(1, 3.0, 201)
        else:
            base, grid = builtin_landscape("double_well_2d"), Grid(2, 2.5, 41)
        d = base.dim
        k = 3
        f1 = with_gaussian_bumps(base, rng.uniform(-2, 2, (k, d)), -rng.uniform(0, 0.6, k),
                                 rng.uniform(0.2, 0.8, k))
        f2 = with_gaussian_bumps(f1, rng.uniform(-2, 2, (k, d)), rng.uniform(0, 0.6, k),
                                 rng.uniform(0.2, 0.8, k))
        pts = grid.points()
        assert np.all(f1.f(pts) <= f2.f(pts))
        for kind in ("exploratory", "classical"):
            v1, _ = solve(f1, grid, SPEC, kind)
            v2, _ = solve(f2, grid, SPEC, kind)
            worst = max(worst, float(np.max(v1.values - v2.values)))
    acceptance("A9", worst <= 1e-7, f"max(v1 - v2) over 5 pairs x 2 kinds = {worst:.2e} (<=1e-7)")


def test_a2_residuals(acceptance):
    # perturbation locality on a solved field
    v, _ = solve(DW, GRID, SPEC)
    eps, i = 1e-6, 150
    bumped = v.values.copy()
    bumped[i] += eps
    r0 = residual_field(v, DW, SPEC).values
    r1 = residual_field(ScalarField(GRID, bumped), DW, SPEC).values
    diff = np.abs(r1 - r0)
    far = np.abs(np.arange(GRID.n) - i) > 1
    local_ok = bool(np.all(diff[far] == 0.0)) and diff[i] > 0.1 * eps / GRID.h ** 2
    worst = max(residual_field(v, land, spec, kind).sup_norm() for land, spec, kind, v, _ in SOLVES)
    slowest = max(rep.seconds for *_, rep in SOLVES)
    ok = worst <= 1e-8 and local_ok and slowest < 60
    acceptance("A2", ok, f"{len(SOLVES)} solves, max interior residual {worst:.1e} (<=1e-8), "
                         f"locality {local_ok}, slowest solve {slowest:.2f}s (<60s)")


def test_a4_diffusion_bounds(acceptance):
    lo, hi = None, None
    ok = True
    for land, spec, kind, v, _ in SOLVES:
        if kind != "exploratory":
            continue
        g = build_policy(v, spec).g_field()
        ok &= bool(np.all(g >= np.sqrt(2 * spec.a) - 1e-12) and np.all(g <= np.sqrt(2) + 1e-12))
        lo = g.min() if lo is None else min(lo, g.min())
        hi = g.max() if hi is None else max(hi, g.max())
    v_cl, _ = solve(DW, GRID, SPEC, "classical")
    values = np.unique(bangbang_field(v_cl, SPEC.a))
    two = len(values) == 2 and np.allclose(sorted(values), [1.0, np.sqrt(2)])
    acceptance("A4", ok and two, f"g_lam in [{lo:.6f}, {hi:.6f}] within [1, 1.414214] for all "
                                 f"exploratory solves; bang-bang values {values.round(6).tolist()}")


def test_a5_stationary_law(acceptance):
    # dt = 1e-3 keeps the Euler-Maruyama bias of the Langevin self-fit below the
    # separation being measured; 80k paths x 1000 records = 8e7 samples
    start = time.perf_counter()
    v, _ = solve(DW, GRID, SPEC)
    cfg = SdeConfig(dt=1e-3, horizon=15.0, burn_in=5.0, n_paths=80_000, seed=1, record_every=10)
    ens = simulate_exploratory(DW, build_policy(v, SPEC), cfg, edges=EDGES, keep_samples=False)
    est = estimate_stationary(ens)
    fit = fit_gibbs(est, DW, BETAS)
    floor = gibbs_noise_floor(DW, fit.beta_star, cfg, BETAS, seeds=(2, 3))
    mass = est.mass_outside_ball(DW.global_minimizer, 0.25)
    secs = time.perf_counter() - start
    sep = fit.tv_star >= 3 * floor.noise_floor
    control = all(f.tv_star <= floor.noise_floor for f in floor.fits) and max(floor.beta_errors()) <= 0.1
    ok = sep and mass >= 0.05 and control and est.n_samples >= 1e6 and secs < 900
    ctl = ", ".join(f"(beta* {f.beta_star:.4f}, tv* {f.tv_star:.5f})" for f in floor.fits)
    acceptance("A5", ok, f"tv* {fit.tv_star:.5f} at beta* {fit.beta_star:.4f} vs floor {floor.noise_floor:.5f} "
                         f"(ratio {fit.tv_star / floor.noise_floor:.2f} >= 3); mass outside 0.25-ball {mass:.3f} "
                         f"(>=0.05); Langevin control {ctl}; n={est.n_samples:.1e}, {secs:.0f}s")


def test_a6_langevin_gibbs(acceptance):
    cfg = SdeConfig(dt=0.01, horizon=20.0, burn_in=10.0, n_paths=2000, seed=21)
    tvs, n = {}, 0
    for beta in (0.3, 0.5):
        est = estimate_stationary(simulate_langevin(DW, beta, cfg, edges=EDGES, keep_samples=False))
        tvs[beta] = tv_distance(est, gibbs_density(DW, beta, EDGES))
        n = est.n_samples
    ok = all(t <= 0.05 for t in tvs.values()) and n >= 1e6
    acceptance("A6", ok, ", ".join(f"TV(beta={b}) = {t:.4f}" for b, t in tvs.items()) + f" (<=0.05), n={n:.1e}")


def test_a7_softmax_to_sup(acceptance):
    rng = np.random.default_rng(7)
    u = np.linspace(0.0, 1.0, 20001)
    worst, mono = 0.0, True
    lams = np.geomspace(1e-3, 1.0, 15)
    for _ in range(100):
        c = rng.normal(0.0, 1.0, 3) / np.arange(1, 4)
        s = rng.normal(0.0, 1.0, 3) / np.arange(1, 4)
        off = rng.normal()

        def g(t, c=c, s=s, off=off):
            k = np.arange(1, 4)
            return off + np.sum(c * np.cos(np.pi * k * np.atleast_1d(t)[:, None])
                                + s * np.sin(np.pi * k * np.atleast_1d(t)[:, None]), axis=1)

        sup = float(g(u).max())
        prob = GeneralProblem((0.0,), (1.0,), h=lambda x, v, g=g: float(g(v[0])[0]),
                              b=lambda x, v: np.zeros(1), sigma=lambda x, v: np.zeros((1, 1)), n_quad=400)
        val = softmax_integral_general(prob, 1e-3, [0.0], [0.0], [[0.0]])
        worst = max(worst, abs(val - sup))
        shifted = GeneralProblem((0.0,), (1.0,), h=lambda x, v, g=g, sup=sup: float(g(v[0])[0]) - sup,
                                 b=lambda x, v: np.zeros(1), sigma=lambda x, v: np.zeros((1, 1)),
                                 n_quad=400)
        seq = [softmax_integral_general(shifted, lam, [0.0], [0.0], [[0.0]]) for lam in lams]
        mono &= bool(np.all(np.diff(seq) <= 1e-12))
    acceptance("A7", worst <= 1e-2 and mono,
               f"max |softmax(1e-3) - sup| over 100 exponents = {worst:.2e} (<=1e-2); monotone in lam: {mono}")


def test_a10_operator_gap(acceptance):
    lams = np.geomspace(1e-4, 1.0, 100)
    laps = np.concatenate([-np.geomspace(1e4, 1e-6, 50), np.geomspace(1e-6, 1e4, 50)])
    excess = []
    for lam in lams:
        spec = ProblemSpec(lam, 1.0, 0.5)
        excess.append(np.abs(operator_gap(spec, laps)) - gap_bound(spec, laps))
    excess = np.array(excess)
    worst_excess = float(excess.max())
    zero_err = max(abs(abs(operator_gap(ProblemSpec(lam, 1.0, 0.5), 0.0)) - lam * np.log(2.0)) for lam in lams)
    ok = worst_excess <= 0 and zero_err <= 1e-12 and excess.size == 10_000
    acceptance("A10", ok, f"max(|gap| - bound) over {excess.size} points = {worst_excess:.3e} (<=0); "
                          f"|gap(0)| vs lam ln 2: {zero_err:.1e} (<=1e-12)")


def test_a11_stability(acceptance):
    # 2000 paths x 1000 post-burn-in steps = 2e6 samples per run, independent seeds
    start = time.perf_counter()
    cfg = SdeConfig(dt=0.01, horizon=15.0, burn_in=5.0, n_paths=2000)
    runs = {}
    for lam, seed in ((0.1, 1), (0.1, 2), (0.11, 3), (0.05, 4), (0.4, 5)):
        runs[(lam, seed)] = exploratory_stationary(DW, GRID, SPEC.with_lam(lam), replace(cfg, seed=seed))
    floor = tv_distance(runs[(0.1, 1)], runs[(0.1, 2)])
    near = tv_distance(runs[(0.11, 3)], runs[(0.1, 1)])
    far = tv_distance(runs[(0.05, 4)], runs[(0.4, 5)])
    secs = time.perf_counter() - start
    ok = near <= 2 * floor and far > floor and secs < 1200
    acceptance("A11", ok, f"TV(0.11, 0.10) = {near:.4f} <= 2 x floor {floor:.4f}; "
                          f"TV(0.05, 0.4) = {far:.4f} > floor; n=2.0e6 per run, {secs:.0f}s")


CLI_SMALL = ["--set", "grid.n=121", "--set", "sde.n_paths=128", "--set", "sde.horizon=6",
             "--set", "sweep.lambdas=0.4,0.2,0.1", "--set", "stationary.min_samples=100"]
PIPELINES = {
    "solve": ["solve"],
    "solve-classical": ["solve", "--set", "solver.kind=classical"],
    "anneal": ["anneal"],
    "stationary": ["stationary"],
    "stationary-langevin": ["stationary", "--set", "stationary.run=langevin"],
    "sweep": ["sweep"],
}


def _run_cli(args, out, threads):
    env = dict(os.environ)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env[var] = str(threads)
    cmd = [sys.executable, "-m", "exploratory_hjb.cli", *args, "--out", str(out), "--seed", "5", *CLI_SMALL]
    return subprocess.run(cmd, env=env, capture_output=True, text=True).returncode


def _bodies(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.name != "timing.json"}


def test_a12_determinism(acceptance, tmp_path):
    bad = []
    for name, args in PIPELINES.items():
        a, b = tmp_path / f"{name}-1", tmp_path / f"{name}-4"
        codes = (_run_cli(args, a, 1), _run_cli(args, b, 4))
        if codes != (0, 0):
            bad.append(f"{name}: exit codes {codes}")
            continue
        if _bodies(a) != _bodies(b):
            bad.append(f"{name}: outputs differ")
        manifest = json.loads((a / "manifest.json").read_text())
        if set(manifest["files"]) | {"manifest.json", "timing.json"} != {p.name for p in a.iterdir()}:
            bad.append(f"{name}: manifest incomplete")
    acceptance("A12", not bad, f"{len(PIPELINES)} pipelines byte-identical across runs with 1 vs 4 threads"
               if not bad else "; ".join(bad))
