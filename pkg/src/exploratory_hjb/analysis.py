"""Experiments built on the solver and the simulator.

* ``lambda_sweep``: sup-distance between exploratory and classical value
  functions on an inner ball as ``lam`` shrinks, against ``lam ln(1/lam)``.
* ``mc_value_oracle``: Monte Carlo estimate of the exploratory objective
  under a feedback policy, an independent check on the PDE solution.
* ``stationary_stability`` and the noise-floor helpers: TV distances between
  empirical stationary laws.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import Grid, sup_norm_on_ball
from .landscape import Landscape
from .operators import ProblemSpec, truncated_exp_entropy
from .policy import FeedbackPolicy, build_policy
from .sde import (SdeConfig, InsufficientDataError, StationaryEstimate, estimate_stationary,
                  euler_maruyama, fit_gibbs, histogram_edges, simulate_exploratory,
                  simulate_langevin, tv_distance)
from .solver import SolverConfig, SolverError, solve_classical_hjb, solve_exploratory_hjb

Z99 = 2.5758293035489004     # two-sided 99% normal quantile


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def fingerprint(*parts) -> str:
    """sha256 of the canonical (sorted-key) JSON encoding of ``parts``."""
    text = json.dumps(_jsonable(list(parts)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# lambda sweep

@dataclass
class SweepResult:
    """Rows ``(lam, sup_error, ratio)`` with ``lam`` strictly decreasing."""

    lambdas: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    slope: float | None = None
    doubling_change: list = field(default_factory=list)
    r: float = 0.0
    fingerprint: str = ""

    @property
    def ratio_spread(self) -> float:
        if not self.ratios:
            return float("nan")
        return float(max(self.ratios) / min(self.ratios))

    @property
    def max_doubling_change(self) -> float | None:
        return max(self.doubling_change) if self.doubling_change else None

    def summary(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "sup_errors": list(self.errors),
            "ratios": list(self.ratios),
            "slope": self.slope,
            "ratio_spread": self.ratio_spread if self.ratios else None,
            "strictly_decreasing": bool(np.all(np.diff(self.errors) < 0)) if self.errors else None,
            "doubling_relative_change": list(self.doubling_change),
            "max_doubling_relative_change": self.max_doubling_change,
            "r": self.r,
            "fingerprint": self.fingerprint,
        }

    def to_csv(self, path) -> None:
        """Columns ``lambda, sup_error, ratio``; the last line is a JSON footer."""
        lines = ["lambda,sup_error,ratio"]
        for lam, e, q in zip(self.lambdas, self.errors, self.ratios):
            lines.append(f"{float(lam)!r},{float(e)!r},{float(q)!r}")
        footer = {"slope": self.slope, "fingerprint": self.fingerprint}
        lines.append("# " + json.dumps(footer, sort_keys=True))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


class SweepAborted(RuntimeError):
    """A solve failed mid-sweep; ``partial`` holds the rows completed so far."""

    def __init__(self, message, partial: SweepResult):
        super().__init__(message)
        self.partial = partial


def _fit_slope(lambdas, errors) -> float | None:
    if len(lambdas) < 2:
        return None
    slope, _ = np.polyfit(np.log(lambdas), np.log(errors), 1)
    return float(slope)


def _ball_error(landscape, grid, spec, r, config, v_cl=None):
    if v_cl is None:
        v_cl, _ = solve_classical_hjb(landscape, grid, spec, config)
    v_ex, _ = solve_exploratory_hjb(landscape, grid, spec, config)
    return sup_norm_on_ball(v_ex, v_cl, r), v_cl


def lambda_sweep(landscape: Landscape, grid: Grid, spec: ProblemSpec, lambdas, r: float,
                 config: SolverConfig | None = None, doubling: bool = False) -> SweepResult:
    """Error ``e(lam) = sup_{|x| <= r} |v_lam - v|`` over a list of ``lam``.

    ``spec`` supplies ``rho`` and ``a``; its ``lam`` is ignored.  With
    ``doubling`` every error is recomputed on the box of twice the
    half-width (same spacing) and the relative change is recorded.
    """
    lambdas = sorted({float(l) for l in lambdas}, reverse=True)
    if not lambdas or not all(0 < l < 1 for l in lambdas):
        raise ValueError("lambdas must lie in (0, 1)")
    if not 0 < r <= grid.halfwidth / 2:
        raise ValueError("need 0 < r <= L/2")
    config = config or SolverConfig()
    out = SweepResult(r=r, fingerprint=fingerprint(landscape.name, grid, spec, lambdas, r, config, doubling))
    v_cl = v_cl_big = None
    for lam in lambdas:
        s = spec.with_lam(lam)
        try:
            e, v_cl = _ball_error(landscape, grid, s, r, config, v_cl)
            if doubling:
                e_big, v_cl_big = _ball_error(landscape, grid.doubled(), s, r, config, v_cl_big)
        except SolverError as exc:
            out.slope = _fit_slope(out.lambdas, out.errors)
            raise SweepAborted(f"solve failed at lam={lam}: {exc}", out) from exc
        out.lambdas.append(lam)
        out.errors.append(e)
        out.ratios.append(float(e / (lam * np.log(1.0 / lam))))
        if doubling:
            out.doubling_change.append(float(abs(e_big - e) / e))
    out.slope = _fit_slope(out.lambdas, out.errors)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo value oracle

def _check_horizon(spec: ProblemSpec, config: SdeConfig) -> None:
    if spec.rho * config.horizon < 14.0:
        raise ValueError("need rho * horizon >= 14 so the discount tail is below 1e-6")


def mc_value_oracle(landscape: Landscape, policy: FeedbackPolicy, spec: ProblemSpec, x0,
                    config: SdeConfig) -> tuple[float, float]:
    """Discounted exploratory cost from ``x0`` under ``policy``.

    Each path accumulates ``int_0^T e^{-rho t} [f(X_t) - lam H(X_t)] dt``
    where ``H`` is the closed-form entropy of the truncated exponential
    temperature law at ``X_t``.  The state is held fixed over each time
    step while the discount factor is integrated exactly.  Returns the
    sample mean and the 99% normal half-width ``z_99 sd / sqrt(N)``.
    """
    _check_horizon(spec, config)
    if policy.spec.a != spec.a:
        raise ValueError("policy and problem disagree on the control set")
    cfg = replace(config, x0=np.asarray(x0, dtype=float).ravel().tolist(), burn_in=0.0)
    rho, lam, a = spec.rho, spec.lam, spec.a
    # state frozen over each step, discount integrated exactly over it
    step_weight = -np.expm1(-rho * cfg.dt) / (rho * cfg.dt)

    def integrand(x, t):
        H = truncated_exp_entropy(policy.z_at(x), a)
        return step_weight * np.exp(-rho * t) * (landscape.f(x) - lam * H)

    ens = euler_maruyama(landscape, policy.g_at, cfg, policy.grid.halfwidth,
                         g_bounds=(np.sqrt(2 * a), np.sqrt(2.0)), integrand=integrand,
                         keep_samples=False)
    vals = ens.integral
    n = vals.size
    sd = float(np.std(vals, ddof=1)) if n > 1 else float("inf")
    return float(np.mean(vals)), Z99 * sd / np.sqrt(n)


def dt_bias_allowance(landscape: Landscape, policy: FeedbackPolicy, spec: ProblemSpec, x0,
                      config: SdeConfig) -> float:
    """``|estimate(dt) - estimate(dt/2)|`` with the same seed and paths."""
    est, _ = mc_value_oracle(landscape, policy, spec, x0, config)
    half, _ = mc_value_oracle(landscape, policy, spec, x0, replace(config, dt=config.dt / 2))
    return abs(est - half)


# ---------------------------------------------------------------------------
# stationary laws

def exploratory_stationary(landscape: Landscape, grid: Grid, spec: ProblemSpec, config: SdeConfig,
                           bin_width: float = 0.05, solver: SolverConfig | None = None
                           ) -> StationaryEstimate:
    """Solve, build the optimal policy, simulate and histogram on the grid box."""
    v, _ = solve_exploratory_hjb(landscape, grid, spec, solver)
    policy = build_policy(v, spec)
    edges = histogram_edges(grid.halfwidth, grid.dim, bin_width)
    ens = simulate_exploratory(landscape, policy, config, edges=edges, keep_samples=False)
    return estimate_stationary(ens)


def stationary_stability(landscape: Landscape, lambdas, config: SdeConfig, grid: Grid,
                         spec: ProblemSpec, bin_width: float = 0.05,
                         seeds: tuple | None = None) -> float:
    """TV distance between the stationary histograms at two values of ``lam``.

    ``seeds`` optionally gives one simulation seed per ``lam``; by default
    both runs use ``config.seed``.
    """
    lam1, lam2 = lambdas
    s1, s2 = seeds if seeds is not None else (config.seed, config.seed)
    p = exploratory_stationary(landscape, grid, spec.with_lam(lam1), replace(config, seed=s1), bin_width)
    q = exploratory_stationary(landscape, grid, spec.with_lam(lam2), replace(config, seed=s2), bin_width)
    return tv_distance(p, q)


def seed_noise_floor(landscape: Landscape, lam: float, config: SdeConfig, grid: Grid,
                     spec: ProblemSpec, seeds=(1, 2), bin_width: float = 0.05) -> float:
    """TV between two independent-seed runs at the same ``lam``."""
    return stationary_stability(landscape, (lam, lam), config, grid, spec, bin_width, seeds)


@dataclass
class GibbsFloor:
    """Self-fits of Gibbs measures to Langevin data at a known ``beta``."""

    beta: float
    fits: list
    noise_floor: float

    def beta_errors(self) -> list:
        return [abs(f.beta_star - self.beta) / self.beta for f in self.fits]


def gibbs_noise_floor(landscape: Landscape, beta: float, config: SdeConfig, betas,
                      seeds=(2, 3), bin_width: float = 0.05) -> GibbsFloor:
    """Refit Gibbs measures to constant-``beta`` Langevin data.

    The floor is the largest self-fit TV over independent seeds: the
    residual a Gibbs fit leaves on data whose law really is Gibbs, under the
    same budget, time step and binning as the run being tested.
    """
    edges = histogram_edges(config.box, landscape.dim, bin_width)
    fits = []
    for s in seeds:
        ens = simulate_langevin(landscape, beta, replace(config, seed=s), edges=edges, keep_samples=False)
        fits.append(fit_gibbs(estimate_stationary(ens), landscape, betas))
    return GibbsFloor(beta, fits, max(f.tv_star for f in fits))


def exact_stationary_1d(landscape: Landscape, policy: FeedbackPolicy, edges: tuple,
                        resolution: int = 50) -> StationaryEstimate:
    """Stationary law of the reflected 1-d exploratory diffusion, binned on ``edges``.

    With ``m = g_lam^2 / 2`` the zero-flux solution of ``(f' rho)' + (m rho)'' = 0``
    is ``rho = exp(-int f'/m) / m``; it is integrated on the policy grid and
    resampled at ``resolution`` midpoints per bin.  No sampling noise, so it
    serves as an oracle for the simulated histograms.
    """
    grid = policy.grid
    if grid.dim != 1 or len(edges) != 1:
        raise ValueError("closed-form stationary law is one-dimensional")
    x = grid.axis
    m = policy.mean_field()
    fp = landscape.grad(x[:, None])[:, 0]
    log_rho = -cumulative_trapezoid(fp / m, x, initial=0.0) - np.log(m)
    rho = np.exp(log_rho - log_rho.max())
    e = np.asarray(edges[0], dtype=float)
    offs = (np.arange(resolution) + 0.5) / resolution
    mids = (e[:-1, None] + np.diff(e)[:, None] * offs[None, :]).ravel()
    inside = (np.abs(mids) <= grid.halfwidth).astype(float)
    w = (np.interp(mids, x, rho) * inside).reshape(len(e) - 1, resolution).sum(axis=1)
    if w.sum() <= 0:
        raise InsufficientDataError("bins do not overlap the policy grid")
    return StationaryEstimate((e,), w / w.sum(), 0)
