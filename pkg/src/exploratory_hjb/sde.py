"""Euler-Maruyama ensembles, stationary histograms and Gibbs comparisons.

Random streams
--------------
Path ``i`` under master seed ``s`` draws every normal it needs from its own
counter-based generator ``Philox(key=[s, i])``.  A path's trajectory is
therefore a function of ``(s, i)`` alone: any subset of paths, in any order
or split across workers, reproduces the same numbers.  Statistics are
reduced in path-index order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .grid import Grid, GridMismatchError, ScalarField, central_gradient, laplacian
from .landscape import Landscape
from .policy import FeedbackPolicy


class SimulationBlowupError(RuntimeError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class BetaTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class SdeConfig:
    """Time stepping and ensemble layout.

    ``x0`` is a point (scalar or length-``d`` sequence) or ``"uniform"``:
    each path draws its start uniformly on the inner half box from its own
    stream.  ``burn_in`` defaults to ``horizon / 2``.  ``box`` is the
    reflecting half-width used when no grid is attached (Langevin runs).
    """

    dt: float = 1e-2
    horizon: float = 20.0
    burn_in: float | None = None
    n_paths: int = 256
    seed: int = 0
    x0: object = "uniform"
    record_every: int = 1
    trace_every: int = 100
    box: float = 3.0
    chunk: int = 1024

    def __post_init__(self):
        if not 0 < self.dt <= 1e-2:
            raise ValueError("dt must lie in (0, 1e-2]")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.t0 < self.horizon:
            raise ValueError("burn-in must be shorter than the horizon")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def t0(self) -> float:
        return self.horizon / 2 if self.burn_in is None else self.burn_in

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def burn_steps(self) -> int:
        return int(round(self.t0 / self.dt))

    @property
    def effective_samples(self) -> int:
        return self.n_paths * ((self.n_steps - self.burn_steps) // self.record_every)


def path_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def path_streams(seed: int, n_paths: int) -> list[np.random.Generator]:
    return [path_stream(seed, i) for i in range(n_paths)]


@dataclass
class PathEnsemble:
    """Outcome of a simulation.

    ``samples`` has shape ``(n_paths, n_records, d)`` and holds post-burn-in
    states every ``record_every`` steps; ``best_f_trace`` has shape
    ``(n_paths, n_trace)`` with the running minimum of ``f`` sampled at
    ``trace_times``.
    """

    finals: np.ndarray
    samples: np.ndarray
    box: float
    trace_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    best_f_trace: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    g_range: tuple = (np.nan, np.nan)
    integral: np.ndarray | None = None
    edges: tuple | None = None
    counts: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.finals.shape[1]

    @property
    def best_f(self) -> np.ndarray:
        return self.best_f_trace[:, -1]


def _initial_states(config: SdeConfig, streams, dim: int, box: float) -> np.ndarray:
    if isinstance(config.x0, str):
        if config.x0 != "uniform":
            raise ValueError(f"unknown initial condition {config.x0!r}")
        half = box / 2.0
        return np.stack([s.uniform(-half, half, size=dim) for s in streams])
    x0 = np.broadcast_to(np.asarray(config.x0, dtype=float).ravel(), (dim,))
    return np.tile(x0, (len(streams), 1))


def _reflect(x: np.ndarray, L: float) -> np.ndarray:
    x = np.where(x > L, 2.0 * L - x, x)
    x = np.where(x < -L, -2.0 * L - x, x)
    return np.clip(x, -L, L)


class _Binner:
    """Streaming histogram on uniform edges."""

    def __init__(self, edges):
        self.edges = tuple(np.asarray(e, dtype=float) for e in edges)
        self.lo = np.array([e[0] for e in self.edges])
        self.width = np.array([e[1] - e[0] for e in self.edges])
        self.nb = tuple(len(e) - 1 for e in self.edges)
        for e in self.edges:
            if not np.allclose(np.diff(e), e[1] - e[0]):
                raise ValueError("streaming histograms need uniform bins")
        self.counts = np.zeros(int(np.prod(self.nb)), dtype=np.int64)

    def add(self, x: np.ndarray) -> None:
        idx = np.floor((x - self.lo) / self.width).astype(np.int64)
        idx = np.clip(idx, 0, np.array(self.nb) - 1)
        flat = np.ravel_multi_index(tuple(idx.T), self.nb)
        self.counts += np.bincount(flat, minlength=self.counts.size)


def euler_maruyama(landscape: Landscape, diffusion, config: SdeConfig, box: float,
                   g_bounds: tuple | None = None, integrand=None,
                   edges: tuple | None = None, keep_samples: bool = True) -> PathEnsemble:
    """Simulate ``dX = -grad f dt + g(X) dB`` with reflection at ``[-box, box]^d``.

    ``diffusion`` maps ``(N, d)`` states to ``(N,)`` scalar coefficients.
    ``g_bounds`` enforces ``lo <= g <= hi`` at every step.  ``integrand``
    (optional) maps ``(states, t)`` to ``(N,)`` and is left-Riemann
    integrated along each path; the result is stored on ``ens.integral``.
    With ``edges`` the post-burn-in states are also binned on the fly
    (``ens.counts``); ``keep_samples=False`` then drops the raw samples.
    """
    d = landscape.dim
    binner = _Binner(edges) if edges is not None else None
    N = config.n_paths
    streams = path_streams(config.seed, N)
    x = _initial_states(config, streams, d, box)
    dt, sdt = config.dt, np.sqrt(config.dt)
    n_steps, burn = config.n_steps, config.burn_steps
    best = landscape.f(x)
    samples, trace, trace_t = [], [], []
    integral = np.zeros(N)
    g_lo, g_hi = np.inf, -np.inf
    for start in range(0, n_steps, config.chunk):
        m = min(config.chunk, n_steps - start)
        noise = np.empty((N, m, d))
        for i, s in enumerate(streams):
            s.standard_normal(out=noise[i])
        for j in range(m):
            k = start + j
            g = np.asarray(diffusion(x), dtype=float)
            g_lo, g_hi = min(g_lo, float(g.min())), max(g_hi, float(g.max()))
            if g_bounds is not None and (g.min() < g_bounds[0] - 1e-12 or g.max() > g_bounds[1] + 1e-12):
                raise SimulationBlowupError(
                    f"diffusion coefficient left [{g_bounds[0]}, {g_bounds[1]}] at step {k}")
            if integrand is not None:
                integral += integrand(x, k * dt) * dt
            x = x - landscape.grad(x) * dt + (g * sdt)[:, None] * noise[:, j]
            x = _reflect(x, box)
            bad = ~np.all(np.isfinite(x), axis=1)
            if bad.any():
                raise SimulationBlowupError(
                    f"non-finite state on path {int(np.argmax(bad))} at step {k + 1}")
            step = k + 1
            best = np.minimum(best, landscape.f(x))
            if step > burn and (step - burn) % config.record_every == 0:
                if keep_samples:
                    samples.append(x.copy())
                if binner is not None:
                    binner.add(x)
            if step % config.trace_every == 0 or step == n_steps:
                trace.append(best.copy())
                trace_t.append(step * dt)
    ens = PathEnsemble(
        finals=x,
        samples=np.stack(samples, axis=1) if samples else np.empty((N, 0, d)),
        box=box,
        trace_times=np.asarray(trace_t),
        best_f_trace=np.stack(trace, axis=1),
        g_range=(g_lo, g_hi),
        integral=integral if integrand is not None else None,
        edges=binner.edges if binner is not None else None,
        counts=binner.counts.reshape(binner.nb) if binner is not None else None,
    )
    return ens


def simulate_exploratory(landscape: Landscape, policy: FeedbackPolicy,
                         config: SdeConfig, **kwargs) -> PathEnsemble:
    """Optimally controlled exploratory dynamics with ``g = g_lam`` from the policy.

    Extra keyword arguments go to :func:`euler_maruyama`.
    """
    a = policy.spec.a
    return euler_maruyama(landscape, policy.g_at, config, policy.grid.halfwidth,
                          g_bounds=(np.sqrt(2 * a), np.sqrt(2.0)), **kwargs)


def simulate_bangbang(landscape: Landscape, v_classical: ScalarField, config: SdeConfig,
                      a: float, **kwargs) -> PathEnsemble:
    """Bang-bang dynamics; the sign of the interpolated discrete Laplacian picks the temperature."""
    if landscape.dim >= 3:
        raise UnsupportedDimensionError(
            "bang-bang dynamics are only known to be well posed (unique in law) for d = 1, 2")
    grid = v_classical.grid
    lap = laplacian(v_classical.values, grid.h)
    lo, hi = np.sqrt(2.0 * a), np.sqrt(2.0)
    if grid.dim == 1:
        def diffusion(x):
            s = np.interp(x[:, 0], grid.axis, lap)
            return np.where(s >= 0, lo, hi)
    else:
        interp = RegularGridInterpolator([grid.axis] * grid.dim, lap)

        def diffusion(x):
            return np.where(interp(np.clip(x, -grid.halfwidth, grid.halfwidth)) >= 0, lo, hi)
    return euler_maruyama(landscape, diffusion, config, grid.halfwidth, g_bounds=(lo, hi), **kwargs)


def simulate_langevin(landscape: Landscape, beta: float, config: SdeConfig,
                      **kwargs) -> PathEnsemble:
    """Constant-temperature overdamped Langevin dynamics."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    g = np.sqrt(2.0 * beta)
    return euler_maruyama(landscape, lambda x: np.full(x.shape[0], g), config, config.box, **kwargs)


# ---------------------------------------------------------------------------
# histograms

@dataclass
class StationaryEstimate:
    """Bin probabilities over a tensor histogram on a box."""

    edges: tuple
    probs: np.ndarray
    n_samples: int = 0

    @property
    def dim(self) -> int:
        return len(self.edges)

    def centers(self) -> list[np.ndarray]:
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    def density(self) -> np.ndarray:
        vol = np.ones(self.probs.shape)
        for k, e in enumerate(self.edges):
            shape = [1] * self.dim
            shape[k] = -1
            vol = vol * np.diff(e).reshape(shape)
        return self.probs / vol

    def mass_outside_ball(self, center, radius: float) -> float:
        mesh = np.meshgrid(*self.centers(), indexing="ij")
        center = np.broadcast_to(np.asarray(center, dtype=float), (self.dim,))
        r = np.sqrt(sum((m - c) ** 2 for m, c in zip(mesh, center)))
        return float(self.probs[r > radius].sum())

    def to_csv(self, path) -> None:
        mesh = np.meshgrid(*self.centers(), indexing="ij")
        lines = [",".join([f"x_{k + 1}" for k in range(self.dim)] + ["probability", "density"])]
        dens = self.density().ravel()
        for i, p in enumerate(self.probs.ravel()):
            coords = [repr(float(m.ravel()[i])) for m in mesh]
            lines.append(",".join(coords + [repr(float(p)), repr(float(dens[i]))]))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def histogram_edges(box: float, dim: int, bin_width: float = 0.05) -> tuple:
    nbins = int(round(2.0 * box / bin_width))
    return tuple(np.linspace(-box, box, nbins + 1) for _ in range(dim))


def estimate_stationary(data, bin_width: float = 0.05, edges: tuple | None = None) -> StationaryEstimate:
    """Histogram of post-burn-in samples pooled across paths.

    ``data`` is a :class:`PathEnsemble` or an array of states ``(..., d)``.
    """
    if isinstance(data, PathEnsemble) and data.counts is not None and (
            edges is None or all(np.array_equal(a, b) for a, b in zip(edges, data.edges))):
        total = data.counts.sum()
        if total == 0:
            raise InsufficientDataError("no samples after burn-in")
        return StationaryEstimate(data.edges, data.counts / total, int(total))
    if isinstance(data, PathEnsemble):
        pts = data.samples.reshape(-1, data.dim)
        if edges is None:
            edges = histogram_edges(data.box, data.dim, bin_width)
    else:
        pts = np.asarray(data, dtype=float)
        pts = pts.reshape(-1, 1) if pts.ndim == 1 else pts.reshape(-1, pts.shape[-1])
        if edges is None:
            L = float(np.max(np.abs(pts))) if pts.size else 1.0
            edges = histogram_edges(max(L, bin_width), pts.shape[1], bin_width)
    if pts.shape[0] == 0:
        raise InsufficientDataError("no samples after burn-in")
    counts, _ = np.histogramdd(pts, bins=list(edges))
    return StationaryEstimate(tuple(edges), counts / counts.sum(), int(pts.shape[0]))


def gibbs_pdf(landscape: Landscape, beta: float, grid: Grid) -> np.ndarray:
    """``exp(-f/beta) / Z`` on grid nodes with ``Z`` by the trapezoid rule on the grid box."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    f = landscape.f(grid.points()).reshape(grid.shape)
    w = np.exp(-(f - f.min()) / beta)
    Z = w
    for _ in range(grid.dim):
        Z = np.trapezoid(Z, dx=grid.h, axis=0)
    if not np.isfinite(Z) or Z <= 0:
        raise BetaTooSmallError(f"Gibbs weights underflow at beta={beta}")
    return w / Z


def gibbs_density(landscape: Landscape, beta: float, edges: tuple,
                  resolution: int = 8) -> StationaryEstimate:
    """Gibbs measure ``exp(-f/beta)/Z`` binned on ``edges``.

    Each bin mass uses a ``resolution``-point midpoint rule per axis; the
    shift by ``min f`` keeps the weights in ``(0, 1]``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    fine_axes = []
    for e in edges:
        widths = np.diff(e)
        offs = (np.arange(resolution) + 0.5) / resolution
        fine_axes.append((e[:-1, None] + widths[:, None] * offs[None, :]).ravel())
    mesh = np.meshgrid(*fine_axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    f = landscape.f(pts)
    with np.errstate(under="ignore"):
        w = np.exp(-(f - f.min()) / beta)
    nb = [len(e) - 1 for e in edges]
    shape = []
    for n in nb:
        shape += [n, resolution]
    w = w.reshape(shape)
    w = w.sum(axis=tuple(range(1, 2 * len(nb), 2)))
    total = w.sum()
    if not np.isfinite(total) or total <= 0 or np.count_nonzero(w) == 0:
        raise BetaTooSmallError(f"Gibbs weights underflow at beta={beta}")
    return StationaryEstimate(tuple(edges), w / total, 0)


def tv_distance(p: StationaryEstimate, q: StationaryEstimate) -> float:
    if len(p.edges) != len(q.edges) or any(
            a.shape != b.shape or not np.allclose(a, b, rtol=0, atol=1e-12)
            for a, b in zip(p.edges, q.edges)):
        raise GridMismatchError("histograms have different bins")
    return float(0.5 * np.abs(p.probs - q.probs).sum())


@dataclass(frozen=True)
class GibbsFit:
    beta_star: float
    tv_star: float


def fit_gibbs(estimate: StationaryEstimate, landscape: Landscape, betas) -> GibbsFit:
    """Closest Gibbs measure in TV: grid search then golden section in ``log beta``."""
    betas = np.sort(np.asarray(betas, dtype=float))
    if betas.size == 0:
        raise ValueError("beta grid is empty")

    def tv(beta):
        try:
            return tv_distance(estimate, gibbs_density(landscape, beta, estimate.edges))
        except BetaTooSmallError:
            return 1.0

    values = np.array([tv(b) for b in betas])
    i = int(np.argmin(values))
    best_beta, best_tv = float(betas[i]), float(values[i])
    if 0 < i < len(betas) - 1:
        lo, mid, hi = np.log(betas[i - 1]), np.log(betas[i]), np.log(betas[i + 1])
        res = minimize_scalar(lambda s: tv(np.exp(np.clip(s, lo, hi))),
                              bracket=(lo, mid, hi), method="golden",
                              options={"xtol": 1e-4})
        if res.fun < best_tv:
            best_beta, best_tv = float(np.exp(np.clip(res.x, lo, hi))), float(res.fun)
    return GibbsFit(best_beta, best_tv)


# ---------------------------------------------------------------------------
# generator and Fokker-Planck diagnostics

def _grid_derivatives(landscape: Landscape, grid: Grid):
    pts = grid.points()
    grad = np.moveaxis(landscape.grad(pts).reshape(grid.shape + (grid.dim,)), -1, 0)
    lap_f = landscape.laplacian(pts).reshape(grid.shape)
    return grad, lap_f


def _zero_boundary(arr: np.ndarray) -> np.ndarray:
    out = np.zeros_like(arr)
    inner = (slice(1, -1),) * arr.ndim
    out[inner] = arr[inner]
    return out


def generator_apply(landscape: Landscape, g, psi: ScalarField) -> ScalarField:
    """``L psi = -grad f . grad psi + (g^2 / 2) lap psi`` by central differences."""
    grid = psi.grid
    grad_f, _ = _grid_derivatives(landscape, grid)
    g2 = np.broadcast_to(np.asarray(g, dtype=float) ** 2, grid.shape)
    dpsi = central_gradient(psi.values, grid.h)
    out = -np.sum(grad_f * dpsi, axis=0) + 0.5 * g2 * laplacian(psi.values, grid.h)
    return ScalarField(grid, _zero_boundary(out))


def adjoint_residual(landscape: Landscape, g, density: ScalarField) -> ScalarField:
    """``L* rho = sum_i d_i(d_i f rho) + (1/2) lap(g^2 rho)`` by central differences."""
    grid = density.grid
    grad_f, _ = _grid_derivatives(landscape, grid)
    g2 = np.broadcast_to(np.asarray(g, dtype=float) ** 2, grid.shape)
    flux = grad_f * density.values
    div = sum(central_gradient(flux[k], grid.h)[k] for k in range(grid.dim))
    out = div + 0.5 * laplacian(g2 * density.values, grid.h)
    return ScalarField(grid, _zero_boundary(out))


@dataclass(frozen=True)
class LyapunovReport:
    """Drift condition ``L V <= -M1 + M2 1_C`` with ``V = f - min f + 1``."""

    m1: float
    m2: float
    shell_radius: float
    passed: bool


def check_lyapunov(landscape: Landscape, g, grid: Grid, shell_radius: float = 2.0) -> LyapunovReport:
    """Evaluate ``L V = -|grad f|^2 + (g^2/2) lap f`` with exact derivatives on ``grid``.

    ``M1`` is minus the maximum over the shell ``|x| >= shell_radius``,
    ``M2`` the maximum over the compact core.
    """
    grad_f, lap_f = _grid_derivatives(landscape, grid)
    g2 = np.broadcast_to(np.asarray(g, dtype=float) ** 2, grid.shape)
    LV = -np.sum(grad_f ** 2, axis=0) + 0.5 * g2 * lap_f
    r = grid.radius()
    shell = r >= shell_radius
    if not shell.any() or shell.all():
        raise ValueError("shell radius must split the grid into a core and a shell")
    m1 = float(-LV[shell].max())
    m2 = float(LV[~shell].max())
    return LyapunovReport(m1=m1, m2=m2, shell_radius=shell_radius, passed=m1 > 0)
