"""Stationary exploratory and classical HJB solvers on a truncated grid.

The discretisation is monotone: upwind differences for ``grad f . grad v``,
central second differences for the Laplacian, mirrored (Neumann) ghost
nodes on the boundary.  Two iterations are available:

``"policy"`` (default)
    Howard policy iteration.  Given the current iterate, freeze the
    temperature coefficient (and, for the exploratory equation, the entropy
    of the Gibbs policy) and solve the resulting linear system exactly.
``"relaxation"``
    Explicit pseudo-time marching ``v <- v + dtau * R(v)`` of the full
    nonlinear residual; slow but free of any linear solve.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, ScalarField, laplacian, upwind_advection
from .landscape import Landscape
from .operators import (ProblemSpec, classical_hamiltonian, exploratory_hamiltonian,
                        log_partition_interval, truncated_exp_mean)

KINDS = ("exploratory", "classical")


class SolverError(RuntimeError):
    """Base class for solver failures; carries the residual history."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class DivergenceError(SolverError):
    pass


class NumericalBlowupError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 10_000
    dtau: float | str = "auto"
    damping: float = 1.0
    method: str = "policy"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.method not in ("policy", "relaxation"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SolveReport:
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    seconds: float = 0.0
    converged: bool = True
    kind: str = "exploratory"
    method: str = "policy"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# discrete operator pieces

@dataclass
class _Problem:
    """Landscape data sampled on the grid, shared by every iteration."""

    grid: Grid
    f: np.ndarray
    drift: np.ndarray          # grad f, shape (d,) + grid.shape
    rows: np.ndarray
    lo: list
    hi: list

    @classmethod
    def build(cls, landscape: Landscape, grid: Grid) -> "_Problem":
        if landscape.dim != grid.dim:
            raise ValueError("landscape and grid dimensions differ")
        pts = grid.points()
        f = landscape.f(pts).reshape(grid.shape)
        drift = np.moveaxis(landscape.grad(pts).reshape(grid.shape + (grid.dim,)), -1, 0)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(drift))):
            raise NumericalBlowupError("landscape is not finite on the grid")
        idx = np.indices(grid.shape)
        rows = np.ravel_multi_index(tuple(idx), grid.shape).ravel()
        lo, hi = [], []
        n = grid.n
        for k in range(grid.dim):
            down = idx.copy()
            up = idx.copy()
            down[k] = np.abs(idx[k] - 1)                  # mirror at 0
            up[k] = (n - 1) - np.abs(n - 2 - idx[k])      # mirror at n-1
            lo.append(np.ravel_multi_index(tuple(down), grid.shape).ravel())
            hi.append(np.ravel_multi_index(tuple(up), grid.shape).ravel())
        return cls(grid, f, drift, rows, lo, hi)

    def matrix(self, coeff: np.ndarray, rho: float) -> sp.csr_matrix:
        """``-rho v - grad f . D_up v + coeff * Lap_h v`` as a sparse matrix."""
        h = self.grid.h
        d = self.grid.dim
        m = coeff.ravel()
        diag = np.full(self.grid.size, -rho) - 2.0 * d * m / (h * h)
        data, cols, rows = [], [], []
        for k in range(d):
            c = self.drift[k].ravel()
            diag = diag - np.abs(c) / h
            data += [m / (h * h) + np.maximum(c, 0.0) / h, m / (h * h) - np.minimum(c, 0.0) / h]
            cols += [self.lo[k], self.hi[k]]
            rows += [self.rows, self.rows]
        data.append(diag)
        cols.append(self.rows)
        rows.append(self.rows)
        size = self.grid.size
        A = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(size, size))
        return A.tocsr()

    def residual(self, v: np.ndarray, spec: ProblemSpec, kind: str) -> np.ndarray:
        h = self.grid.h
        lap = laplacian(v, h)
        H = exploratory_hamiltonian(lap, spec) if kind == "exploratory" else classical_hamiltonian(lap, spec)
        return -spec.rho * v + self.f - upwind_advection(v, h, self.drift) + H


def _interior_sup(r: np.ndarray) -> float:
    inner = r[(slice(1, -1),) * r.ndim]
    return float(np.max(np.abs(inner)))


def _policy_step(prob: _Problem, v: np.ndarray, spec: ProblemSpec, kind: str) -> np.ndarray:
    lap = laplacian(v, prob.grid.h)
    if kind == "exploratory":
        z = lap / spec.lam
        coeff = np.asarray(truncated_exp_mean(z, spec.a))
        # lam * (entropy of the Gibbs policy) enters the cost with a minus sign
        source = -spec.lam * (np.asarray(log_partition_interval(z, spec.a)) + z * coeff)
    else:
        coeff = np.where(lap >= 0, spec.a, 1.0)
        source = np.zeros_like(v)
    A = prob.matrix(coeff, spec.rho)
    rhs = -(prob.f + source).ravel()
    return spla.spsolve(A.tocsc(), rhs).reshape(v.shape)


def auto_dtau(prob: _Problem, rho: float) -> float:
    h = prob.grid.h
    d = prob.grid.dim
    adv = sum(np.max(np.abs(prob.drift[k])) for k in range(d))
    return 0.9 / (rho + adv / h + 2.0 * d / (h * h))


def _solve(landscape: Landscape, grid: Grid, spec: ProblemSpec, config: SolverConfig,
           kind: str) -> tuple[ScalarField, SolveReport]:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    start = time.perf_counter()
    prob = _Problem.build(landscape, grid)
    v = np.full(grid.shape, prob.f.min() / spec.rho)
    history = []
    theta = config.damping

    if config.method == "relaxation":
        dtau = auto_dtau(prob, spec.rho) if config.dtau == "auto" else float(config.dtau)
        res = np.inf
        for it in range(1, config.max_iter + 1):
            r = prob.residual(v, spec, kind)
            res = _interior_sup(r)
            if it % 100 == 1:
                history.append(res)
            if not np.isfinite(res):
                raise NumericalBlowupError(f"non-finite residual at iteration {it}", history)
            if res <= config.tol:
                break
            v = v + dtau * r
        else:
            raise DivergenceError(f"no convergence after {config.max_iter} iterations "
                                  f"(residual {res:.3e})", history)
        iterations = it
    else:
        for it in range(1, config.max_iter + 1):
            res = _interior_sup(prob.residual(v, spec, kind))
            history.append(res)
            if not np.isfinite(res):
                raise NumericalBlowupError(f"non-finite residual at iteration {it}", history)
            if res <= config.tol:
                break
            v_new = _policy_step(prob, v, spec, kind)
            if not np.all(np.isfinite(v_new)):
                raise NumericalBlowupError(f"non-finite iterate at iteration {it}", history)
            # stalled at round-off level: accept once the update itself is negligible
            if np.max(np.abs(v_new - v)) == 0.0:
                break
            v = v + theta * (v_new - v)
        else:
            raise DivergenceError(f"no convergence after {config.max_iter} iterations "
                                  f"(residual {res:.3e})", history)
        iterations = it
    res = _interior_sup(prob.residual(v, spec, kind))
    if res > config.tol:
        raise DivergenceError(f"stalled with residual {res:.3e} > tol {config.tol:.1e}", history)
    report = SolveReport(iterations=iterations, residual=res, history=history,
                         seconds=time.perf_counter() - start, converged=True,
                         kind=kind, method=config.method)
    return ScalarField(grid, v), report


def solve_exploratory_hjb(landscape: Landscape, grid: Grid, spec: ProblemSpec,
                          config: SolverConfig | None = None) -> tuple[ScalarField, SolveReport]:
    """Solve ``-rho v + f - grad f . grad v - lam ln int_a^1 e^{-u lap v/lam} du = 0``."""
    return _solve(landscape, grid, spec, config or SolverConfig(), "exploratory")


def solve_classical_hjb(landscape: Landscape, grid: Grid, spec: ProblemSpec,
                        config: SolverConfig | None = None) -> tuple[ScalarField, SolveReport]:
    """Solve ``-rho v + f - grad f . grad v + min(a lap v, lap v) = 0``."""
    return _solve(landscape, grid, spec, config or SolverConfig(), "classical")


def solve_hjb(landscape, grid, spec, config=None, kind="exploratory"):
    return _solve(landscape, grid, spec, config or SolverConfig(), kind)


def residual_field(v: ScalarField, landscape: Landscape, spec: ProblemSpec,
                   kind: str = "exploratory") -> ScalarField:
    """Pointwise discrete residual on interior nodes, zero on the boundary."""
    prob = _Problem.build(landscape, v.grid)
    r = prob.residual(v.values, spec, kind)
    out = np.zeros_like(r)
    inner = (slice(1, -1),) * r.ndim
    out[inner] = r[inner]
    return ScalarField(v.grid, out)
