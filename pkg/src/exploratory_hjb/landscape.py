"""Objective functions with exact derivatives and the built-in test corpus.

Every landscape is vectorised: ``f`` maps an ``(N, d)`` array of points to
``(N,)`` values, ``grad`` to ``(N, d)`` and ``hess`` to ``(N, d, d)``.
Single points of shape ``(d,)`` are accepted and promoted.
"""
from __future__ import annotations

import itertools
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class InvalidLandscapeError(ValueError):
    """Raised when a landscape produces non-finite values."""


class UnknownLandscapeError(KeyError):
    """Raised for a name that is not in the built-in catalog."""


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, dim) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points with {dim} coordinates, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Landscape:
    """A C^2 objective ``f`` on R^d together with its gradient and Hessian.

    Parameters
    ----------
    name : str
        Identifier, stable across runs (used in config files).
    dim : int
        State dimension ``d``.
    f, grad, hess : callable
        Vectorised evaluators, see module docstring.
    minimizers : tuple of tuples, optional
        Known global minimisers; the first one is used as the reference
        point for concentration checks.
    """

    name: str
    dim: int
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    grad: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    hess: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    minimizers: tuple = ()

    def value(self, x) -> np.ndarray:
        return self.f(_as_points(x, self.dim))

    def gradient(self, x) -> np.ndarray:
        return self.grad(_as_points(x, self.dim))

    def hessian(self, x) -> np.ndarray:
        return self.hess(_as_points(x, self.dim))

    def laplacian(self, x) -> np.ndarray:
        return np.trace(self.hessian(x), axis1=-2, axis2=-1)

    @property
    def global_minimizer(self) -> np.ndarray:
        if not self.minimizers:
            raise ValueError(f"landscape {self.name!r} has no recorded minimiser")
        return np.asarray(self.minimizers[0], dtype=float)


# ---------------------------------------------------------------------------
# catalog

def _zero(dim: int) -> Landscape:
    return Landscape(
        name="zero",
        dim=dim,
        f=lambda x: np.zeros(x.shape[0]),
        grad=lambda x: np.zeros_like(x),
        hess=lambda x: np.zeros((x.shape[0], dim, dim)),
        minimizers=((0.0,) * dim,),
    )


def _constant(c: float, dim: int) -> Landscape:
    return Landscape(
        name=f"constant({c:g})",
        dim=dim,
        f=lambda x: np.full(x.shape[0], float(c)),
        grad=lambda x: np.zeros_like(x),
        hess=lambda x: np.zeros((x.shape[0], dim, dim)),
        minimizers=((0.0,) * dim,),
    )


def _quadratic(dim: int) -> Landscape:
    return Landscape(
        name="quadratic",
        dim=dim,
        f=lambda x: 0.5 * np.sum(x * x, axis=1),
        grad=lambda x: x.copy(),
        hess=lambda x: np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)).copy(),
        minimizers=((0.0,) * dim,),
    )


def _double_well_1d() -> Landscape:
    # (x^2 - 1)^2, wells at +-1, barrier f(0) = 1
    def f(x):
        s = x[:, 0]
        return (s * s - 1.0) ** 2

    def grad(x):
        s = x[:, 0]
        return (4.0 * s * (s * s - 1.0))[:, None]

    def hess(x):
        s = x[:, 0]
        return (12.0 * s * s - 4.0)[:, None, None]

    return Landscape("double_well_1d", 1, f, grad, hess, minimizers=((1.0,), (-1.0,)))


def _double_well_2d() -> Landscape:
    # (x1^2 - 1)^2 + x2^2 / 2
    def f(x):
        s, t = x[:, 0], x[:, 1]
        return (s * s - 1.0) ** 2 + 0.5 * t * t

    def grad(x):
        s, t = x[:, 0], x[:, 1]
        return np.stack([4.0 * s * (s * s - 1.0), t], axis=1)

    def hess(x):
        s = x[:, 0]
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = 12.0 * s * s - 4.0
        out[:, 1, 1] = 1.0
        return out

    return Landscape("double_well_2d", 2, f, grad, hess, minimizers=((1.0, 0.0), (-1.0, 0.0)))


def _saturated_double_well() -> Landscape:
    # (x^2 - 1)^2 / (1 + x^2)^{3/2}: same wells as the quartic, grows like |x|,
    # so |f'| -> 1 and f'' -> 0 at infinity.
    def parts(s):
        g = s * s - 1.0
        w = 1.0 + s * s
        q = w ** -1.5
        dq = -3.0 * s * w ** -2.5
        d2q = -3.0 * w ** -2.5 + 15.0 * s * s * w ** -3.5
        return g, q, dq, d2q

    def f(x):
        s = x[:, 0]
        g, q, _, _ = parts(s)
        return g * g * q

    def grad(x):
        s = x[:, 0]
        g, q, dq, _ = parts(s)
        return (4.0 * s * g * q + g * g * dq)[:, None]

    def hess(x):
        s = x[:, 0]
        g, q, dq, d2q = parts(s)
        val = 8.0 * s * s * q + 4.0 * g * q + 8.0 * s * g * dq + g * g * d2q
        return val[:, None, None]

    return Landscape("saturated_double_well", 1, f, grad, hess, minimizers=((1.0,), (-1.0,)))


CATALOG = ("zero", "constant", "quadratic", "double_well_1d", "double_well_2d",
           "saturated_double_well")

_UNSATURATED = {"double_well_1d", "double_well_2d", "quadratic"}


def builtin_landscape(name: str, *, dim: int = 1, c: float | None = None,
                      warn: bool = False) -> Landscape:
    """Look up a landscape from the built-in catalog.

    ``name`` may carry its parameter inline, e.g. ``"constant(2.5)"``.
    ``dim`` applies to the dimension-agnostic entries (zero, constant,
    quadratic).  With ``warn=True`` the landscapes whose gradient is not
    globally bounded emit a warning.
    """
    match = re.fullmatch(r"\s*constant\(\s*([-+0-9.eE]+)\s*\)\s*", name)
    if match:
        name, c = "constant", float(match.group(1))
    name = name.strip()
    if name == "zero":
        land = _zero(dim)
    elif name == "constant":
        land = _constant(0.0 if c is None else c, dim)
    elif name == "quadratic":
        land = _quadratic(dim)
    elif name == "double_well_1d":
        land = _double_well_1d()
    elif name == "double_well_2d":
        land = _double_well_2d()
    elif name == "saturated_double_well":
        land = _saturated_double_well()
    else:
        raise UnknownLandscapeError(
            f"unknown landscape {name!r}; valid names: {', '.join(CATALOG)}")
    if warn and name in _UNSATURATED:
        warnings.warn(f"{name}: gradient is unbounded on R^d; results hold on the "
                      "truncated domain only", stacklevel=2)
    return land


def with_gaussian_bumps(base: Landscape, centers, heights, widths) -> Landscape:
    """Return ``base + sum_k h_k exp(-|x - c_k|^2 / (2 w_k^2))`` with exact derivatives."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    heights = np.asarray(heights, dtype=float).ravel()
    widths = np.asarray(widths, dtype=float).ravel()
    dim = base.dim

    def bumps(x):
        diff = x[:, None, :] - centers[None, :, :]          # (N, K, d)
        r2 = np.sum(diff * diff, axis=2)                    # (N, K)
        e = heights * np.exp(-r2 / (2.0 * widths ** 2))    # (N, K)
        return diff, e

    def f(x):
        _, e = bumps(x)
        return base.f(x) + e.sum(axis=1)

    def grad(x):
        diff, e = bumps(x)
        return base.grad(x) - np.einsum("nk,nkd->nd", e / widths ** 2, diff)

    def hess(x):
        diff, e = bumps(x)
        w2 = widths ** 2
        outer = np.einsum("nk,nki,nkj->nij", e / w2 ** 2, diff, diff)
        iso = np.einsum("nk,ij->nij", e / w2, np.eye(dim))
        return base.hess(x) + outer - iso

    return Landscape(f"{base.name}+bumps", dim, f, grad, hess)


# ---------------------------------------------------------------------------
# assumption checks

SHELL_LADDER = (1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of scanning a landscape for the growth/coercivity conditions."""

    passed: bool
    grad_bound: float
    hess_growth_ok: bool
    chi: float
    radius: float
    scan_set: str
    chi_by_radius: dict = field(default_factory=dict)


def scan_points(dim: int, halfwidth: float, resolution: int) -> np.ndarray:
    axis = np.linspace(-halfwidth, halfwidth, resolution)
    return np.array(list(itertools.product(axis, repeat=dim)), dtype=float)


def check_assumption_41(landscape: Landscape, box_halfwidth: float,
                        resolution: int) -> AssumptionReport:
    """Scan ``[-L, L]^d`` for a bounded gradient, linearly growing Hessian and
    a positive coercivity margin ``|grad f|^2 - d |hess f|_max`` outside a ball.

    The radius is the smallest entry of ``SHELL_LADDER`` (strictly inside the
    box) for which the scanned minimum over ``|x| >= R`` is positive.
    """
    if box_halfwidth <= 0:
        raise ValueError("box_halfwidth must be positive")
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    d = landscape.dim
    pts = scan_points(d, box_halfwidth, resolution)
    g = landscape.grad(pts)
    H = landscape.hess(pts)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))
            and np.all(np.isfinite(landscape.f(pts)))):
        raise InvalidLandscapeError(f"{landscape.name}: non-finite derivative on scan grid")

    gnorm = np.linalg.norm(g, axis=1)
    hmax = np.max(np.abs(H.reshape(len(pts), -1)), axis=1)
    hnorm = np.linalg.norm(H, ord=2, axis=(1, 2)) if d > 1 else np.abs(H[:, 0, 0])
    radius_pts = np.linalg.norm(pts, axis=1)
    grad_bound = float(gnorm.max())
    hess_growth_ok = bool(np.all(hnorm <= grad_bound * (1.0 + radius_pts) + 1e-12))

    margin = gnorm ** 2 - d * hmax
    chi_by_radius = {}
    chi, radius = 0.0, 0.0
    for R in SHELL_LADDER:
        mask = radius_pts >= R
        if R >= box_halfwidth or not mask.any():
            continue
        value = float(margin[mask].min())
        chi_by_radius[R] = value
        if value > 0 and radius == 0.0:
            chi, radius = value, R
    passed = radius > 0 and hess_growth_ok
    return AssumptionReport(
        passed=passed,
        grad_bound=grad_bound,
        hess_growth_ok=hess_growth_ok,
        chi=chi,
        radius=radius,
        scan_set=f"{resolution}^{d} uniform grid on [-{box_halfwidth:g}, {box_halfwidth:g}]^{d}",
        chi_by_radius=chi_by_radius,
    )
