"""Pointwise HJB operators for the temperature-control problem and the
general soft-max integral.

Residual convention: ``exploratory_operator_tc`` and ``classical_operator_tc``
return the left-hand side of ``-rho v + f - grad f . grad v + H(lap v) = 0``
with ``H = -lam ln int_a^1 exp(-u lap/lam) du`` (exploratory) or
``H = min(a lap, lap)`` (classical).  ``operator_gap`` is ``F_lam - F`` in the
``F = -residual`` sign convention, i.e. ``residual_cl - residual_expl``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class ProblemSpec:
    """Exploration weight ``lam``, discount ``rho`` and control set ``[a, 1]``."""

    lam: float
    rho: float = 1.0
    a: float = 0.5

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")

    def with_lam(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(lam, self.rho, self.a)


# ---------------------------------------------------------------------------
# truncated exponential family on [a, 1]

def _shifted_log_partition(z, a):
    """``ln int_a^1 exp(-z (u - u*)) du`` with ``u* = a`` for ``z >= 0`` and 1 otherwise.

    The shift makes the integrand at most 1, so no branch overflows.
    """
    z = np.asarray(z, dtype=float)
    t = 1.0 - a
    az = np.abs(z)
    small = az < SERIES_CUTOFF
    safe = np.where(small, 1.0, az)
    big = np.log(-np.expm1(-safe * t)) - np.log(safe)
    # ln(1-a) - z*mean + z^2 var/2 + z^4 k4/24, then undo the shift z*u*
    ustar = np.where(z >= 0, a, 1.0)
    series = (np.log(t) - z * (1.0 + a) / 2.0 + z * z * t * t / 24.0
              - z ** 4 * t ** 4 / 2880.0 + z * ustar)
    return np.where(small, series, big)


def log_partition_interval(z, a: float):
    """``ln int_a^1 exp(-z u) du``, stable for all finite ``z``."""
    z = np.asarray(z, dtype=float)
    ustar = np.where(z >= 0, a, 1.0)
    out = -z * ustar + _shifted_log_partition(z, a)
    return out if out.ndim else float(out)


def truncated_exp_mean(z, a: float):
    """Mean of the density proportional to ``exp(-z u)`` on ``[a, 1]``.

    Uses the reflection ``m(z) = 1 + a - m(-z)`` for negative ``z``.
    """
    z = np.asarray(z, dtype=float)
    t = 1.0 - a
    y = z * t
    small = np.abs(y) < 1e-2
    safe = np.where(small, 1.0, np.abs(y))
    # positive rate: a + t (1/y - 1/expm1(y))
    with np.errstate(over="ignore"):
        pos = a + t * (1.0 / safe - 1.0 / np.expm1(safe))
    big = np.where(z >= 0, pos, 1.0 + a - pos)
    y2 = y * y
    series = a + t * (0.5 - y / 12.0 + y * y2 / 720.0 - y * y2 * y2 / 30240.0
                      + y * y2 ** 3 / 1209600.0)
    out = np.clip(np.where(small, series, big), a, 1.0)
    return out if out.ndim else float(out)


def truncated_exp_entropy(z, a: float):
    """Differential entropy ``-int pi ln pi`` of the truncated exponential."""
    z = np.asarray(z, dtype=float)
    out = np.asarray(log_partition_interval(z, a)) + z * np.asarray(truncated_exp_mean(z, a))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# temperature-control operators

def _dot(grad_f, grad_v):
    return np.sum(np.asarray(grad_f, dtype=float) * np.asarray(grad_v, dtype=float), axis=-1)


def exploratory_hamiltonian(lap_v, spec: ProblemSpec):
    """``-lam ln int_a^1 exp(-u lap/lam) du``."""
    return -spec.lam * np.asarray(log_partition_interval(np.asarray(lap_v) / spec.lam, spec.a))


def classical_hamiltonian(lap_v, spec: ProblemSpec):
    """``inf_{beta in [a,1]} beta * lap`` (ties at zero resolve to ``beta = a``)."""
    lap_v = np.asarray(lap_v, dtype=float)
    return np.minimum(spec.a * lap_v, lap_v)


def exploratory_operator_tc(spec: ProblemSpec, v, f_val, grad_f, grad_v, lap_v):
    """Residual of the exploratory temperature-control HJB at a point."""
    out = (-spec.rho * np.asarray(v) + np.asarray(f_val) - _dot(grad_f, grad_v)
           + exploratory_hamiltonian(lap_v, spec))
    return out if np.ndim(out) else float(out)


def classical_operator_tc(spec: ProblemSpec, v, f_val, grad_f, grad_v, lap_v):
    """Residual of the classical (bang-bang) temperature-control HJB at a point."""
    out = (-spec.rho * np.asarray(v) + np.asarray(f_val) - _dot(grad_f, grad_v)
           + classical_hamiltonian(lap_v, spec))
    return out if np.ndim(out) else float(out)


def operator_gap(spec: ProblemSpec, lap_v):
    """``F_lam - F``; depends on ``lap_v`` only.  Always ``<= lam ln(1 - a) < 0``."""
    z = np.asarray(lap_v, dtype=float) / spec.lam
    out = spec.lam * _shifted_log_partition(z, spec.a)
    return out if out.ndim else float(out)


def gap_constant(a: float) -> float:
    return 1.0 + np.log(1.0 / (1.0 - a))


def gap_bound(spec: ProblemSpec, lap_v):
    """``C lam + lam ln(|lap|/lam) 1{|lap| > lam}`` with ``C = 1 + ln(1/(1-a))``."""
    lap_v = np.abs(np.asarray(lap_v, dtype=float))
    lam = spec.lam
    tail = np.where(lap_v > lam, lam * np.log(np.maximum(lap_v, lam) / lam), 0.0)
    out = gap_constant(spec.a) * lam + tail
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# general problems

class QuadratureConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneralProblem:
    """Control problem with reward ``h``, drift ``b`` and diffusion ``sigma``.

    ``h(x, u) -> float``, ``b(x, u) -> (d,)``, ``sigma(x, u) -> (d, d)``
    where ``u`` is an ``(l,)`` control.  ``direction`` is ``"maximize"``
    (soft-max, the default) or ``"minimize"`` (soft-min).
    """

    control_low: tuple
    control_high: tuple
    h: Callable
    b: Callable
    sigma: Callable
    rho: float = 1.0
    direction: str = "maximize"
    n_quad: int = 32
    ellipticity: tuple = (0.0, np.inf)

    @property
    def control_dim(self) -> int:
        return len(self.control_low)

    def check_ellipticity(self, probes_x, probes_u) -> None:
        lo, hi = self.ellipticity
        for x in probes_x:
            for u in probes_u:
                s = np.atleast_2d(self.sigma(x, u))
                eig = np.linalg.eigvalsh(s @ s.T)
                if eig.min() < lo - 1e-12 or eig.max() > hi + 1e-12:
                    raise ValueError(f"sigma sigma^T eigenvalues {eig} outside [{lo}, {hi}]")


def gauss_legendre_box(low, high, n: int):
    """Tensor Gauss-Legendre nodes ``(M, l)`` and weights ``(M,)`` on a box."""
    if n < 2:
        raise QuadratureConfigError("need at least 2 quadrature nodes per axis")
    x, w = np.polynomial.legendre.leggauss(n)
    axes, weights = [], []
    for lo, hi in zip(low, high):
        half = 0.5 * (hi - lo)
        axes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    nodes = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in np.meshgrid(*weights, indexing="ij")]), axis=0)
    return nodes, wts


def soft_sup(exponents, weights, lam: float) -> float:
    """``lam ln sum_i w_i exp(g_i / lam)`` via max-shifted log-sum-exp."""
    return float(lam * logsumexp(np.asarray(exponents) / lam, b=weights))


def softmax_integral_general(problem: GeneralProblem, lam: float, x, grad_v, hess_v) -> float:
    """``lam ln int_U exp((h + b.p + tr(sigma sigma^T X)/2) / lam) du`` by quadrature.

    For ``direction == "minimize"`` the sign is flipped inside and outside,
    giving the soft-min ``-lam ln int exp(-(...)/lam) du``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    nodes, wts = gauss_legendre_box(problem.control_low, problem.control_high, problem.n_quad)
    p = np.asarray(grad_v, dtype=float)
    X = np.atleast_2d(np.asarray(hess_v, dtype=float))
    g = np.empty(len(nodes))
    for i, u in enumerate(nodes):
        s = np.atleast_2d(problem.sigma(x, u))
        g[i] = problem.h(x, u) + np.dot(problem.b(x, u), p) + 0.5 * np.trace(s @ s.T @ X)
    if problem.direction == "minimize":
        return -soft_sup(-g, wts, lam)
    return soft_sup(g, wts, lam)


def hard_sup_general(problem: GeneralProblem, x, grad_v, hess_v) -> float:
    """Classical counterpart: sup (or inf) of the same exponent over the quadrature nodes."""
    nodes, _ = gauss_legendre_box(problem.control_low, problem.control_high, problem.n_quad)
    p = np.asarray(grad_v, dtype=float)
    X = np.atleast_2d(np.asarray(hess_v, dtype=float))
    g = []
    for u in nodes:
        s = np.atleast_2d(problem.sigma(x, u))
        g.append(problem.h(x, u) + np.dot(problem.b(x, u), p) + 0.5 * np.trace(s @ s.T @ X))
    return float(min(g) if problem.direction == "minimize" else max(g))


def exploratory_operator_general(problem: GeneralProblem, lam: float, x, v, grad_v, hess_v) -> float:
    """Residual ``-rho v + softmax_integral_general(...)``."""
    return -problem.rho * v + softmax_integral_general(problem, lam, x, grad_v, hess_v)


def classical_operator_general(problem: GeneralProblem, x, v, grad_v, hess_v) -> float:
    return -problem.rho * v + hard_sup_general(problem, x, grad_v, hess_v)
