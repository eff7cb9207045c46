"""Feedback objects built from a solved value field.

The exploratory optimum is the truncated exponential
``pi*(u; x) ~ exp(-z(x) u)`` on ``[a, 1]`` with ``z = lap v_lam / lam``; its
mean temperature gives the diffusion ``g_lam = sqrt(2 E[u])``.  The classical
optimum switches between ``sqrt(2a)`` and ``sqrt(2)`` on the sign of the
Laplacian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid, ScalarField, _index, laplacian, write_field_csv
from .operators import ProblemSpec, log_partition_interval, truncated_exp_mean


class InvalidPolicyInput(ValueError):
    pass


def _copy_boundary_from_interior(arr: np.ndarray) -> np.ndarray:
    out = arr.copy()
    for k in range(arr.ndim):
        first = [slice(None)] * arr.ndim
        src = [slice(None)] * arr.ndim
        first[k], src[k] = 0, 1
        out[tuple(first)] = out[tuple(src)]
        first[k], src[k] = -1, -2
        out[tuple(first)] = out[tuple(src)]
    return out


@dataclass(frozen=True)
class FeedbackPolicy:
    """Per-node rate ``z`` of the truncated-exponential temperature law."""

    grid: Grid
    z: np.ndarray
    spec: ProblemSpec

    def mean_field(self) -> np.ndarray:
        return np.asarray(truncated_exp_mean(self.z, self.spec.a))

    def g_field(self) -> np.ndarray:
        return np.sqrt(2.0 * self.mean_field())

    def z_at(self, x) -> np.ndarray:
        """Multilinear interpolation of ``z`` at points ``x`` of shape ``(N, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        L = self.grid.halfwidth
        x = np.clip(x, -L, L)
        if self.grid.dim == 1:
            return np.interp(x[:, 0], self.grid.axis, self.z)
        interp = RegularGridInterpolator([self.grid.axis] * self.grid.dim, self.z)
        return interp(x)

    def g_at(self, x) -> np.ndarray:
        """Closed-form ``g_lam`` at the interpolated ``z``; stays inside ``[sqrt(2a), sqrt(2)]``."""
        return np.sqrt(2.0 * np.asarray(truncated_exp_mean(self.z_at(x), self.spec.a)))

    def entropy_at(self, x) -> np.ndarray:
        z = self.z_at(x)
        return np.asarray(log_partition_interval(z, self.spec.a)) + z * truncated_exp_mean(z, self.spec.a)

    def to_csv(self, path) -> None:
        write_field_csv(path, self.grid, {"g_lambda": self.g_field()})


def uniform_policy(grid: Grid, spec: ProblemSpec) -> FeedbackPolicy:
    """The ``z = 0`` policy: temperature uniform on ``[a, 1]`` everywhere."""
    return FeedbackPolicy(grid, np.zeros(grid.shape), spec)


def build_policy(v: ScalarField, spec: ProblemSpec) -> FeedbackPolicy:
    if not np.all(np.isfinite(v.values)):
        raise InvalidPolicyInput("value field contains non-finite entries")
    z = laplacian(v.values, v.grid.h) / spec.lam
    return FeedbackPolicy(v.grid, _copy_boundary_from_interior(z), spec)


def policy_density(policy: FeedbackPolicy, node, u) -> np.ndarray | float:
    """``exp(-z u) / int_a^1 exp(-z s) ds`` at one node."""
    a = policy.spec.a
    u = np.asarray(u, dtype=float)
    if np.any((u < a) | (u > 1.0)):
        raise ValueError(f"u must lie in [{a}, 1]")
    z = float(policy.z[_index(node, policy.grid)])
    out = np.exp(-z * u - log_partition_interval(z, a))
    return out if out.ndim else float(out)


def g_lambda(policy: FeedbackPolicy, node) -> float:
    z = float(policy.z[_index(node, policy.grid)])
    return float(np.sqrt(2.0 * truncated_exp_mean(z, policy.spec.a)))


def sample_truncated_exp(z, a: float, uniforms) -> np.ndarray:
    """Inverse-CDF transform of ``uniforms`` into draws from ``exp(-z u)`` on ``[a, 1]``."""
    z = np.asarray(z, dtype=float)
    U = np.asarray(uniforms, dtype=float)
    t = 1.0 - a
    tiny = np.abs(z) < 1e-12
    zs = np.where(tiny, 1.0, z)
    with np.errstate(over="ignore", invalid="ignore"):
        pos = a - np.log1p(U * np.expm1(-zs * t)) / zs
        neg = 1.0 + np.log1p((1.0 - U) * np.expm1(zs * t)) / -zs
    out = np.where(z > 0, pos, neg)
    out = np.where(tiny, a + U * t, out)
    return np.clip(out, a, 1.0)


def sample_policy(policy: FeedbackPolicy, node, rng: np.random.Generator, size=None):
    z = float(policy.z[_index(node, policy.grid)])
    out = sample_truncated_exp(z, policy.spec.a, rng.random(size))
    return out if np.ndim(out) else float(out)


def bangbang_field(v_classical: ScalarField, a: float) -> np.ndarray:
    lap = laplacian(v_classical.values, v_classical.grid.h)
    return np.where(lap >= 0, np.sqrt(2.0 * a), np.sqrt(2.0))


def bangbang_diffusion(v_classical: ScalarField, node, a: float) -> float:
    """``sqrt(2a)`` where the discrete Laplacian is ``>= 0``, ``sqrt(2)`` otherwise."""
    return float(bangbang_field(v_classical, a)[_index(node, v_classical.grid)])
