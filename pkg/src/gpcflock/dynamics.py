"""Galerkin-projected Cucker-Smale system and its RK4 integration."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .polychaos import GpcBasis, variance_of_expansion

DIVERGENCE_BOUND = 1e12


class DivergenceError(RuntimeError):
    """State left the finite/bounded regime; carries the offending time."""

    def __init__(self, t: float, last_state: "GpcEnsemble | None" = None, reason: str = ""):
        self.t = t
        self.last_state = last_state
        super().__init__(f"divergence at t={t:g}" + (f": {reason}" if reason else ""))


def _agents(a) -> np.ndarray:
    # (N,) means one spatial dimension
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


@dataclass(frozen=True)
class GpcEnsemble:
    """Positions and velocities as gPC coefficients, arrays of shape (N, d, M+1)."""

    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @property
    def n_agents(self) -> int:
        return self.v.shape[0]

    @property
    def dim(self) -> int:
        return self.v.shape[1]

    @property
    def order(self) -> int:
        return self.v.shape[2] - 1

    @classmethod
    def deterministic(cls, x0, v0, order: int, t: float = 0.0) -> "GpcEnsemble":
        """Known initial data: only mode 0 is populated."""
        x0, v0 = _agents(x0), _agents(v0)
        if x0.shape != v0.shape:
            raise ValueError(f"position shape {x0.shape} != velocity shape {v0.shape}")
        x = np.zeros(x0.shape + (order + 1,))
        v = np.zeros(v0.shape + (order + 1,))
        x[..., 0] = x0
        v[..., 0] = v0
        return cls(x, v, t)

    def is_bounded(self, bound: float = DIVERGENCE_BOUND) -> bool:
        with np.errstate(invalid="ignore"):
            return bool(np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.x)) and np.max(np.abs(self.v), initial=0.0) <= bound)


@dataclass(frozen=True)
class InteractionKernel:
    """H(x, y) = (1 + |x - y|^2)^-gamma, or H = 1 for the uniform kind."""

    kind: str = "uniform"
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "cucker-smale"):
            raise ValueError(f"unknown interaction kernel {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform" or self.gamma == 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}


def interaction_weight(kernel: InteractionKernel, xi, xj) -> float:
    if kernel.is_uniform:
        return 1.0
    diff = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    return float((1.0 + np.dot(diff, diff)) ** (-kernel.gamma))


def interaction_matrix(kernel: InteractionKernel, positions: np.ndarray) -> np.ndarray | None:
    """Pairwise H at the given (N, d) positions; None for uniform interaction."""
    if kernel.is_uniform:
        return None
    diff = positions[:, None, :] - positions[None, :, :]
    return (1.0 + np.einsum("ijk,ijk->ij", diff, diff)) ** (-kernel.gamma)


def alignment(v: np.ndarray, H: np.ndarray | None, K: np.ndarray) -> np.ndarray:
    """(1/N) sum_j H_ij sum_m (v_jm - v_im) K[m, h] for every agent and dimension."""
    n = v.shape[0]
    if H is None:
        diff = v.mean(axis=0, keepdims=True) - v
    else:
        flat = v.reshape(n, -1)
        diff = ((H @ flat) - H.sum(axis=1)[:, None] * flat).reshape(v.shape) / n
    return diff @ K


def rhs(ens: GpcEnsemble, kernel: InteractionKernel, K: np.ndarray):
    """Time derivative (dx, dv) of the uncontrolled Galerkin system.

    H is evaluated at the mean positions (mode 0 of the position coefficients).
    """
    H = interaction_matrix(kernel, ens.x[:, :, 0])
    return ens.v, alignment(ens.v, H, K)


Derivative = Callable[[GpcEnsemble, np.ndarray], tuple]


def rk4_arrays(deriv, t: float, x: np.ndarray, v: np.ndarray, dt: float):
    """Classical RK4 on a (position, velocity) pair; ``deriv(t, x, v) -> (dx, dv)``."""
    dx1, dv1 = deriv(t, x, v)
    dx2, dv2 = deriv(t + 0.5 * dt, x + 0.5 * dt * dx1, v + 0.5 * dt * dv1)
    dx3, dv3 = deriv(t + 0.5 * dt, x + 0.5 * dt * dx2, v + 0.5 * dt * dv2)
    dx4, dv4 = deriv(t + dt, x + dt * dx3, v + dt * dv3)
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = x + dt / 6.0 * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4)
        v_new = v + dt / 6.0 * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
    return x_new, v_new


def rk4_step(ens: GpcEnsemble, deriv: Derivative, kernel_at: Callable[[float], np.ndarray], dt: float) -> GpcEnsemble:
    """RK4 for ``deriv(state, K(t))``; K is sampled at t, t+dt/2 and t+dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(kernel_at, np.ndarray):
        fixed = kernel_at
        kernel_at = lambda _t: fixed  # noqa: E731
    cache: dict[float, np.ndarray] = {}

    def f(t, x, v):
        if t not in cache:
            cache[t] = kernel_at(t)
        return deriv(GpcEnsemble(x, v, t), cache[t])

    x, v = rk4_arrays(f, ens.t, ens.x, ens.v, dt)
    out = GpcEnsemble(x, v, ens.t + dt)
    if not out.is_bounded():
        raise DivergenceError(ens.t + dt, ens, "velocity coefficients non-finite or above 1e12")
    return out


def step_rk4(ens: GpcEnsemble, kernel: InteractionKernel, kernel_at, dt: float) -> GpcEnsemble:
    """One uncontrolled RK4 step.

    ``kernel_at`` maps t to the kernel matrix (e.g. a ``KernelSchedule``); a
    plain array is taken as a time-independent kernel.
    """
    return rk4_step(ens, lambda s, K: rhs(s, kernel, K), kernel_at, dt)


def mean_velocity(ens: GpcEnsemble) -> np.ndarray:
    """Agent average of the velocity coefficients, shape (d, M+1)."""
    return ens.v.mean(axis=0)


def agent_variance(ens: GpcEnsemble, basis: GpcBasis) -> np.ndarray:
    """gPC variance of each agent's velocity, shape (N, d)."""
    return variance_of_expansion(ens.v, basis)
