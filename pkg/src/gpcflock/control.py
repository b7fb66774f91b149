"""Selective model-predictive feedback control of the Galerkin system.

Two orderings are provided.  ``controlled_rhs`` applies the feedback directly
to the gPC coefficients (project first, then control).  ``physical_control_rhs``
applies the feedback to reconstructed realizations at the quadrature nodes and
projects the result (control first, then project).  For Q = 1 and for the
linear selective weight the two coincide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import DivergenceError, GpcEnsemble, InteractionKernel, rhs
from .polychaos import GpcBasis, project_values, reconstruct_at_nodes

WEIGHT_KINDS = ("nonselective", "linear", "custom")


@dataclass(frozen=True)
class SelectiveWeight:
    kind: str = "nonselective"
    bound: float = math.inf
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"selective weight must be one of {WEIGHT_KINDS}, got {self.kind!r}")
        if not self.bound > 0:
            raise ValueError("weight bound L must be positive")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom weight needs a callable f(values, v_d)")


def weight_eval(w: SelectiveWeight, values, vd) -> np.ndarray:
    """Per-agent weights Q; agents run along axis 0, all other axes are independent.

    The linear weight is (v_d - v_i) / rms_j(v_d - v_j); when every agent sits
    at the target the rms vanishes and Q is defined as 0.
    """
    values = np.asarray(values, dtype=float)
    if w.kind == "nonselective":
        q = np.ones_like(values)
    elif w.kind == "linear":
        gap = np.asarray(vd, dtype=float) - values
        rms = np.sqrt(np.mean(gap**2, axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(rms > 0.0, gap / np.where(rms > 0.0, rms, 1.0), 0.0)
    else:
        q = np.asarray(w.func(values, vd), dtype=float)
    return np.clip(q, -w.bound, w.bound)


@dataclass(frozen=True)
class ControlConfig:
    """Target velocity, penalty and selective weight.

    Give ``kappa`` directly, or ``nu`` with the scaling nu = kappa * dt.  An
    infinite kappa (``ControlConfig.off()``) means no control at all.
    """

    vd: tuple = (0.0,)
    kappa: float | None = math.inf
    nu: float | None = None
    weight: SelectiveWeight = SelectiveWeight()
    box: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "vd", tuple(float(c) for c in np.atleast_1d(self.vd)))
        if self.kappa is None and self.nu is None:
            raise ValueError("control needs kappa or nu")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.nu is not None and not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.box is not None:
            lo, hi = self.box
            if not lo <= hi:
                raise ValueError("control box needs lower <= upper")

    @classmethod
    def off(cls, d: int = 1) -> "ControlConfig":
        return cls(vd=(0.0,) * d, kappa=math.inf)

    @property
    def active(self) -> bool:
        return self.kappa is None or math.isfinite(self.kappa)

    def kappa_for(self, dt: float | None = None) -> float:
        if self.kappa is not None:
            return self.kappa
        if dt is None:
            raise ValueError("control given by nu needs the time step to recover kappa")
        return self.nu / dt

    def nu_for(self, dt: float) -> float:
        return self.nu if self.nu is not None else self.kappa * dt

    def target_modes(self, d: int, order: int) -> np.ndarray:
        """Target coefficients: v_d in mode 0, zero above; shape (d, M+1)."""
        vd = np.broadcast_to(np.asarray(self.vd), (d,))
        out = np.zeros((d, order + 1))
        out[:, 0] = vd
        return out


def mpc_feedback_mode(v, vd, q, kappa: float) -> np.ndarray:
    """(1/(kappa N)) sum_j (vd - v_j) Q_j Q_i, agents along axis 0."""
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    drive = np.sum((np.asarray(vd) - v) * q, axis=0)
    return drive * q / (kappa * n)


def controlled_rhs(ens: GpcEnsemble, kernel: InteractionKernel, K: np.ndarray, config: ControlConfig, dt: float | None = None):
    """Galerkin alignment plus mode-wise feedback with Q evaluated on mode coefficients."""
    dx, dv = rhs(ens, kernel, K)
    if not config.active:
        return dx, dv
    kappa = config.kappa_for(dt)
    target = config.target_modes(ens.dim, ens.order)
    q = weight_eval(config.weight, ens.v, target)
    return dx, dv + mpc_feedback_mode(ens.v, target, q, kappa)


def physical_control_rhs(
    ens: GpcEnsemble,
    kernel: InteractionKernel,
    K: np.ndarray,
    config: ControlConfig,
    basis: GpcBasis,
    dt: float | None = None,
):
    """Galerkin alignment plus the projection of the pathwise feedback."""
    need = 2 * basis.order + 2
    if len(basis.quadrature) < need:
        raise ValueError(f"pathwise control needs >= {need} quadrature nodes, basis has {len(basis.quadrature)}")
    dx, dv = rhs(ens, kernel, K)
    if not config.active:
        return dx, dv
    kappa = config.kappa_for(dt)
    paths = reconstruct_at_nodes(ens.v, basis)  # (N, d, Q)
    vd = np.broadcast_to(np.asarray(config.vd), (ens.dim,))[:, None]
    q = weight_eval(config.weight, paths, vd)
    force = mpc_feedback_mode(paths, vd, q, kappa)
    return dx, dv + project_values(force, basis)


def mpc_discrete_step(ens: GpcEnsemble, kernel: InteractionKernel, K: np.ndarray, config: ControlConfig, dt: float):
    """One explicit step of the receding-horizon feedback system.

    The control for mode h depends on the updated state, which in turn depends
    on the control.  With Q frozen at time n the coupling is rank one, so
    ``sum_i Q_i v_i^{n+1}`` is solved for in closed form.  Returns the new
    ensemble and the applied controls, shape (d, M+1).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    _, drift = rhs(ens, kernel, K)
    predicted = ens.v + dt * drift
    n = ens.n_agents
    u = np.zeros(ens.v.shape[1:])
    q = np.zeros_like(ens.v)
    if config.active:
        nu = config.nu_for(dt)
        target = config.target_modes(ens.dim, ens.order)
        q = weight_eval(config.weight, ens.v, target)
        q2 = np.sum(q * q, axis=0)
        residual = np.sum(q * predicted, axis=0) - target * np.sum(q, axis=0)
        u = -(dt / (nu * n)) * residual / (1.0 + dt * dt * q2 / (nu * n))
        if config.box is not None:
            u = np.clip(u, config.box[0], config.box[1])
    v = predicted + dt * u * q
    out = GpcEnsemble(ens.x + dt * ens.v, v, ens.t + dt)
    if not out.is_bounded():
        raise DivergenceError(ens.t + dt, ens, "velocity coefficients non-finite or above 1e12")
    return out, u
