"""Closed-form solutions, divergence thresholds and a Monte Carlo reference.

The closed forms cover the uniform-interaction case H = 1, where each agent
relaxes toward the conserved mean velocity with the random rate:
``v_i = V + (v_i(0) - V) exp(-int_0^t K)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlConfig, weight_eval
from .dynamics import DIVERGENCE_BOUND, InteractionKernel, rk4_arrays
from .rate import (
    CustomRate,
    Deterministic,
    ExponentialLaw,
    RateModel,
    SeparableNormal,
    TimeVaryingNormal,
    UniformLaw,
    sample_rate,
)


@dataclass(frozen=True)
class UniformCaseSetup:
    """Initial velocities (N,) or (N, d) with the rate law, plus optional control."""

    v0: np.ndarray
    rate: RateModel
    vd: float | None = None
    kappa: float | None = None
    mean: np.ndarray = field(init=False)

    def __post_init__(self):
        v0 = np.asarray(self.v0, dtype=float)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "mean", v0.mean(axis=0))

    def deviation(self, i: int):
        return self.v0[i] - self.mean


def _rate_integral(rate: RateModel, theta: float, t: float) -> float:
    if isinstance(rate, Deterministic):
        return rate.k * t
    if isinstance(rate, SeparableNormal):
        return theta * rate.time_factor.integral(t)
    if isinstance(rate, TimeVaryingNormal):
        # theta is the standardized variable here
        return rate.mu * t + theta * rate.sigma_integral(t)
    if isinstance(rate, (ExponentialLaw, UniformLaw)):
        return theta * t
    raise ValueError(f"no closed-form rate integral for {type(rate).__name__}")


def exact_path_velocity(setup: UniformCaseSetup, i: int, theta, t: float):
    """Velocity of agent i for one realization.

    ``theta`` is the rate realization itself, except for the time-varying
    normal law where it is the standardized N(0, 1) variable.
    """
    return setup.mean + setup.deviation(i) * np.exp(-_rate_integral(setup.rate, theta, t))


def expected_velocity_normal(setup: UniformCaseSetup, i: int, t: float):
    r = setup.rate
    s = r.time_factor.integral(t)
    return setup.mean + setup.deviation(i) * np.exp(-r.mu * s + 0.5 * r.sigma**2 * s * s)


def expected_velocity_exponential(setup: UniformCaseSetup, i: int, t: float):
    lam = setup.rate.lam
    return setup.mean + setup.deviation(i) * lam / (t + lam)


def _uniform_mgf(a: float, b: float, t: float) -> float:
    """E[exp(-theta t)] for theta ~ U(a, b), with the t -> 0 limit patched."""
    if t == 0.0:
        return 1.0
    width = (b - a) * t
    return math.exp(-a * t) * (-math.expm1(-width)) / width


def expected_velocity_uniformlaw(setup: UniformCaseSetup, i: int, t: float):
    r = setup.rate
    return setup.mean + setup.deviation(i) * _uniform_mgf(r.a, r.b, t)


def expected_velocity_timevar(setup: UniformCaseSetup, i: int, t: float):
    r = setup.rate
    c = r.sigma_integral(t)
    return setup.mean + setup.deviation(i) * np.exp(-r.mu * t + 0.5 * c * c)


def expected_velocity(setup: UniformCaseSetup, i: int, t: float):
    """Dispatch to the closed form for the setup's law."""
    r = setup.rate
    if isinstance(r, Deterministic):
        return setup.mean + setup.deviation(i) * math.exp(-r.k * t)
    if isinstance(r, SeparableNormal):
        return expected_velocity_normal(setup, i, t)
    if isinstance(r, TimeVaryingNormal):
        return expected_velocity_timevar(setup, i, t)
    if isinstance(r, ExponentialLaw):
        return expected_velocity_exponential(setup, i, t)
    if isinstance(r, UniformLaw):
        return expected_velocity_uniformlaw(setup, i, t)
    raise ValueError(f"no closed-form oracle for {type(r).__name__}")


def _gap(big: float, small: float) -> float:
    # exp(big) - exp(small) without cancellation when big ~ small
    return math.exp(small) * math.expm1(big - small)


def exact_variance_normal(setup: UniformCaseSetup, i: int, t: float):
    r = setup.rate
    s = r.time_factor.integral(t) if isinstance(r, SeparableNormal) else t
    a = -2.0 * r.mu * s
    return setup.deviation(i) ** 2 * _gap(a + 2.0 * r.sigma**2 * s * s, a + r.sigma**2 * s * s)


def exact_variance(setup: UniformCaseSetup, i: int, t: float):
    """Variance over the random input of agent i's velocity."""
    r = setup.rate
    dev2 = setup.deviation(i) ** 2
    if isinstance(r, Deterministic):
        return 0.0 * dev2
    if isinstance(r, SeparableNormal):
        return exact_variance_normal(setup, i, t)
    if isinstance(r, TimeVaryingNormal):
        c = r.sigma_integral(t)
        a = -2.0 * r.mu * t
        return dev2 * _gap(a + 2.0 * c * c, a + c * c)
    if isinstance(r, ExponentialLaw):
        lam = r.lam
        return dev2 * (lam / (2.0 * t + lam) - (lam / (t + lam)) ** 2)
    if isinstance(r, UniformLaw):
        return dev2 * (_uniform_mgf(r.a, r.b, 2.0 * t) - _uniform_mgf(r.a, r.b, t) ** 2)
    raise ValueError(f"no closed-form variance for {type(r).__name__}")


def exact_controlled_velocity(setup: UniformCaseSetup, i: int, theta, t: float):
    """Pathwise solution of dv/dt = theta (V - v) + (v_d - v) / kappa."""
    kappa = setup.kappa
    if kappa is None or math.isinf(kappa):
        return exact_path_velocity(setup, i, theta, t)
    denom = kappa * np.asarray(theta) + 1.0
    if np.any(denom == 0.0):
        raise ZeroDivisionError("singular realization: kappa * theta + 1 = 0")
    rest = (kappa * setup.mean * theta + setup.vd) / denom
    return rest + (setup.v0[i] - rest) * np.exp(-(theta + 1.0 / kappa) * t)


def controlled_leading_exponent(mu: float, sigma: float, kappa: float, t: float) -> float:
    """log E[exp(-(theta + 1/kappa) t)] for theta ~ N(mu, sigma^2)."""
    return -(mu + 1.0 / kappa) * t + 0.5 * sigma**2 * t * t


# thresholds -------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdReport:
    """Divergence predicate of the expected velocity at a horizon.

    ``exponent`` is the log growth factor of |E v_i - V| at the horizon and
    ``exponent_rate`` its time derivative.  ``critical_time`` is where the
    exponent changes sign (the deviation exceeds its initial value);
    ``onset_time`` is where it starts increasing.  Either is None when not
    available in closed form.
    """

    kind: str
    horizon: float
    exponent: float
    exponent_rate: float
    critical_time: float | None
    onset_time: float | None
    verdict: str


def _verdict(exponent: float, rate: float) -> str:
    return "diverges" if exponent > 0.0 and rate > 0.0 else "contracts"


def threshold_report(rate: RateModel, horizon: float, control: ControlConfig | None = None) -> ThresholdReport:
    T = float(horizon)
    if control is not None and control.active:
        if not isinstance(rate, SeparableNormal) or not rate.time_factor.constant:
            raise ValueError("controlled threshold needs a normal rate with h = 1")
        drift = rate.mu + 1.0 / control.kappa_for()
        s2 = rate.sigma**2
        g = controlled_leading_exponent(rate.mu, rate.sigma, control.kappa_for(), T)
        g_rate = -drift + s2 * T
        crit = 2.0 * drift / s2 if s2 > 0 else None
        onset = drift / s2 if s2 > 0 else None
        return ThresholdReport("controlled", T, g, g_rate, crit, onset, _verdict(g, g_rate))
    if isinstance(rate, SeparableNormal):
        tf = rate.time_factor
        s = tf.integral(T)
        s2 = rate.sigma**2
        g = -rate.mu * s + 0.5 * s2 * s * s
        g_rate = tf(T) * (-rate.mu + s2 * s)
        crit = onset = None
        if s2 > 0:
            crit = _invert_integral(tf, 2.0 * rate.mu / s2)
            onset = _invert_integral(tf, rate.mu / s2)
        return ThresholdReport("normal-static", T, g, g_rate, crit, onset, _verdict(g, g_rate))
    if isinstance(rate, TimeVaryingNormal):
        a = rate.alpha
        c = rate.sigma_integral(T)
        g = -rate.mu * T + 0.5 * c * c
        g_rate = -rate.mu + c * T ** (-a)
        crit = None
        if a != 0.5 and rate.mu > 0:
            crit = (2.0 * rate.mu * (1.0 - a) ** 2) ** (1.0 / (1.0 - 2.0 * a))
        return ThresholdReport("normal-timevar", T, g, g_rate, crit, None, _verdict(g, g_rate))
    raise ValueError(f"no threshold analysis for {type(rate).__name__}")


def _invert_integral(tf, level: float) -> float | None:
    """Smallest t with int_0^t h = level, when h is constant or exponential."""
    if level <= 0:
        return 0.0
    if tf.kind == "constant":
        return level
    if tf.kind == "exp":
        x = tf.rate * level
        return -math.log1p(-x) / tf.rate if x < 1.0 else None
    return None


# Monte Carlo --------------------------------------------------------------


@dataclass
class MonteCarloResult:
    times: np.ndarray
    mean: np.ndarray  # (T, N, d)
    variance: np.ndarray  # (T, N, d), sample variance over realizations
    stderr: np.ndarray  # (T, N, d)
    diverged: np.ndarray  # (S,) bool, realizations that left the bounded regime
    samples: int


def draw_standardized(rate: RateModel, samples: int, seed: int) -> np.ndarray:
    """Standardized variates for ``sample_rate``; realization s always gets draw s."""
    rng = np.random.default_rng(seed)
    if isinstance(rate, (SeparableNormal, TimeVaryingNormal)):
        return rng.standard_normal(samples)
    if isinstance(rate, UniformLaw):
        return 2.0 * rng.random(samples) - 1.0
    if isinstance(rate, ExponentialLaw):
        return 1.0 - rng.random(samples)
    if isinstance(rate, CustomRate):
        raise ValueError("custom rates carry no sampling law")
    return np.zeros(samples)


def mc_reference(
    x0,
    v0,
    rate: RateModel,
    samples: int,
    dt: float,
    T: float,
    seed: int = 0,
    kernel: InteractionKernel = InteractionKernel(),
    control: ControlConfig | None = None,
    stride: int = 1,
    chunk: int = 2048,
) -> MonteCarloResult:
    """Sample the rate, integrate every realization with RK4, return statistics.

    Realizations run along the last array axis, (N, d, S).  Results do not
    depend on ``chunk`` because all variates are drawn up front.
    """
    if samples < 1:
        raise ValueError("Monte Carlo needs at least one sample")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 1:
        x0, v0 = x0.reshape(-1, 1), v0.reshape(-1, 1)
    xi = draw_standardized(rate, samples, seed)
    steps = int(round(T / dt))
    saved = list(range(0, steps + 1, stride))
    if saved[-1] != steps:
        saved.append(steps)
    times = np.array([k * dt for k in saved])
    mean = np.zeros((len(saved),) + v0.shape)
    m2 = np.zeros_like(mean)
    seen = 0
    diverged = np.zeros(samples, dtype=bool)
    use_control = control is not None and control.active

    for start in range(0, samples, chunk):
        part = xi[start : start + chunk]
        S = len(part)
        x = np.repeat(x0[..., None], S, axis=-1)
        v = np.repeat(v0[..., None], S, axis=-1)

        def deriv(t, x, v):
            k = sample_rate(rate, part, t)
            if kernel.is_uniform:
                dv = (v.mean(axis=0, keepdims=True) - v) * k
            else:
                diff = x[:, None] - x[None, :]  # (N, N, d, S)
                H = (1.0 + np.einsum("ijks,ijks->ijs", diff, diff)) ** (-kernel.gamma)
                n = v.shape[0]
                pulled = np.einsum("ijs,jks->iks", H, v) - H.sum(axis=1)[:, None, :] * v
                dv = pulled * k / n
            if use_control:
                vd = np.broadcast_to(np.asarray(control.vd), (v.shape[1],))[:, None]
                q = weight_eval(control.weight, v, vd)
                dv = dv + np.sum((vd - v) * q, axis=0) * q / (control.kappa_for(dt) * v.shape[0])
            return v, dv

        bad = np.zeros(S, dtype=bool)
        slot = 0
        for step in range(steps + 1):
            if step == saved[slot]:
                # merge chunk statistics (Chan et al.) to avoid sum-of-squares cancellation
                with np.errstate(invalid="ignore", over="ignore"):
                    # shifted mean: exact when all realizations coincide
                    m_c = v[..., 0] + (v - v[..., :1]).mean(axis=-1)
                    m2_c = ((v - m_c[..., None]) ** 2).sum(axis=-1)
                    delta = m_c - mean[slot]
                    total = seen + S
                    mean[slot] = mean[slot] + delta * S / total
                    m2[slot] = m2[slot] + m2_c + delta**2 * seen * S / total
                slot += 1
            if step == steps:
                break
            x, v = rk4_arrays(deriv, step * dt, x, v, dt)
            with np.errstate(invalid="ignore"):
                bad |= ~np.all(np.isfinite(v) & (np.abs(v) <= DIVERGENCE_BOUND), axis=(0, 1))
        diverged[start : start + S] = bad
        seen += S

    with np.errstate(invalid="ignore", over="ignore"):
        var = m2 / max(samples - 1, 1)
        stderr = np.sqrt(var / samples)
    return MonteCarloResult(times, mean, var, stderr, diverged, samples)
