"""Random interaction rates K(theta, t) and their Galerkin kernel matrices."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, ClassVar, Union

import numpy as np
from scipy.integrate import quad

from .polychaos import HERMITE, LEGENDRE, GpcBasis, TripleTensor, project_values


class UnsupportedCombination(ValueError):
    """The rate law has no Galerkin representation in the requested basis."""


class EvaluationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TimeFactor:
    """Nonnegative time modulation ``h(t)`` of a separable rate.

    ``constant`` is h = 1, ``exp`` is h(t) = exp(-rate * t); ``custom`` wraps
    an arbitrary callable (library use only, not serializable).
    """

    kind: str = "constant"
    rate: float = 1.0
    func: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("constant", "exp", "custom"):
            raise ValueError(f"unknown time factor {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom time factor needs a callable")

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return 1.0
        if self.kind == "exp":
            return math.exp(-self.rate * t)
        return float(self.func(t))

    def integral(self, t: float) -> float:
        """``int_0^t h(s) ds``."""
        if self.kind == "constant":
            return float(t)
        if self.kind == "exp":
            return -math.expm1(-self.rate * t) / self.rate
        value, _ = quad(self.func, 0.0, t, limit=200)
        return value

    @property
    def constant(self) -> bool:
        return self.kind == "constant"


@dataclass(frozen=True)
class Deterministic:
    kind: ClassVar[str] = "deterministic"
    k: float = 1.0


@dataclass(frozen=True)
class SeparableNormal:
    """K = theta * h(t) with theta ~ N(mu, sigma^2)."""

    kind: ClassVar[str] = "normal"
    mu: float = 0.0
    sigma: float = 1.0
    time_factor: TimeFactor = TimeFactor()

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class TimeVaryingNormal:
    """K(t) = mu + sigma(t) xi, xi ~ N(0,1), with sigma(t) = t^-alpha.

    sigma is singular at t = 0; it is evaluated at ``max(t, t_eps)``.
    """

    kind: ClassVar[str] = "normal-timevar"
    mu: float = 2.0
    alpha: float = 0.5
    t_eps: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")

    def sigma(self, t: float) -> float:
        s = max(t, self.t_eps or 0.0)
        if s <= 0.0:
            if self.alpha == 0.0:
                return 1.0
            raise EvaluationError("sigma(t) = t^-alpha is singular at t = 0; set t_eps")
        return s ** (-self.alpha)

    def sigma_integral(self, t: float) -> float:
        return t ** (1.0 - self.alpha) / (1.0 - self.alpha)


@dataclass(frozen=True)
class ExponentialLaw:
    kind: ClassVar[str] = "exponential"
    lam: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class UniformLaw:
    kind: ClassVar[str] = "uniform"
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("uniform law needs b > a")


@dataclass(frozen=True)
class CustomRate:
    """Arbitrary K(xi, t) in the standardized variable of ``family``."""

    kind: ClassVar[str] = "custom"
    func: Callable = field(compare=False)
    family: str = HERMITE
    time_dependent: bool = True


RateModel = Union[Deterministic, SeparableNormal, TimeVaryingNormal, ExponentialLaw, UniformLaw, CustomRate]

_KINDS = {cls.kind: cls for cls in (Deterministic, SeparableNormal, TimeVaryingNormal, ExponentialLaw, UniformLaw)}


def rate_from_dict(data: dict) -> RateModel:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"rate.kind must be one of {sorted(_KINDS)}, got {kind!r}")
    if kind == "normal" and "time_factor" in data:
        tf = data["time_factor"]
        data["time_factor"] = TimeFactor(**tf) if isinstance(tf, dict) else TimeFactor(kind=tf)
    try:
        return _KINDS[kind](**data)
    except TypeError as exc:
        raise ValueError(f"bad fields for rate {kind!r}: {exc}") from None


def rate_to_dict(model: RateModel) -> dict:
    if isinstance(model, CustomRate):
        raise ValueError("custom rates are not serializable")
    out = {"kind": model.kind}
    out.update(asdict(model))
    if isinstance(model, SeparableNormal):
        out["time_factor"] = {"kind": model.time_factor.kind, "rate": model.time_factor.rate}
        if model.time_factor.kind == "custom":
            raise ValueError("custom time factors are not serializable")
    return out


def native_family(model: RateModel) -> str | None:
    """Askey-optimal family for the law, or None when any family works."""
    if isinstance(model, Deterministic):
        return None
    if isinstance(model, (SeparableNormal, TimeVaryingNormal)):
        return HERMITE
    if isinstance(model, UniformLaw):
        return LEGENDRE
    if isinstance(model, CustomRate):
        return model.family
    return "laguerre"


def check_compatible(model: RateModel, basis: GpcBasis) -> None:
    fam = native_family(model)
    if fam is None or fam == basis.family:
        return
    if isinstance(model, ExponentialLaw):
        raise UnsupportedCombination(
            "the exponential law needs a Laguerre basis, which is not implemented; "
            "use the closed-form or Monte Carlo oracles instead"
        )
    raise UnsupportedCombination(f"{type(model).__name__} requires a {fam} basis, got {basis.family}")


def is_time_dependent(model: RateModel) -> bool:
    if isinstance(model, SeparableNormal):
        return not model.time_factor.constant
    if isinstance(model, TimeVaryingNormal):
        return True
    if isinstance(model, CustomRate):
        return model.time_dependent
    return False


def sample_rate(model: RateModel, xi, t: float = 0.0):
    """K for the realization with standardized variable ``xi``.

    Normal laws use theta = mu + sigma xi; the uniform law on [a, b] uses the
    Legendre variable xi in [-1, 1].  For the exponential law ``xi`` is the
    uniform variate u in (0, 1] and theta = -ln(u) / lam.
    """
    xi = np.asarray(xi, dtype=float)
    if isinstance(model, Deterministic):
        out = np.full_like(xi, model.k)
    elif isinstance(model, SeparableNormal):
        out = (model.mu + model.sigma * xi) * model.time_factor(t)
    elif isinstance(model, TimeVaryingNormal):
        out = model.mu + model.sigma(t) * xi
    elif isinstance(model, UniformLaw):
        out = model.a + (model.b - model.a) * (xi + 1.0) / 2.0
    elif isinstance(model, ExponentialLaw):
        out = -np.log(xi) / model.lam
    else:
        out = np.asarray(model.func(xi, t), dtype=float)
    return out if out.ndim else float(out)


def mean_rate(model: RateModel, t: float = 0.0) -> float:
    if isinstance(model, Deterministic):
        return model.k
    if isinstance(model, SeparableNormal):
        return model.mu * model.time_factor(t)
    if isinstance(model, TimeVaryingNormal):
        return model.mu
    if isinstance(model, UniformLaw):
        return 0.5 * (model.a + model.b)
    if isinstance(model, ExponentialLaw):
        return 1.0 / model.lam
    raise ValueError("no closed-form mean for custom rates")


def _rate_at_nodes(model: RateModel, basis: GpcBasis, t: float) -> np.ndarray:
    values = np.broadcast_to(sample_rate(model, basis.quadrature.nodes, t), basis.quadrature.nodes.shape)
    if not np.all(np.isfinite(values)):
        raise EvaluationError(f"rate is not finite at a quadrature node (t={t})")
    return np.asarray(values, dtype=float)


# orthonormal components below this fraction of the largest one are round-off;
# rescaling to normalized coefficients multiplies them by up to sqrt(M!)
CHOP = 64 * np.finfo(float).eps


def _chop(values: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(values), initial=0.0)
    return np.where(np.abs(values) > CHOP * scale, values, 0.0)


def kernel_expanded(model: RateModel, basis: GpcBasis, tensor: TripleTensor, t: float = 0.0) -> np.ndarray:
    """``K[m, h] = sum_l K_l e[l, m, h] / ||Phi_h||^2`` from the expanded rate."""
    check_compatible(model, basis)
    if isinstance(model, Deterministic):
        return model.k * np.eye(basis.size)
    root = np.sqrt(basis.norms)
    k_l = _chop(project_values(_rate_at_nodes(model, basis, t), basis) * root) / root
    return np.einsum("l,lmh->mh", k_l, tensor.e) / basis.norms[None, :]


def kernel_direct(model: RateModel, basis: GpcBasis, t: float = 0.0) -> np.ndarray:
    """``K[m, h] = E[K Phi_m Phi_h] / ||Phi_h||^2`` by direct quadrature."""
    check_compatible(model, basis)
    values = _rate_at_nodes(model, basis, t)
    phi = basis.ortho_at_nodes
    ortho = _chop((phi * (basis.quadrature.weights * values)) @ phi.T)
    root = np.sqrt(basis.norms)
    return ortho * root[:, None] / root[None, :]


class KernelSchedule:
    """Callable ``t -> K(t)`` that avoids rebuilding constant parts.

    Separable rates cache the theta-only matrix and scale by h(t); the
    time-varying normal rate is affine in sigma(t) and caches both parts.
    """

    def __init__(self, model: RateModel, basis: GpcBasis, tensor: TripleTensor | None = None, route: str = "expanded"):
        if route not in ("expanded", "direct"):
            raise ValueError(f"unknown kernel route {route!r}")
        check_compatible(model, basis)
        self.model = model
        self.basis = basis
        self.route = route
        self.tensor = tensor
        if route == "expanded" and tensor is None:
            from .polychaos import triple_tensor

            self.tensor = triple_tensor(basis)
        self._base = None
        self._slope = None
        if isinstance(model, (Deterministic, SeparableNormal)):
            base_model = model
            if isinstance(model, SeparableNormal):
                base_model = SeparableNormal(model.mu, model.sigma)
            self._base = self._build(base_model, 0.0)
        elif isinstance(model, TimeVaryingNormal):
            self._base = model.mu * np.eye(basis.size)
            self._slope = self._build(SeparableNormal(0.0, 1.0), 0.0)
        elif not is_time_dependent(model):
            self._base = self._build(model, 0.0)

    def _build(self, model, t):
        if self.route == "expanded":
            return kernel_expanded(model, self.basis, self.tensor, t)
        return kernel_direct(model, self.basis, t)

    def __call__(self, t: float) -> np.ndarray:
        m = self.model
        if isinstance(m, SeparableNormal):
            return self._base * m.time_factor(t)
        if isinstance(m, TimeVaryingNormal):
            return self._base + m.sigma(t) * self._slope
        if self._base is not None:
            return self._base
        return self._build(m, t)
