"""Scenario runs, error metrics, convergence studies and Monte Carlo comparison."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ScenarioConfig, initial_state
from .control import controlled_rhs, mpc_discrete_step, physical_control_rhs, weight_eval
from .dynamics import DivergenceError, GpcEnsemble, rhs, rk4_step
from .oracles import UniformCaseSetup, exact_variance, expected_velocity, mc_reference
from .polychaos import make_basis, variance_of_expansion
from .rate import KernelSchedule

log = logging.getLogger(__name__)

# growth of the largest mode-0 deviation from the ensemble mean that counts as divergence
GROWTH_FACTOR = 10.0
# agents whose reference value is this small are left out of relative errors
REL_GUARD = 1e-14


@dataclass
class RunRecord:
    """Saved time series of one scenario run.

    Shapes: ``vbar``, ``variance`` and ``xbar`` are (S, N, d); ``Vhat`` and
    ``u`` are (S, d, M+1); ``diverged`` and ``drift`` are (S,).  ``u`` is None
    for uncontrolled runs, ``drift`` (max change of the mean-velocity modes
    since t = 0) is None for controlled runs.
    """

    config: dict
    N: int
    d: int
    M: int
    times: np.ndarray
    vbar: np.ndarray
    variance: np.ndarray
    xbar: np.ndarray
    Vhat: np.ndarray
    diverged: np.ndarray
    u: np.ndarray | None = None
    drift: np.ndarray | None = None
    aborted: bool = False
    abort_time: float | None = None

    @classmethod
    def empty(cls, config: ScenarioConfig, controlled: bool | None = None) -> "RunRecord":
        N, d, M = config.N, config.d, config.M
        controlled = config.controlled if controlled is None else controlled
        return cls(
            config.to_dict(), N, d, M,
            np.zeros(0), np.zeros((0, N, d)), np.zeros((0, N, d)), np.zeros((0, N, d)),
            np.zeros((0, d, M + 1)), np.zeros(0, dtype=bool),
            np.zeros((0, d, M + 1)) if controlled else None,
            None if controlled else np.zeros(0),
        )

    @property
    def final_diverged(self) -> bool:
        return bool(self.diverged[-1]) if len(self.diverged) else False

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunRecord):
            return NotImplemented
        scalars = ("config", "N", "d", "M", "aborted", "abort_time")
        if any(getattr(self, k) != getattr(other, k) for k in scalars):
            return False
        for k in ("times", "vbar", "variance", "xbar", "Vhat", "diverged", "u", "drift"):
            a, b = getattr(self, k), getattr(other, k)
            if (a is None) != (b is None):
                return False
            if a is not None and not (a.shape == b.shape and np.array_equal(a, b, equal_nan=True)):
                return False
        return True


def _mode_control(ens: GpcEnsemble, config: ScenarioConfig) -> np.ndarray:
    # scalar amplitude u_h in the feedback term u_h Q(v_ih)
    c = config.control
    target = c.target_modes(ens.dim, ens.order)
    q = weight_eval(c.weight, ens.v, target)
    return np.sum((target - ens.v) * q, axis=0) / (c.kappa_for(config.dt) * ens.n_agents)


def _spread(v0: np.ndarray) -> float:
    return float(np.max(np.abs(v0 - v0.mean(axis=0)), initial=0.0))


def run(config: ScenarioConfig, x0=None, v0=None) -> RunRecord:
    """Integrate the (controlled) Galerkin system of a scenario.

    Divergence of the state aborts the run; the partial record is returned
    with ``aborted`` set and the divergence flag raised.
    """
    if x0 is None or v0 is None:
        x0, v0 = initial_state(config)
    basis = make_basis(config.basis_family, config.M)
    rate = config.resolved_rate()
    try:
        kernel_at = KernelSchedule(rate, basis)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    kernel = config.kernel
    control = config.control if config.controlled else None
    dt = config.dt

    if control is None:
        def deriv(s, K):
            return rhs(s, kernel, K)
    elif config.ordering == "gpc-first":
        def deriv(s, K):
            return controlled_rhs(s, kernel, K, control, dt)
    else:
        def deriv(s, K):
            return physical_control_rhs(s, kernel, K, control, basis, dt)

    ens = GpcEnsemble.deterministic(x0, v0, config.M)
    V0 = ens.v.mean(axis=0)
    spread0 = _spread(ens.v[:, :, 0])
    rows = {k: [] for k in ("t", "vbar", "var", "xbar", "V", "u", "drift", "flag")}
    flagged = False

    def save(state: GpcEnsemble, u):
        nonlocal flagged
        V = state.v.mean(axis=0)
        if spread0 > 0 and _spread(state.v[:, :, 0]) > GROWTH_FACTOR * spread0:
            flagged = True
        rows["t"].append(state.t)
        rows["vbar"].append(state.v[:, :, 0].copy())
        rows["var"].append(variance_of_expansion(state.v, basis))
        rows["xbar"].append(state.x[:, :, 0].copy())
        rows["V"].append(V)
        rows["u"].append(u)
        rows["drift"].append(float(np.max(np.abs(V - V0))))
        rows["flag"].append(flagged)

    def control_now(state):
        return _mode_control(state, config) if control is not None else None

    save(ens, control_now(ens))
    aborted, abort_time = False, None
    stride = config.output.stride
    for step in range(1, config.steps + 1):
        t = (step - 1) * dt
        try:
            if config.integrator == "rk4":
                ens = rk4_step(GpcEnsemble(ens.x, ens.v, t), deriv, kernel_at, dt)
                u = control_now(ens)
            else:
                ens, u = mpc_discrete_step(GpcEnsemble(ens.x, ens.v, t), kernel, kernel_at(t), config.control, dt)
                u = u if control is not None else None
        except DivergenceError as exc:
            log.warning("run %s aborted: %s", config.name, exc)
            aborted, abort_time = True, exc.t
            flagged = True
            if rows["flag"]:
                rows["flag"][-1] = True
            break
        ens = GpcEnsemble(ens.x, ens.v, step * dt)
        if step % stride == 0 or step == config.steps:
            save(ens, u)

    controlled = control is not None
    return RunRecord(
        config=config.to_dict(),
        N=config.N,
        d=config.d,
        M=config.M,
        times=np.array(rows["t"]),
        vbar=np.array(rows["vbar"]),
        variance=np.array(rows["var"]),
        xbar=np.array(rows["xbar"]),
        Vhat=np.array(rows["V"]),
        diverged=np.array(rows["flag"], dtype=bool),
        u=np.array(rows["u"]) if controlled else None,
        drift=None if controlled else np.array(rows["drift"]),
        aborted=aborted,
        abort_time=abort_time,
    )


# oracles and errors -----------------------------------------------------------


class OracleUnavailable(ValueError):
    pass


def oracle_series(config: ScenarioConfig, times, v0=None) -> dict:
    """Closed-form expected velocity and variance per agent at ``times``."""
    if not config.kernel.is_uniform:
        raise OracleUnavailable("closed forms exist only for uniform interaction (H = 1)")
    if config.controlled:
        raise OracleUnavailable("closed-form expectations exist only for uncontrolled runs")
    if v0 is None:
        _, v0 = initial_state(config)
    setup = UniformCaseSetup(v0, config.rate)
    times = np.asarray(times, dtype=float)
    try:
        mean = np.array([[expected_velocity(setup, i, t) for i in range(config.N)] for t in times])
        var = np.array([[exact_variance(setup, i, t) for i in range(config.N)] for t in times])
    except ValueError as exc:
        raise OracleUnavailable(str(exc)) from None
    shape = (len(times), config.N, config.d)
    return {"times": times, "mean": mean.reshape(shape), "variance": var.reshape(shape)}


@dataclass
class ErrorSeries:
    times: np.ndarray
    mean_error: np.ndarray
    variance_error: np.ndarray
    excluded_mean: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    excluded_variance: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def time_average(self) -> tuple[float, float]:
        """Average over saved times t > 0 (errors at t = 0 are zero or undefined)."""
        keep = self.times > 0
        return float(np.nanmean(self.mean_error[keep])), float(np.nanmean(self.variance_error[keep]))


def _relative_l1(exact: np.ndarray, approx: np.ndarray):
    flat_e = exact.reshape(len(exact), -1)
    flat_a = approx.reshape(len(approx), -1)
    ok = np.abs(flat_e) >= REL_GUARD
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(ok, np.abs((flat_e - flat_a) / np.where(ok, flat_e, 1.0)), 0.0)
    counts = ok.sum(axis=1)
    err = np.where(counts > 0, rel.sum(axis=1) / np.maximum(counts, 1), np.nan)
    return err, flat_e.shape[1] - counts


def error_metrics(record: RunRecord, oracle: dict) -> ErrorSeries:
    """Relative L1 errors of expected velocity and variance, averaged over agents."""
    if oracle is None:
        raise OracleUnavailable("no oracle series supplied")
    n = len(record.times)
    if not np.allclose(oracle["times"][:n], record.times):
        raise ValueError("oracle times do not match the record")
    em, xm = _relative_l1(oracle["mean"][:n], record.vbar)
    ev, xv = _relative_l1(oracle["variance"][:n], record.variance)
    return ErrorSeries(record.times.copy(), em, ev, xm, xv)


def convergence_study(config: ScenarioConfig, orders) -> list[tuple[int, float, float]]:
    """Time-averaged mean and variance errors for each gPC order."""
    rows = []
    _, v0 = initial_state(config)
    for M in orders:
        cfg = config.replace(M=int(M))
        record = run(cfg)
        errors = error_metrics(record, oracle_series(cfg, record.times, v0))
        rows.append((int(M),) + errors.time_average())
    return rows


def compare_mc(config: ScenarioConfig, samples: int, seed: int = 0) -> dict:
    """Per-agent gaps between the gPC run and a Monte Carlo reference."""
    if samples < 1:
        raise ConfigError("Monte Carlo needs at least one sample")
    x0, v0 = initial_state(config)
    record = run(config, x0, v0)
    mc = mc_reference(
        x0, v0, config.resolved_rate(), samples, config.dt, config.T, seed=seed,
        kernel=config.kernel, control=config.control if config.controlled else None,
        stride=config.output.stride,
    )
    n = min(len(record.times), len(mc.times))
    return {
        "times": mc.times[:n],
        "mean_gap": np.abs(record.vbar[:n] - mc.mean[:n]),
        "variance_gap": np.abs(record.variance[:n] - mc.variance[:n]),
        "stderr": mc.stderr[:n],
        "mc_mean": mc.mean[:n],
        "gpc_mean": record.vbar[:n],
        "mc_diverged": int(mc.diverged.sum()),
    }


def spread_history(record: RunRecord) -> np.ndarray:
    """RMS over agents of E|v_i - V|^2, including the gPC variance of each agent."""
    dev = record.vbar - record.vbar.mean(axis=1, keepdims=True)
    return np.sqrt(np.mean(np.sum(dev**2 + record.variance, axis=2), axis=1))
