"""Bundled scenario configs that reproduce each experiment family, plus runners.

Recipe names follow the CLI: ``fig2`` convergence, ``fig3`` large-time
divergence, ``fig4`` uniform-interaction control panels, ``fig5``
time-varying variance, ``fig6``-``fig8`` space-dependent interaction.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .config import InitConfig, OutputConfig, ScenarioConfig, initial_state
from .control import ControlConfig, SelectiveWeight
from .dynamics import InteractionKernel
from .harness import RunRecord, convergence_study, error_metrics, oracle_series, run, spread_history
from .output import LONG_COLUMNS, emit, emit_table, long_rows
from .rate import SeparableNormal, TimeVaryingNormal

RECIPES = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8")

NONSELECTIVE = SelectiveWeight("nonselective")
LINEAR = SelectiveWeight("linear")


def uniform_base(**changes) -> ScenarioConfig:
    """Ten agents around V = 2 with unit variance, uniform interaction, theta ~ N(2, 1/2)."""
    base = ScenarioConfig(
        name="uniform",
        N=10,
        d=1,
        M=6,
        T=1.0,
        dt=1e-3,
        rate=SeparableNormal(2.0, math.sqrt(0.5)),
        init=InitConfig(seed=1, velocities={"law": "normal", "mean": 2.0, "var": 1.0}),
    )
    return base.replace(**changes)


def space_base(**changes) -> ScenarioConfig:
    """100 planar agents, positions N(0, 2), velocities in two clusters at +-5."""
    base = ScenarioConfig(
        name="space",
        N=100,
        d=2,
        M=6,
        T=5.0,
        dt=1e-2,
        kernel=InteractionKernel("cucker-smale", 0.05),
        rate=SeparableNormal(2.0, 1.0),
        init=InitConfig(
            seed=7,
            velocities={"law": "clusters", "centers": [5.0, -5.0], "var": 0.1},
            positions={"law": "normal", "mean": 0.0, "var": 2.0},
        ),
        output=OutputConfig(stride=10),
        zeta=0.01,
    )
    return base.replace(**changes)


def control_panel(sigma2: float, weight: SelectiveWeight, kappa: float, T: float = 5.0) -> ScenarioConfig:
    cfg = uniform_base(
        name=f"ctrl_s{sigma2:g}_{weight.kind}_k{kappa:g}",
        M=10,
        T=T,
        dt=1e-2,
        rate=SeparableNormal(2.0, math.sqrt(sigma2)),
        output=OutputConfig(stride=10),
    )
    if math.isinf(kappa):
        return cfg
    return cfg.replace(control=ControlConfig(vd=(1.0,), kappa=kappa, weight=weight))


def timevar_config(mu: float, M: int = 40, T: float = 20.0, dt: float = 1e-2) -> ScenarioConfig:
    return uniform_base(
        name=f"timevar_mu{mu:g}",
        M=M,
        T=T,
        dt=dt,
        rate=TimeVaryingNormal(mu, 0.5),
        output=OutputConfig(stride=10),
    )


def recipe_configs(name: str) -> dict[str, ScenarioConfig]:
    """Labelled configs run by a recipe (convergence sweeps excluded)."""
    if name == "fig2":
        return {f"T{T:g}": uniform_base(name=f"convergence_T{T:g}", T=T) for T in (1.0, 5.0)}
    if name == "fig3":
        return {
            f"M{M}": uniform_base(name=f"divergence_M{M}", M=M, T=6.0, dt=1e-2, rate=SeparableNormal(2.0, 1.0))
            for M in (6, 10)
        }
    if name == "fig4":
        out = {}
        for sigma2 in (1.0, 0.5):
            for weight in (NONSELECTIVE, LINEAR):
                for kappa in (math.inf, 1.0, 0.1):
                    out[f"s{sigma2:g}_{weight.kind}_k{kappa:g}"] = control_panel(sigma2, weight, kappa)
        return out
    if name == "fig5":
        out = {f"mu{mu:g}": timevar_config(mu) for mu in (1.8, 1.9, 2.0, 2.1, 2.2)}
        ctrl = timevar_config(1.9)
        _, v0 = initial_state(ctrl)
        target = (float(v0.mean()),)
        out["mu1.9_controlled"] = ctrl.replace(
            name="timevar_mu1.9_controlled", control=ControlConfig(vd=target, kappa=0.1, weight=LINEAR)
        )
        return out
    if name == "fig6":
        return {"uncontrolled_M10": space_base(name="space_uncontrolled_M10", M=10)}
    if name == "fig7":
        return {"uncontrolled": space_base(name="space_uncontrolled")}
    if name == "fig8":
        return {
            "controlled": space_base(
                name="space_controlled", control=ControlConfig(vd=(0.0, 0.0), kappa=1.0, weight=LINEAR)
            )
        }
    raise ValueError(f"unknown recipe {name!r}; choose from {RECIPES}")


def _series_table(record: RunRecord, label: str):
    for row in long_rows(record, label):
        yield row
    for s, t in enumerate(record.times):
        for i in range(record.N):
            for k in range(record.d):
                yield [label, t, i, k, "x", record.xbar[s, i, k]]


def run_recipe(name: str, out_dir: str | Path, format: str = "csv", overrides: dict | None = None) -> list[Path]:
    """Run a recipe and write its outputs; returns the written paths.

    ``overrides`` replaces config fields in every run (e.g. ``{"dt": 1e-5}``).
    """
    out_dir = Path(out_dir) / name
    overrides = overrides or {}
    configs = {k: c.replace(**overrides) for k, c in recipe_configs(name).items()}
    written: list[Path] = []

    if name == "fig2":
        for label, cfg in configs.items():
            rows = convergence_study(cfg, range(0, 11))
            written.append(emit_table(["M", "mean_error", "variance_error"], rows, out_dir / f"convergence_{label}", format))
        cfg = configs["T5"]
        rows = []
        for M in (2, 4, 6, 8):
            rec = run(cfg.replace(M=M))
            errs = error_metrics(rec, oracle_series(cfg, rec.times))
            rows += [[M, t, em, ev] for t, em, ev in zip(errs.times, errs.mean_error, errs.variance_error)]
        written.append(emit_table(["M", "t", "mean_error", "variance_error"], rows, out_dir / "variance_error_series", format))
        return written

    if name == "fig4":
        # one file per panel, each overlaying kappa in {inf, 1, 0.1}
        panels: dict[str, list] = {}
        for label, cfg in configs.items():
            panel = label.rsplit("_k", 1)[0]
            panels.setdefault(panel, []).extend(long_rows(run(cfg), label))
        for panel, rows in panels.items():
            written.append(emit_table(LONG_COLUMNS, rows, out_dir / f"panel_{panel}", format))
        return written

    summary = []
    for label, cfg in configs.items():
        rec = run(cfg)
        written.append(emit(rec, out_dir / label, format))
        written.append(emit_table(LONG_COLUMNS, _series_table(rec, label), out_dir / f"{label}_long", format))
        spread = spread_history(rec)
        summary.append([label, rec.times[-1], spread[0], spread[-1], float(np.max(np.abs(rec.vbar[-1]))), rec.final_diverged])
    written.append(
        emit_table(["series", "t_end", "spread_0", "spread_end", "max_abs_vbar_end", "diverged"], summary, out_dir / "summary", format)
    )
    return written
