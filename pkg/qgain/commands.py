"""Command executors: turn a RunConfig plus its moment tables into result tables."""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from .config import Command, RunConfig
from .tools.es_core import EsState, normalized_quality_gain_mc, run_scale_invariant
from .tools.experiments import (
    FIG1_SCHEMES,
    FIG3_THETAS,
    MomentSource,
    bound_check,
    default_lambda_grid,
    default_moment_source,
    fig1_data,
    fig2_data,
    fig3_data,
    fig56_data,
)
from .tools.moment_cache import MomentKey
from .tools.order_stats import (
    MomentMethod,
    MomentTable,
    MomentValidator,
    asymptotic_checks,
    david_bounds,
    default_first_method,
    default_mc_samples,
)
from .tools.quadratic import make_model
from .tools.theory import (
    TheoryInputs,
    error_bound,
    optimal_weights_general,
    phi_hat,
    predict,
    scaling_condition_check,
    sigma_bar_star_general,
)
from .tools.weights import LipschitzConstants, lipschitz_bounds, lipschitz_grid, make_weights
from .utils.result_formatter import ResultFormatter

logger = logging.getLogger(__name__)

Slot = Tuple[int, bool]


class MomentRequest(NamedTuple):
    lam: int
    with_e2: bool
    method: MomentMethod
    samples: int = 0
    seed: int = -1

    @property
    def key(self) -> MomentKey:
        return MomentKey(self.lam, self.method, self.samples, self.seed)

    @property
    def slot(self) -> Slot:
        return (self.lam, self.with_e2)


@dataclass
class CommandResult:
    """Tables and side outputs of one command; persisted by the graph."""

    name: str
    tables: Dict[str, pd.DataFrame]
    json_tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    figure: Optional[str] = None
    moment_exports: List[MomentTable] = field(default_factory=list)
    weights: Optional[np.ndarray] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def primary(self) -> pd.DataFrame:
        return self.tables[self.name]


# ---------------------------------------------------------------------------
# Moment planning
# ---------------------------------------------------------------------------

def _first_moments(lam: int, method: Optional[MomentMethod] = None) -> MomentRequest:
    return MomentRequest(lam, False, method or default_first_method(lam))


def _product_moments(cfg: RunConfig, lam: int, seed: Optional[int] = None) -> MomentRequest:
    samples = cfg.samples or default_mc_samples(lam)
    seed = cfg.moment_seed if seed is None else seed
    return MomentRequest(lam, True, MomentMethod.MONTE_CARLO, samples, seed)


def figure_lambdas(cfg: RunConfig) -> List[int]:
    name = cfg.get("name")
    explicit = cfg.get("lambdas")
    if explicit:
        return sorted({int(lam) for lam in explicit})
    if name == "fig2":
        return default_lambda_grid(cfg.get("lmax"), points=25)
    return default_lambda_grid(cfg.get("lmax"))


def _needs_product(cfg: RunConfig, lam: int) -> bool:
    explicit = cfg.get("e2")
    return bool(explicit) if explicit is not None else lam <= cfg.get("lambda_exact", 200)


def moment_requests(cfg: RunConfig) -> List[MomentRequest]:
    """Moment tables a command will read, in computation order."""
    command = cfg.command
    if command is Command.MOMENTS:
        lam = cfg.get("lambda")
        method = MomentMethod(cfg.get("method"))
        if cfg.get("e2") or method is MomentMethod.MONTE_CARLO:
            return [_product_moments(cfg, lam, seed=cfg.seed)]
        return [_first_moments(lam, method)]
    if command is Command.WEIGHTS:
        if cfg.get("scheme") in ("optimal", "optimal_positive"):
            return [_first_moments(cfg.get("lambda"))]
        return []
    if command in (Command.THEORY, Command.SIMULATE):
        lam = cfg.get("lambda")
        return [_product_moments(cfg, lam) if _needs_product(cfg, lam) else _first_moments(lam)]
    if command is Command.BOUND_CHECK:
        return [_product_moments(cfg, cfg.get("lambda"))]

    name = cfg.get("name")
    if name == "prop4":
        return []
    lambdas = figure_lambdas(cfg)
    if name == "fig1":
        return [_first_moments(lam) for lam in lambdas]
    if name == "fig2":
        exact = cfg.get("lambda_exact")
        return [_product_moments(cfg, lam) if lam <= exact else _first_moments(lam) for lam in lambdas]
    return [_product_moments(cfg, lam) for lam in lambdas]


def moment_source(cfg: RunConfig, moments: Dict[Slot, MomentTable]) -> MomentSource:
    """Serve planned tables; anything unplanned is computed on the spot."""
    fallback = default_moment_source(cfg.samples, cfg.moment_seed, cfg.workers)

    def source(lam: int, with_e2: bool) -> MomentTable:
        table = moments.get((lam, with_e2))
        if table is None and not with_e2:
            table = moments.get((lam, True))
        if table is None:
            logger.warning(f"moments for λ={lam} (e2={with_e2}) were not planned; computing them now")
            table = fallback(lam, with_e2)
        return table

    return source


# ---------------------------------------------------------------------------
# Executors
# ---------------------------------------------------------------------------

def _lipschitz(cfg: RunConfig, weights) -> LipschitzConstants:
    if cfg.get("lipschitz") == "grid":
        return lipschitz_grid(weights, cfg.get("grid_points"))
    return lipschitz_bounds(weights)


def _weights_from(cfg: RunConfig, source: MomentSource):
    lam = cfg.get("lambda")
    scheme = cfg.get("scheme")
    values = cfg.get("values")
    if values is None and cfg.get("values_file"):
        values = ResultFormatter.read_weights(cfg.get("values_file"))
    e1 = source(lam, False).e1 if scheme in ("optimal", "optimal_positive") else None
    return make_weights(scheme, lam, e1=e1, mu=cfg.get("mu"), values=values)


def run_moments(cfg: RunConfig, source: MomentSource) -> CommandResult:
    request = moment_requests(cfg)[0]
    table = source(request.lam, request.with_e2)
    is_valid, message = MomentValidator().validate(table)
    frame = pd.DataFrame({"i": np.arange(1, table.lam + 1), "e1": table.e1})
    if table.method is not MomentMethod.BLOM:
        lower, upper = david_bounds(table.lam)
        frame["david_lower"], frame["david_upper"] = lower, upper
    report = asymptotic_checks(table)
    return CommandResult(
        name="moments",
        tables={"moments": frame},
        moment_exports=[table],
        summary={
            "lambda": table.lam,
            "method": MomentMethod(table.method).value,
            "has_e2": table.has_e2,
            "valid": is_valid,
            "validation": message,
            "mean_abs": report.mean_abs,
            "mean_square": report.mean_square,
            "mc_std_err": table.mc_std_err,
        },
    )


def run_weights(cfg: RunConfig, source: MomentSource) -> CommandResult:
    weights = _weights_from(cfg, source)
    tables = {"weights": pd.DataFrame({"i": np.arange(1, weights.lam + 1), "w": weights.w})}
    summary = {"scheme": weights.scheme.value, "lambda": weights.lam, "mu_w": weights.mu_w}
    if cfg.get("lipschitz") != "none":
        lip = _lipschitz(cfg, weights)
        tables["lipschitz"] = pd.DataFrame([{
            "method": lip.method.value, "l1": lip.l1, "l2": lip.l2, "l3": lip.l3,
        }])
        summary.update(l1=lip.l1, l2=lip.l2, l3=lip.l3)
    return CommandResult(name="weights", tables=tables, weights=weights.w, summary=summary)


def run_theory(cfg: RunConfig, source: MomentSource) -> CommandResult:
    lam = cfg.get("lambda")
    moments = source(lam, _needs_product(cfg, lam))
    model = make_model(cfg.model_spec())
    weights = _weights_from(cfg, source)
    c_m = cfg.get("c_m")

    inputs = TheoryInputs.from_model(model, weights, moments, 0.0, c_m, allow_large_lambda=not moments.has_e2)
    if cfg.get("e_Ae") is not None:
        inputs = replace(inputs, e_Ae=cfg.get("e_Ae"))
    mode = "exact" if moments.has_e2 else "large_lambda"
    s_star = sigma_bar_star_general(weights, moments, inputs.e_Ae, mode)
    inputs = inputs.with_sigma_bar(cfg.get("sigma_bar", s_star))

    lip = _lipschitz(cfg, weights)
    prediction = predict(inputs, lip)
    bound = error_bound(inputs, lip, cfg.get("bound_form"))
    record = {
        "lambda": lam,
        "scheme": weights.scheme.value,
        "spectrum": model.spectrum.value,
        "N": model.dim,
        "c_m": c_m,
        "e_Ae": inputs.e_Ae,
        "tr_A2": inputs.tr_A2,
        "d1_hat": inputs.d1_hat,
        "mu_w": weights.mu_w,
        "moment_mode": mode,
        "sigma_bar": inputs.sigma_bar,
        "sigma_bar_star": s_star,
        "phi_inf": prediction.phi_inf,
        "phi_hat": prediction.phi_hat,
        "error_bound": bound.bound,
        "bound_form": cfg.get("bound_form"),
        "alpha": bound.alpha,
        "g_alpha": bound.g_alpha,
        "vacuous": bound.vacuous,
        "l1": lip.l1,
        "l2": lip.l2,
        "l3": lip.l3,
    }
    tables = {}
    if cfg.get("optimal_weights"):
        result = optimal_weights_general(moments, inputs.e_Ae, cfg.get("lambda_exact"))
        tables["optimal_weights"] = pd.DataFrame({
            "i": np.arange(1, lam + 1), "w": result.weights.w, "w_bar": result.w_bar,
        })
        record.update(
            optimal_sigma_bar=result.sigma_bar,
            optimal_value=result.optimal_value,
            condition=result.condition,
            residual=result.residual,
            exact_solve=result.exact,
        )
    frame = pd.DataFrame([record])
    tables = {"theory": frame, **tables}
    return CommandResult(name="theory", tables=tables, json_tables={"theory": frame}, summary=record)


def run_simulate(cfg: RunConfig, source: MomentSource) -> CommandResult:
    lam = cfg.get("lambda")
    moments = source(lam, _needs_product(cfg, lam))
    model = make_model(cfg.model_spec())
    weights = _weights_from(cfg, source)
    c_m = cfg.get("c_m")

    worst = TheoryInputs.from_model(model, weights, moments, 0.0, c_m, allow_large_lambda=not moments.has_e2)
    mode = "exact" if moments.has_e2 else "large_lambda"
    s_star = sigma_bar_star_general(weights, moments, worst.e_Ae, mode)
    sigma_bar = cfg.get("sigma_bar", cfg.get("multiplier") * s_star)

    init_seq, run_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    m0 = model.x_star + np.random.default_rng(init_seq).standard_normal(model.dim)

    if cfg.get("mode") == "one_step":
        est = normalized_quality_gain_mc(model, m0, sigma_bar, c_m, weights, cfg.get("reps"), run_seq)
        at_m0 = TheoryInputs.from_model(model, weights, moments, sigma_bar, c_m, m=m0,
                                        allow_large_lambda=not moments.has_e2)
        record = {
            "sigma_bar": sigma_bar,
            "sigma_bar_star": s_star,
            "phi_bar_mc": est.mean,
            "stderr": est.stderr,
            "reps": est.reps,
            "phi_hat": phi_hat(at_m0),
            "e_Ae": at_m0.e_Ae,
        }
        frame = pd.DataFrame([record])
        return CommandResult(name="one_step", tables={"one_step": frame}, summary=record)

    every = cfg.get("record_every")
    state = EsState.create(m0, 1.0, c_m, run_seq)
    trajectory = run_scale_invariant(
        state, model, weights, sigma_bar, cfg.get("T"),
        record=lambda t: t % every == 0, rescale=cfg.get("rescale"),
    )
    half = trajectory.iterations // 2
    ratios = trajectory.progress[half:] / trajectory.g_m[half:]
    summary = {
        "sigma_bar": sigma_bar,
        "sigma_bar_star": s_star,
        "iterations": trajectory.iterations,
        "truncated": trajectory.truncated,
        "empirical_nqg": float(ratios.mean()) if ratios.size else float("nan"),
        "final_log10_f": float(trajectory.log10_f[-1]),
    }
    return CommandResult(name="trajectory", tables={"trajectory": trajectory.to_frame()}, summary=summary)


def run_figure(cfg: RunConfig, source: MomentSource) -> CommandResult:
    name = cfg.get("name")
    summary: Dict[str, Any] = {"figure": name}
    if name == "fig1":
        table = fig1_data(figure_lambdas(cfg), cfg.get("schemes", list(FIG1_SCHEMES)), source)
    elif name == "fig2":
        table = fig2_data(cfg.get("dims"), figure_lambdas(cfg), cfg.get("schemes"), cfg.get("lambda_exact"), source)
    elif name == "fig3":
        table = fig3_data(figure_lambdas(cfg), cfg.get("thetas", list(FIG3_THETAS)), cfg.get("schemes"), source)
    elif name == "fig5_6":
        table = fig56_data(cfg.experiment_config(), source)
    else:
        report = scaling_condition_check(
            cfg.get("dims"),
            cfg.get("lambda_rule"),
            {"type": cfg.get("spectrum"), "alpha": cfg.get("alpha")},
            cfg.get("weights_family"),
            cfg.get("epsilon"),
        )
        table = report.table
        summary.update(
            d1_ratio_decreasing=report.d1_ratio_decreasing,
            lipschitz_ratio_decreasing=report.lipschitz_ratio_decreasing,
        )
    summary["rows"] = len(table)
    return CommandResult(name=name, tables={name: table}, figure=name, summary=summary)


def run_bound_check(cfg: RunConfig, source: MomentSource) -> CommandResult:
    table = bound_check(
        N=cfg.get("n"),
        lam=cfg.get("lambda"),
        scheme=cfg.get("scheme"),
        sigma_bar_multipliers=cfg.get("multipliers"),
        c_m_values=cfg.get("c_m_values"),
        reps=cfg.get("reps"),
        spectrum={"type": cfg.get("spectrum"), "alpha": cfg.get("alpha")},
        seed=cfg.seed,
        grid_points=cfg.get("grid_points"),
        strict=cfg.get("strict"),
        moment_source=source,
    )
    summary = {
        "cells": len(table),
        "passed": int(table["pass"].sum()),
        "vacuous": int(table["vacuous"].sum()),
    }
    return CommandResult(name="bound_check", tables={"bound_check": table}, figure="bound_check", summary=summary)


EXECUTORS: Dict[Command, Callable[[RunConfig, MomentSource], CommandResult]] = {
    Command.MOMENTS: run_moments,
    Command.WEIGHTS: run_weights,
    Command.THEORY: run_theory,
    Command.SIMULATE: run_simulate,
    Command.FIGURE: run_figure,
    Command.BOUND_CHECK: run_bound_check,
}


def execute(cfg: RunConfig, moments: Dict[Slot, MomentTable]) -> CommandResult:
    """Run the command of ``cfg`` against the planned moment tables."""
    return EXECUTORS[cfg.command](cfg, moment_source(cfg, moments))
