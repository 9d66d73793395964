"""Scenario orchestration: config loading, dispatch to the runners and report writing."""

from __future__ import annotations

import json
import logging
import math
import time
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import ValidationError

from .common_utils import default_output_dir, get_current_utc_time, ms_to_omega0_time, omega0_to_khz, tool_version
from .couplings_utils import load_couplings_csv
from .hilbert_utils import DensityMatrix, embed, fock_ops
from .io_utils import Table, timeseries_table, write_csv, write_report
from .lindblad_solver import IntegrationError, LindbladModel, SteadyStateError, delta_e_sweep, evolve, thermal_channels
from .model_builders import MODE_SITE, build_single_site_et, check_perturbative, resonance_order
from .models import (
    CheckpointResult,
    IntegratorConfig,
    QualityFlags,
    RunReport,
    ScenarioConfig,
    SpinNetwork,
)
from .protocol_handler import (
    build_dissipative_dicke_schedule,
    build_hybrid_dicke_schedule,
    coupling_summary_khz,
    run,
    run_boson_w,
    run_ghz,
)
from .reduced_model import (
    dicke_reduced_prediction,
    effective_rabi,
    lambda_scan,
    optimal_gamma,
    projection_observables,
    reduced_model_for,
    single_site_basis,
    solve_reduced,
)
from .scenario_presets import PRESETS, preset_config
from .state_utils import build_initial

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised for unreadable or schema-violating scenario configs."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        super().__init__(message)


def _first_error(exc: ValidationError) -> ConfigError:
    err = exc.errors()[0]
    key = ".".join(str(part) for part in err["loc"]) or "<root>"
    return ConfigError(f"Invalid config key '{key}': {err['msg']}", key=key)


def validate_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise _first_error(exc) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse a TOML or JSON scenario file and validate it against ScenarioConfig."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file {path} does not exist.")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}", line=getattr(exc, "lineno", None)) from exc
    elif path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    else:
        raise ConfigError(f"Unsupported config format {path.suffix!r}; use .toml or .json.")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table of keys.")
    cfg = validate_config(data)
    if cfg.couplings_csv and not Path(cfg.couplings_csv).is_absolute():
        cfg = cfg.model_copy(update={"couplings_csv": str(path.parent / cfg.couplings_csv)})
    logger.info(f"Loaded scenario {cfg.scenario} from {path}")
    logger.debug(f"Parameters: {json.dumps(cfg.parameter_echo(), sort_keys=True)}")
    return cfg


def dump_config(cfg: ScenarioConfig) -> str:
    return cfg.model_dump_json(by_alias=True, indent=2)


def resolve_config(target: str) -> ScenarioConfig:
    """A preset id or the path of a config file."""
    if target in PRESETS:
        return preset_config(target)
    return load_config(target)


def apply_overrides(
    cfg: ScenarioConfig,
    n_cutoff: int | None = None,
    rtol: float | None = None,
    seed: int | None = None,
) -> ScenarioConfig:
    update: dict = {}
    if n_cutoff is not None:
        if n_cutoff < 2:
            raise ConfigError(f"Invalid config key 'n_cutoff': must be >= 2, got {n_cutoff}", key="n_cutoff")
        update["n_cutoff"] = n_cutoff
    if rtol is not None:
        if rtol <= 0:
            raise ConfigError(f"Invalid config key 'integrator.rtol': must be > 0, got {rtol}", key="integrator.rtol")
        update["integrator"] = cfg.integrator.model_copy(update={"rtol": rtol})
    if seed is not None:
        update["seed"] = seed
    return cfg.model_copy(update=update) if update else cfg


def list_scenarios() -> list[dict]:
    return [{"id": p.scenario, "anchor": p.anchor, "description": p.description} for p in PRESETS.values()]


@dataclass
class ScenarioResult:
    tables: list[Table] = field(default_factory=list)
    values: dict[str, tuple[float, float | None]] = field(default_factory=dict)
    quality: QualityFlags = field(default_factory=QualityFlags)
    results: dict = field(default_factory=dict)

    def merge_quality(self, other: QualityFlags) -> None:
        self.quality = QualityFlags(
            trace_ok=self.quality.trace_ok and other.trace_ok,
            positivity_ok=self.quality.positivity_ok and other.positivity_ok,
            converged=self.quality.converged and other.converged,
            messages=self.quality.messages + other.messages,
        )


def _integrator(cfg: ScenarioConfig) -> IntegratorConfig:
    return cfg.integrator.model_copy(update={"sample_dt": ms_to_omega0_time(cfg.sample_dt_ms, cfg.omega0_angular_khz)})


def _log_slope(x: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    mask = (x >= lo * (1 - 1e-9)) & (x <= hi * (1 + 1e-9))
    return float(np.polyfit(np.log10(x[mask]), np.log10(y[mask]), 1)[0])


def _run_transfer_rate(cfg: ScenarioConfig) -> ScenarioResult:
    p = cfg.et
    sweep = cfg.sweep
    v_e = abs(effective_rabi(p.v, p.g_tilde, order=resonance_order(p)))
    ratios, rates = lambda_scan(v_e, p.g_tilde, sweep.ratio_min, sweep.ratio_max, sweep.ratio_points)
    out = ScenarioResult(tables=[Table("lambda_scan", ["gamma_over_ve", "abs_lambda_tilde_omega0"], list(zip(ratios, rates)))])
    out.values["argmax_gamma_over_ve"] = (optimal_gamma(v_e, p.g_tilde) / v_e, None)
    out.values["slope_low_gamma"] = (_log_slope(ratios, rates, 0.01, 0.1), None)
    out.values["slope_high_gamma"] = (_log_slope(ratios, rates, 10.0, 100.0), None)
    out.results = {"v_e_omega0": v_e, "max_rate_omega0": float(np.max(rates))}
    return out


def _measured_matrix_khz(cfg: ScenarioConfig) -> np.ndarray | None:
    if cfg.couplings_csv:
        return load_couplings_csv(cfg.couplings_csv)
    net = cfg.network
    if net is None or net.j_matrix is None:
        return None
    mat = np.asarray(net.j_matrix, dtype=float)
    return mat if net.j_matrix_units == "khz" else omega0_to_khz(mat, cfg.omega0_angular_khz)


def _run_dicke(cfg: ScenarioConfig) -> ScenarioResult:
    sched = cfg.schedule
    if sched is None:
        raise ConfigError(f"Scenario {cfg.scenario} needs a [schedule] section.", key="schedule")
    n, m = sched.n_targets, sched.m_excitations
    bands = {}
    for band in cfg.checkpoints:
        for step in range(1, m + 1):
            if band.label == f"W_{n}^{step}":
                bands[step] = band
    noise = cfg.noise.model_copy(update={"seed": cfg.seed})
    common = dict(
        n=n,
        m=m,
        p=cfg.et,
        j=sched.j,
        bath=cfg.bath,
        tau1_ms=sched.tau1_ms,
        tau2_ms=sched.tau2_ms,
        noise=noise,
        n_c=cfg.n_cutoff,
        gamma_override=sched.gamma_override,
        measured_khz=_measured_matrix_khz(cfg),
        bands=bands,
    )
    if sched.scheme == "hybrid":
        schedule = build_hybrid_dicke_schedule(**common)
    else:
        schedule = build_dissipative_dicke_schedule(
            **common, repump_v=sched.repump_v, repump_couplings_on=sched.repump_couplings_on
        )
    if sched.tail_ms > 0:
        schedule.append_tail(sched.tail_ms)
    scheme = "realistic" if noise.b_field or noise.include_counter_rotating else "dicke"
    report = check_perturbative(
        cfg.et,
        cfg.bath.model_copy(update={"gamma": schedule.segments[0].gamma}),
        scheme,
        SpinNetwork(n_targets=n, j=[sched.j] * n, b_field=noise.b_field),
    )
    rho0 = build_initial(cfg.initial, cfg.et, schedule.space)
    outcome = run(schedule, rho0, _integrator(cfg))
    out = ScenarioResult(tables=[timeseries_table("timeseries", outcome.series)])
    out.merge_quality(outcome.series.quality)
    for cp in outcome.checkpoints:
        out.values[cp.label] = (cp.value, cp.time_ms)
    for t_ms, label in outcome.series.boundaries:
        if label.startswith("repump"):
            out.values[f"p_donor_after_{label}"] = (outcome.series.value_at_ms("p_donor", t_ms), t_ms)
    pumps = [s for s in schedule.segments if s.kind == "pump" and s.label != "tail"]
    prediction = dicke_reduced_prediction(
        n,
        m,
        sched.j,
        cfg.et.g_tilde,
        ms_to_omega0_time(sched.tau1_ms, cfg.omega0_angular_khz),
        gammas=[s.gamma for s in pumps],
        order=resonance_order(cfg.et),
    )
    out.results = {
        "segments": [
            {"label": s.label, "kind": s.kind, "duration_ms": s.duration_ms, "gamma_omega0": s.gamma}
            for s in schedule.segments
        ],
        "reduced_prediction": [step.cumulative for step in prediction.steps],
        "perturbative_checks_passed": report.passed,
        "dimension": schedule.space.dim,
        "couplings": coupling_summary_khz(schedule.network, cfg.omega0_angular_khz),
    }
    return out


def _run_delta_e_sweep(cfg: ScenarioConfig) -> ScenarioResult:
    sweep = cfg.sweep
    table = delta_e_sweep(cfg.et, sweep.n_bar_grid, sweep.delta_e_orders, n_c=cfg.n_cutoff)
    rows = [(pt.delta_e, pt.n_bar, pt.gamma, pt.p_donor) for pt in table.points]
    out = ScenarioResult(tables=[Table("steady_state", ["delta_e_omega0", "n_bar", "gamma_omega0", "p_donor_ss"], rows)])
    optimum = {}
    for n_bar in table.n_bars():
        best = table.optimum(n_bar)
        out.values[f"optimum_order_nbar_{n_bar:g}"] = (float(best.order), None)
        optimum[f"{n_bar:g}"] = {"order": best.order, "p_donor_ss": best.p_donor}
    out.results = {"optimum": optimum}
    return out


def _run_single_site_comparison(cfg: ScenarioConfig) -> ScenarioResult:
    p, bath, n_c = cfg.et, cfg.bath, cfg.n_cutoff
    order = resonance_order(p)
    h = build_single_site_et(p, n_c)
    a = embed(fock_ops(n_c)[0], MODE_SITE, h.space)
    model = LindbladModel(h, thermal_channels(a, bath))
    basis = single_site_basis(p, n_c, order)
    rho0 = DensityMatrix.from_ket(h.space, basis[0])
    duration = cfg.duration_ms or 16.0
    series = evolve(
        model,
        rho0,
        ms_to_omega0_time(duration, cfg.omega0_angular_khz),
        _integrator(cfg),
        projection_observables(basis),
        cfg.omega0_angular_khz,
    )
    reduced = solve_reduced(reduced_model_for(p, bath, order=order), (1.0, 0.0, 0.0), series.times_omega0)
    series.columns["reduced_rho11"] = reduced.rho11
    series.columns["reduced_rho22"] = reduced.rho22
    series.columns["reduced_rho33"] = reduced.rho33
    deviation = max(
        float(np.max(np.abs(series.column(f"rho{k}{k}") - series.column(f"reduced_rho{k}{k}")))) for k in (1, 2, 3)
    )
    coherence = float(max(np.max(series.column("abs_rho13")), np.max(series.column("abs_rho23"))))
    out = ScenarioResult(tables=[timeseries_table("timeseries", series)])
    out.merge_quality(series.quality)
    out.values["max_population_deviation"] = (deviation, None)
    out.values["max_coherence"] = (coherence, None)
    out.results = {"reduced_out_of_range": reduced.out_of_range}
    return out


def _fidelity_grid(points, label: str) -> ScenarioResult:
    rows = [(pt.n_bar, pt.delta_e, pt.gamma, pt.fidelity, pt.population_overlap) for pt in points]
    out = ScenarioResult(
        tables=[Table("fidelities", ["n_bar", "delta_e_omega0", "gamma_omega0", "fidelity", "population_overlap"], rows)]
    )
    for pt in points:
        out.tables.append(timeseries_table(f"timeseries_nbar_{pt.n_bar:g}", pt.series))
        out.merge_quality(pt.series.quality)
        out.values[f"F_nbar_{pt.n_bar:g}"] = (pt.fidelity, float(pt.series.times_ms[-1]))
    out.results = {label: {f"{pt.n_bar:g}": pt.fidelity for pt in points}}
    return out


def _run_boson_w(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.network is None:
        raise ConfigError("Scenario appC needs a [network] section with the mode couplings.", key="network")
    points = run_boson_w(
        cfg.et,
        cfg.network.n_targets,
        cfg.network.j[0],
        cfg.sweep.n_bar_grid if cfg.sweep else [cfg.bath.n_bar],
        n_c=cfg.n_cutoff,
        n_t=cfg.target_cutoff,
        duration_ms=cfg.duration_ms or 10.0,
        cfg=_integrator(cfg),
    )
    return _fidelity_grid(points, "boson_w_fidelity")


def _run_ghz(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.ghz is None:
        raise ConfigError("Scenario appE needs a [ghz] section.", key="ghz")
    points = run_ghz(
        cfg.et,
        cfg.ghz,
        cfg.sweep.n_bar_grid if cfg.sweep else [cfg.bath.n_bar],
        n_c=cfg.n_cutoff,
        duration_ms=cfg.duration_ms or 20.0,
        cfg=_integrator(cfg),
    )
    return _fidelity_grid(points, "ghz_fidelity")


RUNNERS: dict[str, Callable[[ScenarioConfig], ScenarioResult]] = {
    "fig2": _run_transfer_rate,
    "fig3b": _run_dicke,
    "fig4b": _run_dicke,
    "fig5": _run_delta_e_sweep,
    "fig6": _run_dicke,
    "fig7": _run_single_site_comparison,
    "fig8": _run_single_site_comparison,
    "appC": _run_boson_w,
    "appE": _run_ghz,
}


def score_checkpoints(cfg: ScenarioConfig, values: dict[str, tuple[float, float | None]]) -> list[CheckpointResult]:
    out = []
    for band in cfg.checkpoints:
        if band.label not in values:
            logger.warning(f"Checkpoint {band.label} was not produced by scenario {cfg.scenario}.")
            out.append(CheckpointResult(label=band.label, value=math.nan, expected=band.expected, tolerance=band.tolerance, passed=False))
            continue
        value, t_ms = values[band.label]
        out.append(
            CheckpointResult(
                label=band.label,
                value=value,
                expected=band.expected,
                tolerance=band.tolerance,
                passed=abs(value - band.expected) <= band.tolerance,
                time_ms=t_ms if t_ms is not None else band.time_ms,
            )
        )
    return out


def output_paths(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> tuple[Path, str]:
    root = Path(out_dir or cfg.output.out_dir or default_output_dir())
    return root, cfg.output.prefix or cfg.scenario


def report_path(scenario: str, out_dir: str | Path | None = None) -> Path:
    return Path(out_dir or default_output_dir()) / f"{scenario}_report.json"


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None) -> RunReport:
    """Run the protocol a scenario maps to, writing its CSV tables and JSON report.

    Integrator failures are recorded in the report and re-raised.
    """
    root, prefix = output_paths(cfg, out_dir)
    header = {"scenario": cfg.scenario, "version": tool_version(), "seed": str(cfg.seed), "parameters": cfg.parameter_echo()}
    started = time.perf_counter()
    report = RunReport(
        scenario=cfg.scenario,
        version=tool_version(),
        seed=cfg.seed,
        created_at=get_current_utc_time().isoformat(),
        parameters=cfg.parameter_echo(),
    )
    logger.info(f"Running scenario {cfg.scenario}: {cfg.description}")
    try:
        result = RUNNERS[cfg.scenario](cfg)
    except (IntegrationError, SteadyStateError) as exc:
        logger.error(f"Scenario {cfg.scenario} failed: {exc}")
        report.quality = QualityFlags(converged=False, messages=[str(exc)])
        report.wall_time_s = time.perf_counter() - started
        write_report(root / f"{prefix}_report.json", report)
        raise
    for table in result.tables:
        path = write_csv(root / f"{prefix}_{table.name}.csv", table, header)
        report.outputs.append(str(path))
    report.checkpoints = score_checkpoints(cfg, result.values)
    report.quality = result.quality
    report.results = result.results
    report.wall_time_s = time.perf_counter() - started
    write_report(root / f"{prefix}_report.json", report)
    for cp in report.checkpoints:
        status = "ok" if cp.passed else "MISS"
        logger.info(f"[{status}] {cp.label}: {cp.value:.5g} (expected {cp.expected} +/- {cp.tolerance})")
    return report
