"""Multi-segment entanglement protocols: Dicke pumping, boson W and GHZ runs."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np

from .common_utils import default_workers, khz_to_omega0, ms_to_omega0_time, omega0_to_khz
from .couplings_utils import MEASURED_COUPLINGS_KHZ, MEASURED_CONTROL_INDEX, control_first
from .hilbert_utils import DensityMatrix, Operator, SpaceSpec, embed, fock_ops, partial_trace, pauli_ops
from .lindblad_solver import LindbladModel, Observable, TimeSeries, evolve, thermal_channels
from .model_builders import (
    CONTROL_SITE,
    MODE_SITE,
    build_boson_w,
    build_dicke_pump,
    build_ghz,
    build_pi_pulse,
    build_repump,
    franck_condon_factor,
    resonance_order,
    spin_excitation_operator,
)
from .models import (
    BathParams,
    CheckpointBand,
    CheckpointResult,
    ETParams,
    GHZParams,
    InitialStateSpec,
    IntegratorConfig,
    NoiseSpec,
    SpinNetwork,
)
from .reduced_model import dicke_step_rabi, effective_rabi
from .state_utils import TargetState, build_initial, fidelity, population_overlap

logger = logging.getLogger(__name__)

SegmentKind = Literal["pump", "pi_pulse", "dissipative_repump"]


class ScheduleError(ValueError):
    """Raised for schedules that cannot be built (M > N, empty segment list)."""


@dataclass(frozen=True, eq=False)
class ScheduleSegment:
    label: str
    model: LindbladModel
    duration_ms: float
    kind: SegmentKind
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.duration_ms <= 0:
            raise ScheduleError(f"Segment {self.label!r} needs a positive duration, got {self.duration_ms}.")


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Fidelity band checked at the end of one segment."""

    segment: int
    target: TargetState
    band: CheckpointBand


@dataclass(eq=False)
class ProtocolSchedule:
    segments: list[ScheduleSegment]
    space: SpaceSpec
    target_sites: list[int]
    omega0_angular_khz: float
    checkpoints: list[Checkpoint] = field(default_factory=list)
    network: SpinNetwork | None = None

    def __post_init__(self) -> None:
        if not self.segments:
            raise ScheduleError("A protocol needs at least one segment.")

    @property
    def kinds(self) -> list[str]:
        return [s.kind for s in self.segments]

    @property
    def duration_ms(self) -> float:
        return sum(s.duration_ms for s in self.segments)

    def boundaries_ms(self) -> list[float]:
        return list(np.cumsum([s.duration_ms for s in self.segments]))

    def append_tail(self, duration_ms: float) -> ScheduleSegment:
        """Keep the last segment's dynamics running for ``duration_ms`` after the final checkpoint."""
        last = self.segments[-1]
        tail = ScheduleSegment("tail", last.model, duration_ms, last.kind, gamma=last.gamma)
        self.segments.append(tail)
        return tail


@dataclass
class NoisyNetwork:
    network: SpinNetwork
    delta_j: float
    j_res: float


def apply_noise(
    ideal: SpinNetwork,
    noise: NoiseSpec,
    measured_khz: np.ndarray | None = None,
    omega0_angular_khz: float | None = None,
) -> NoisyNetwork:
    """Imperfect control-target couplings, measured or synthesized from seeded draws.

    A measured kHz matrix is converted with ``omega0_angular_khz`` so the returned
    network always carries omega0 units.

    Synthesis: control row J (1 + u_i), u_i uniform in [-dJ/2, dJ/2] (dJ in units of J);
    target block scaled to a maximum of j_res J with the measured five-qubit pattern
    when N = 4, uniform magnitudes otherwise.
    """
    n = ideal.n_targets
    flags = {"include_counter_rotating": noise.include_counter_rotating, "b_field": noise.b_field}
    if measured_khz is not None:
        mat = np.asarray(measured_khz, dtype=float)
        if mat.shape != (n + 1, n + 1):
            raise ScheduleError(f"Measured coupling matrix is {mat.shape}, expected {(n + 1, n + 1)}.")
        if omega0_angular_khz is None:
            raise ScheduleError("omega0_angular_khz is required to convert measured kHz couplings.")
        network = SpinNetwork(
            n_targets=n,
            j=list(khz_to_omega0(mat[0, 1:], omega0_angular_khz)),
            j_matrix=mat.tolist(),
            j_matrix_units="khz",
            **flags,
        ).in_omega0(omega0_angular_khz)
        return NoisyNetwork(network, network.delta_j, network.j_res)
    if noise.is_ideal:
        return NoisyNetwork(ideal, ideal.delta_j, 0.0)
    rng = np.random.default_rng(noise.seed)
    j = np.asarray(ideal.j, dtype=float)
    mat = np.zeros((n + 1, n + 1))
    mat[0, 1:] = j * (1.0 + rng.uniform(-noise.delta_j / 2, noise.delta_j / 2, size=n))
    mat[1:, 0] = mat[0, 1:]
    if noise.j_res > 0 and n > 1:
        if n == 4:
            block = control_first(MEASURED_COUPLINGS_KHZ, MEASURED_CONTROL_INDEX)[1:, 1:]
        else:
            block = np.triu(rng.uniform(0.0, 1.0, size=(n, n)), 1)
            block = block + block.T
        scale = noise.j_res * float(np.max(np.abs(j))) / float(np.max(np.abs(block)))
        mat[1:, 1:] = block * scale
    np.fill_diagonal(mat, 0.0)
    network = SpinNetwork(n_targets=n, j=list(mat[0, 1:]), j_matrix=mat.tolist(), **flags)
    logger.info(f"Synthesized couplings: delta_J = {network.delta_j:.3e}, J_res = {network.j_res:.3e}")
    return NoisyNetwork(network, network.delta_j, network.j_res)


def _target_sites(n_targets: int) -> list[int]:
    return [MODE_SITE + 1 + i for i in range(n_targets)]


def _damped_mode(space: SpaceSpec) -> Operator:
    return embed(fock_ops(space.factors[MODE_SITE].dim)[0], MODE_SITE, space)


def _pump_segments(
    n: int,
    m: int,
    p: ETParams,
    j: float,
    bath: BathParams,
    tau1_ms: float,
    noise: NoiseSpec,
    n_c: int,
    gamma_override: float | None,
    measured_khz: np.ndarray | None,
    flip_g: bool,
) -> tuple[list[ScheduleSegment], SpaceSpec, SpinNetwork]:
    if m > n:
        raise ScheduleError(f"Cannot pump {m} excitations into {n} targets.")
    if m < 1:
        raise ScheduleError("At least one pumping step is required.")
    if noise.n_bar > 0:
        bath = bath.model_copy(update={"n_bar": noise.n_bar})
    noisy = apply_noise(SpinNetwork(n_targets=n, j=[j] * n), noise, measured_khz, p.omega0_angular_khz)
    order = resonance_order(p)
    segments = []
    space = None
    for step in range(m):
        params = p.with_flipped_g() if flip_g and step % 2 else p
        v_e = dicke_step_rabi(n, step, j, p.g_tilde, order)
        gamma = gamma_override if gamma_override is not None else 2.0 * v_e
        h = build_dicke_pump(params, noisy.network, n_c, p.omega0_angular_khz)
        space = h.space
        model = LindbladModel(h, thermal_channels(_damped_mode(space), bath.model_copy(update={"gamma": gamma})))
        segments.append(ScheduleSegment(f"pump_{step + 1}", model, tau1_ms, "pump", gamma=gamma))
    return segments, space, noisy.network


def _dicke_checkpoints(n: int, m: int, pump_indices: Sequence[int], bands: Mapping[int, CheckpointBand]) -> list[Checkpoint]:
    out = []
    for step, seg in enumerate(pump_indices[:m]):
        band = bands.get(step + 1) or CheckpointBand(label=f"W_{n}^{step + 1}", expected=1.0, tolerance=1.0)
        out.append(Checkpoint(seg, TargetState.dicke(n, step + 1), band))
    return out


def build_hybrid_dicke_schedule(
    n: int,
    m: int,
    p: ETParams,
    j: float,
    bath: BathParams,
    tau1_ms: float,
    tau2_ms: float,
    noise: NoiseSpec | None = None,
    n_c: int = 12,
    gamma_override: float | None = None,
    measured_khz: np.ndarray | None = None,
    bands: Mapping[int, CheckpointBand] | None = None,
) -> ProtocolSchedule:
    """Pump, pi pulse, pump, ... with g alternating sign between pumps; no pulse after the last pump."""
    pumps, space, network = _pump_segments(
        n, m, p, j, bath, tau1_ms, noise or NoiseSpec(), n_c, gamma_override, measured_khz, flip_g=True
    )
    tau2 = ms_to_omega0_time(tau2_ms, p.omega0_angular_khz)
    segments: list[ScheduleSegment] = []
    pump_indices = []
    for step, pump in enumerate(pumps):
        pump_indices.append(len(segments))
        segments.append(pump)
        if step < len(pumps) - 1:
            model = pump.model.with_hamiltonian(build_pi_pulse(space, tau2))
            segments.append(ScheduleSegment(f"pi_pulse_{step + 1}", model, tau2_ms, "pi_pulse", gamma=pump.gamma))
    return ProtocolSchedule(
        segments=segments,
        space=space,
        target_sites=_target_sites(n),
        omega0_angular_khz=p.omega0_angular_khz,
        checkpoints=_dicke_checkpoints(n, m, pump_indices, bands or {}),
        network=network,
    )


def build_dissipative_dicke_schedule(
    n: int,
    m: int,
    p: ETParams,
    j: float,
    bath: BathParams,
    tau1_ms: float,
    tau2_ms: float,
    noise: NoiseSpec | None = None,
    n_c: int = 12,
    gamma_override: float | None = None,
    repump_v: float = 0.05,
    repump_couplings_on: bool = False,
    measured_khz: np.ndarray | None = None,
    bands: Mapping[int, CheckpointBand] | None = None,
) -> ProtocolSchedule:
    """Pumps interleaved with ET repumps at reversed Delta E that cool the control back to |D>."""
    noise = noise or NoiseSpec()
    pumps, space, network = _pump_segments(
        n, m, p, j, bath, tau1_ms, noise, n_c, gamma_override, measured_khz, flip_g=False
    )
    repump_params = p.model_copy(update={"delta_e": -p.delta_e, "v": repump_v})
    if repump_couplings_on:
        h_repump = build_dicke_pump(repump_params, network, n_c, p.omega0_angular_khz)
    else:
        h_repump = build_repump(p, space, repump_v)
    repump_gamma = 2.0 * abs(repump_v) * franck_condon_factor(p.g_tilde, resonance_order(repump_params))
    repump_bath = bath.model_copy(update={"gamma": repump_gamma, "n_bar": noise.n_bar or bath.n_bar})
    repump_model = LindbladModel(h_repump, thermal_channels(_damped_mode(space), repump_bath))
    segments: list[ScheduleSegment] = []
    pump_indices = []
    for step, pump in enumerate(pumps):
        pump_indices.append(len(segments))
        segments.append(pump)
        if step < len(pumps) - 1:
            segments.append(
                ScheduleSegment(f"repump_{step + 1}", repump_model, tau2_ms, "dissipative_repump", gamma=repump_gamma)
            )
    return ProtocolSchedule(
        segments=segments,
        space=space,
        target_sites=_target_sites(n),
        omega0_angular_khz=p.omega0_angular_khz,
        checkpoints=_dicke_checkpoints(n, m, pump_indices, bands or {}),
        network=network,
    )


def target_observables(
    space: SpaceSpec, target_sites: Sequence[int], targets: Sequence[TargetState]
) -> dict[str, Observable]:
    """Fidelity (F_*) and population-overlap (P_*) columns for each target, plus control bookkeeping."""
    _, _, sz, sp, sm = pauli_ops()
    observables: dict[str, Observable] = {
        "p_donor": embed(sp @ sm, CONTROL_SITE, space),
        "sz_control": embed(sz, CONTROL_SITE, space),
    }
    if any(space.factors[s].dim == 2 for s in target_sites):
        observables["spin_excitations"] = spin_excitation_operator(space)

    def reduced(rho: np.ndarray) -> DensityMatrix:
        return partial_trace(DensityMatrix(space, rho, validate=False), target_sites)

    for target in targets:
        observables[f"F_{target.label}"] = lambda rho, t=target: fidelity(reduced(rho), t)
        observables[f"P_{target.label}"] = lambda rho, t=target: population_overlap(reduced(rho), t)
    return observables


@dataclass
class ProtocolRun:
    series: TimeSeries
    checkpoints: list[CheckpointResult]


def run(
    schedule: ProtocolSchedule,
    rho0: DensityMatrix,
    cfg: IntegratorConfig | None = None,
    extra_observables: Mapping[str, Observable] | None = None,
) -> ProtocolRun:
    """Evolve through every segment in order, checking fidelity bands at segment ends."""
    cfg = cfg or IntegratorConfig()
    w = schedule.omega0_angular_khz
    targets = {c.target.label: c.target for c in schedule.checkpoints}
    observables = target_observables(schedule.space, schedule.target_sites, list(targets.values()))
    observables.update(extra_observables or {})
    by_segment: dict[int, list[Checkpoint]] = {}
    for cp in schedule.checkpoints:
        by_segment.setdefault(cp.segment, []).append(cp)

    series: TimeSeries | None = None
    results: list[CheckpointResult] = []
    state = rho0
    t_ms = 0.0
    for idx, seg in enumerate(schedule.segments):
        t0 = ms_to_omega0_time(t_ms, w)
        t1 = ms_to_omega0_time(t_ms + seg.duration_ms, w)
        logger.info(f"Segment {seg.label} ({seg.kind}): {t_ms:.4g} -> {t_ms + seg.duration_ms:.4g} ms, gamma = {seg.gamma:.4g}")
        part = evolve(seg.model, state, t1, cfg, observables, omega0_angular_khz=w, t_start=t0)
        t_ms += seg.duration_ms
        part.boundaries.append((t_ms, seg.label))
        series = part if series is None else series.extend(part)
        state = part.final_state
        for cp in by_segment.get(idx, []):
            reduced = partial_trace(state, schedule.target_sites)
            value = fidelity(reduced, cp.target)
            passed = abs(value - cp.band.expected) <= cp.band.tolerance
            logger.info(f"Checkpoint {cp.band.label} at {t_ms:.4g} ms: F = {value:.5f} (expected {cp.band.expected} +/- {cp.band.tolerance})")
            results.append(
                CheckpointResult(
                    label=cp.band.label,
                    value=value,
                    expected=cp.band.expected,
                    tolerance=cp.band.tolerance,
                    passed=passed,
                    time_ms=t_ms,
                )
            )
    return ProtocolRun(series=series, checkpoints=results)


def initial_for_schedule(schedule: ProtocolSchedule, p: ETParams, spec: InitialStateSpec | None = None) -> DensityMatrix:
    return build_initial(spec or InitialStateSpec(), p, schedule.space)


@dataclass
class FidelityPoint:
    n_bar: float
    delta_e: float
    gamma: float
    fidelity: float
    population_overlap: float
    series: TimeSeries | None = None


def boson_w_delta_e_policy(n_bar: float) -> int:
    """Resonance order: omega0 at zero temperature, 2 omega0 once the bath is warm."""
    return 1 if n_bar == 0 else 2


def run_boson_w(
    p: ETParams,
    n_modes: int,
    j: float,
    n_bar_grid: Sequence[float],
    n_c: int = 12,
    n_t: int = 4,
    duration_ms: float = 10.0,
    cfg: IntegratorConfig | None = None,
    delta_e_policy: Callable[[float], int] = boson_w_delta_e_policy,
    workers: int | None = None,
) -> list[FidelityPoint]:
    """Steady boson W fidelity for each bath temperature; gamma = 2 sqrt(N) J FC."""
    target = TargetState.boson_w(n_modes, n_t)
    sites = _target_sites(n_modes)

    def point(n_bar: float) -> FidelityPoint:
        order = delta_e_policy(n_bar)
        params = p.with_delta_e(order * p.omega0)
        gamma = 2.0 * math.sqrt(n_modes) * abs(j) * franck_condon_factor(p.g_tilde, order)
        h, modes = build_boson_w(params, n_modes, j, n_t, n_c)
        model = LindbladModel(h, thermal_channels(modes, BathParams(gamma=gamma, n_bar=n_bar)))
        spec = InitialStateSpec(boson_init="displaced_thermal", n0=n_bar, target_init="thermal")
        rho0 = build_initial(spec, params, h.space)
        t_final = ms_to_omega0_time(duration_ms, p.omega0_angular_khz)
        series = evolve(model, rho0, t_final, cfg, target_observables(h.space, sites, [target]), p.omega0_angular_khz)
        reduced = partial_trace(series.final_state, sites)
        logger.info(f"Boson W, n_bar = {n_bar}: F = {fidelity(reduced, target):.4f}")
        return FidelityPoint(n_bar, params.delta_e, gamma, fidelity(reduced, target), population_overlap(reduced, target), series)

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        return list(pool.map(point, n_bar_grid))


def ghz_gamma(p: ETParams) -> float:
    """Twice the GHZ effective Rabi frequency, V g e^{-g^2/2} / sqrt 2 at the scenario's order."""
    return 2.0 * abs(effective_rabi(p.v, p.g_tilde, 1 / math.sqrt(2), resonance_order(p)))


def run_ghz(
    p: ETParams,
    gp: GHZParams,
    n_bar_grid: Sequence[float],
    n_c: int = 12,
    duration_ms: float = 20.0,
    cfg: IntegratorConfig | None = None,
    gamma: float | None = None,
    workers: int | None = None,
) -> list[FidelityPoint]:
    """GHZ fidelity after ``duration_ms`` from |D,0> and polarized targets, per bath temperature."""
    if gp.n_targets not in (2, 4):
        raise ScheduleError(f"GHZ runs support 2 or 4 target qubits, got {gp.n_targets}.")
    target = TargetState.ghz(gp.n_targets, sign=-1)
    sites = _target_sites(gp.n_targets)
    rate = ghz_gamma(p) if gamma is None else gamma
    h = build_ghz(p, gp, n_c)

    def point(n_bar: float) -> FidelityPoint:
        model = LindbladModel(h, thermal_channels(_damped_mode(h.space), BathParams(gamma=rate, n_bar=n_bar)))
        spec = InitialStateSpec(
            boson_init="displaced_thermal",
            n0=n_bar,
            target_init="all_up" if gp.polarization == "up" else "all_down",
        )
        rho0 = build_initial(spec, p, h.space)
        t_final = ms_to_omega0_time(duration_ms, p.omega0_angular_khz)
        series = evolve(model, rho0, t_final, cfg, target_observables(h.space, sites, [target]), p.omega0_angular_khz)
        reduced = partial_trace(series.final_state, sites)
        logger.info(f"GHZ, n_bar = {n_bar}: F = {fidelity(reduced, target):.4f}")
        return FidelityPoint(n_bar, p.delta_e, rate, fidelity(reduced, target), population_overlap(reduced, target), series)

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        return list(pool.map(point, n_bar_grid))


def coupling_summary_khz(network: SpinNetwork, omega0_angular_khz: float) -> dict:
    """delta_J and J_res of a network in kHz, whatever units it was given in."""
    network = network.in_omega0(omega0_angular_khz)
    return {
        "delta_j_khz": omega0_to_khz(network.delta_j, omega0_angular_khz),
        "j_res_khz": omega0_to_khz(network.j_res, omega0_angular_khz),
    }
