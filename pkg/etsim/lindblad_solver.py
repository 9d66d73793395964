"""Lindblad master equation: right-hand side, adaptive integration and steady states."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.integrate import DOP853, RK45

from .common_utils import default_workers, dimension_guard, omega0_time_to_ms
from .hilbert_utils import (
    DensityMatrix,
    HilbertSpaceError,
    Operator,
    SpaceSpec,
    embed,
    fock_ops,
    max_norm,
    pauli_ops,
)
from .model_builders import build_single_site_et, et_space, franck_condon_factor
from .models import BathParams, ETParams, IntegratorConfig, QualityFlags

logger = logging.getLogger(__name__)

FINAL_TRACE_TOL = 1e-7
FINAL_POSITIVITY_TOL = -1e-6
STEADY_RESIDUAL_TOL = 1e-8
DEGENERACY_RTOL = 1e-10

Observable = Operator | Callable[[np.ndarray], float]

_STEPPERS = {"DOP853": DOP853, "RK45": RK45}


class IntegrationError(RuntimeError):
    """Raised when the adaptive stepper fails or the state stops being finite."""

    def __init__(self, message: str, t_reached: float):
        self.t_reached = t_reached
        super().__init__(f"{message} (reached t = {t_reached:.6g} / omega0)")


class SteadyStateError(RuntimeError):
    """Raised when no steady state could be established."""


class DegenerateSteadyStateError(SteadyStateError):
    """Raised when the Liouvillian has more than one zero mode."""

    def __init__(self, degeneracy: int):
        self.degeneracy = degeneracy
        super().__init__(f"Steady state is not unique: {degeneracy} zero singular values.")


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus (collapse operator, rate) channels sharing one space."""

    h: Operator
    channels: tuple[tuple[Operator, float], ...] = ()

    def __init__(self, h: Operator, channels: Iterable[tuple[Operator, float]] = ()):
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "channels", tuple((c, float(r)) for c, r in channels))
        for c, rate in self.channels:
            if c.space != h.space:
                raise HilbertSpaceError("Collapse operator and Hamiltonian live on different spaces.")
            if rate < 0:
                raise ValueError(f"Channel rates must be non-negative, got {rate}.")

    @property
    def space(self) -> SpaceSpec:
        return self.h.space

    @cached_property
    def _active(self) -> list[tuple[np.ndarray, np.ndarray, float]]:
        return [(c.matrix, c.matrix.conj().T, r) for c, r in self.channels if r > 0]

    @cached_property
    def _h_eff(self) -> np.ndarray:
        # H - (i/2) sum r c^dag c; the anticommutator folds into this non-Hermitian part
        h_eff = np.array(self.h.matrix, dtype=complex)
        for c, c_dag, r in self._active:
            h_eff = h_eff - 0.5j * r * (c_dag @ c)
        return h_eff

    def with_hamiltonian(self, h: Operator) -> "LindbladModel":
        return LindbladModel(h, self.channels)


def thermal_channels(modes: Operator | Sequence[Operator], bath: BathParams) -> list[tuple[Operator, float]]:
    """gamma (n_bar + 1) on a and gamma n_bar on a^dagger for every damped mode."""
    modes = [modes] if isinstance(modes, Operator) else list(modes)
    channels: list[tuple[Operator, float]] = []
    for a in modes:
        channels.append((a, bath.gamma * (bath.n_bar + 1.0)))
        if bath.n_bar > 0:
            channels.append((a.dag(), bath.gamma * bath.n_bar))
    return channels


def _rhs_matrix(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    h_eff = model._h_eff
    out = -1j * (h_eff @ rho - rho @ h_eff.conj().T)
    for c, c_dag, r in model._active:
        out += r * (c @ rho @ c_dag)
    return 0.5 * (out + out.conj().T)


def rhs(model: LindbladModel, rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """d rho / dt = -i[H, rho] + sum r (c rho c^dag - {c^dag c, rho}/2), matrix-free."""
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    d = model.space.dim
    if mat.shape != (d, d):
        raise HilbertSpaceError(f"State of shape {mat.shape} does not match model dimension {d}.")
    return _rhs_matrix(model, mat)


@dataclass
class TimeSeries:
    """Sampled observables of one trajectory; times in 1/omega0 and in ms."""

    times_omega0: np.ndarray
    times_ms: np.ndarray
    columns: dict[str, np.ndarray]
    final_state: DensityMatrix
    quality: QualityFlags = field(default_factory=QualityFlags)
    n_steps: int = 0
    boundaries: list[tuple[float, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.times_omega0) <= 0):
            raise ValueError("TimeSeries times must be strictly increasing.")
        for name, col in self.columns.items():
            if len(col) != len(self.times_omega0):
                raise ValueError(f"Column {name!r} has {len(col)} samples, expected {len(self.times_omega0)}.")

    def __len__(self) -> int:
        return len(self.times_omega0)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def value_at_ms(self, name: str, t_ms: float) -> float:
        idx = int(np.argmin(np.abs(self.times_ms - t_ms)))
        return float(self.columns[name][idx])

    def extend(self, other: "TimeSeries") -> "TimeSeries":
        """Concatenate a later trajectory, dropping its first sample when it repeats our last."""
        start = 1 if len(other) and len(self) and other.times_omega0[0] <= self.times_omega0[-1] else 0
        quality = QualityFlags(
            trace_ok=self.quality.trace_ok and other.quality.trace_ok,
            positivity_ok=self.quality.positivity_ok and other.quality.positivity_ok,
            converged=self.quality.converged and other.quality.converged,
            messages=self.quality.messages + other.quality.messages,
        )
        return TimeSeries(
            times_omega0=np.concatenate([self.times_omega0, other.times_omega0[start:]]),
            times_ms=np.concatenate([self.times_ms, other.times_ms[start:]]),
            columns={k: np.concatenate([v, other.columns[k][start:]]) for k, v in self.columns.items()},
            final_state=other.final_state,
            quality=quality,
            n_steps=self.n_steps + other.n_steps,
            boundaries=self.boundaries + other.boundaries,
        )


def _evaluate(observable: Observable, rho: np.ndarray) -> float:
    if isinstance(observable, Operator):
        return float(np.real(np.trace(observable.matrix @ rho)))
    return float(observable(rho))


def _sample_times(t0: float, t_final: float, dt: float) -> np.ndarray:
    n = int(np.floor((t_final - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(n + 1)
    if t_final - times[-1] > 1e-9 * max(1.0, abs(t_final)):
        times = np.append(times, t_final)
    else:
        times[-1] = t_final
    return times


def quality_of(rho: np.ndarray, label: str = "final state") -> QualityFlags:
    flags = QualityFlags()
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > FINAL_TRACE_TOL:
        flags.trace_ok = False
        flags.messages.append(f"{label}: trace {tr:.10f}")
    lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    if lam < FINAL_POSITIVITY_TOL:
        flags.positivity_ok = False
        flags.messages.append(f"{label}: min eigenvalue {lam:.3e}")
    return flags


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    t_final: float,
    cfg: IntegratorConfig | None = None,
    observables: Mapping[str, Observable] | None = None,
    omega0_angular_khz: float = 1.0,
    t_start: float = 0.0,
) -> TimeSeries:
    """Integrate from ``t_start`` to ``t_final`` (1/omega0), sampling observables every cfg.sample_dt.

    Only the sampled observables are stored; the trajectory itself is not.
    """
    cfg = cfg or IntegratorConfig()
    observables = dict(observables or {})
    if rho0.space != model.space:
        raise HilbertSpaceError("Initial state and model live on different spaces.")
    if t_final < t_start:
        raise ValueError(f"t_final {t_final} precedes t_start {t_start}.")
    d = model.space.dim
    samples = _sample_times(t_start, t_final, cfg.sample_dt) if t_final > t_start else np.array([t_start])
    columns = {name: np.empty(len(samples)) for name in observables}

    def record(idx: int, rho: np.ndarray) -> None:
        for name, obs in observables.items():
            columns[name][idx] = _evaluate(obs, rho)

    y0 = np.array(rho0.matrix, dtype=complex).ravel()
    record(0, y0.reshape(d, d))
    final = y0.reshape(d, d)
    n_steps = 0
    if t_final > t_start:
        stepper = _STEPPERS[cfg.method](
            lambda t, y: _rhs_matrix(model, y.reshape(d, d)).ravel(),
            t_start,
            y0,
            t_final,
            rtol=cfg.rtol,
            atol=cfg.atol,
            max_step=cfg.max_step if cfg.max_step is not None else np.inf,
        )
        idx = 1
        while stepper.status == "running":
            message = stepper.step()
            n_steps += 1
            if stepper.status == "failed":
                raise IntegrationError(f"Step-size underflow: {message}", stepper.t)
            if not np.all(np.isfinite(stepper.y)):
                raise IntegrationError("Non-finite density matrix", stepper.t)
            if idx < len(samples) and samples[idx] <= stepper.t:
                dense = stepper.dense_output()
                while idx < len(samples) and samples[idx] <= stepper.t:
                    rho = dense(samples[idx]).reshape(d, d)
                    record(idx, 0.5 * (rho + rho.conj().T))
                    idx += 1
        final = stepper.y.reshape(d, d)
        logger.debug(f"Integrated {t_start:.4g} -> {t_final:.4g} / omega0 in {n_steps} steps (d = {d}).")
    final = 0.5 * (final + final.conj().T)
    quality = quality_of(final)
    for msg in quality.messages:
        logger.warning(f"Quality check failed: {msg}")
    return TimeSeries(
        times_omega0=samples,
        times_ms=omega0_time_to_ms(samples, omega0_angular_khz),
        columns=columns,
        final_state=DensityMatrix(model.space, final, validate=False),
        quality=quality,
        n_steps=n_steps,
    )


def liouvillian(model: LindbladModel) -> np.ndarray:
    """Dense d^2 x d^2 superoperator acting on row-major vec(rho)."""
    h = model.h.matrix
    eye = np.eye(model.space.dim, dtype=complex)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c, c_dag, r in model._active:
        cdc = c_dag @ c
        sup += r * (np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T))
    return sup


def _normalized(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def steady_state(
    model: LindbladModel,
    method: str = "auto",
    rho0: DensityMatrix | None = None,
    t_max: float = 1e6,
    chunk: float = 500.0,
    residual_tol: float = 1e-9,
) -> DensityMatrix:
    """Fixed point of the master equation.

    ``dense`` takes the smallest right singular vector of the Liouvillian
    (d^2 must fit the dimension guard); ``long_time`` integrates from ``rho0``
    until the right-hand side drops below ``residual_tol``.
    """
    d = model.space.dim
    if method == "auto":
        method = "dense" if d * d <= dimension_guard() else "long_time"
    if method == "dense":
        if d * d > dimension_guard():
            raise SteadyStateError(f"Dense Liouvillian of size {d * d} exceeds the dimension guard.")
        _, sv, vh = np.linalg.svd(liouvillian(model))
        zero_modes = int(np.sum(sv <= DEGENERACY_RTOL * sv[0]))
        if zero_modes > 1:
            raise DegenerateSteadyStateError(zero_modes)
        rho = _normalized(vh[-1].conj().reshape(d, d))
    elif method == "long_time":
        rho = np.asarray(rho0.matrix if rho0 is not None else np.eye(d) / d, dtype=complex)
        cfg = IntegratorConfig(rtol=1e-10, atol=1e-12, sample_dt=chunk)
        t = 0.0
        while max_norm(_rhs_matrix(model, rho)) >= residual_tol:
            if t >= t_max:
                raise SteadyStateError(
                    f"No steady state within t = {t_max:g} / omega0; residual {max_norm(_rhs_matrix(model, rho)):.3e}."
                )
            state = DensityMatrix(model.space, rho, validate=False)
            rho = evolve(model, state, t + chunk, cfg, t_start=t).final_state.matrix
            t += chunk
        rho = _normalized(np.array(rho))
    else:
        raise ValueError(f"Unknown steady-state method {method!r}.")
    residual = max_norm(_rhs_matrix(model, rho))
    if residual >= STEADY_RESIDUAL_TOL:
        raise SteadyStateError(f"Steady-state residual {residual:.3e} above {STEADY_RESIDUAL_TOL:g}.")
    return DensityMatrix(model.space, rho, validate=False)


def donor_population(rho: DensityMatrix | np.ndarray, space: SpaceSpec, control: int = 0) -> float:
    _, _, _, sp, sm = pauli_ops()
    mat = rho.matrix if isinstance(rho, DensityMatrix) else rho
    return float(np.real(np.trace(embed(sp @ sm, control, space).matrix @ mat)))


@dataclass(frozen=True)
class SweepPoint:
    order: int
    delta_e: float
    n_bar: float
    gamma: float
    p_donor: float


@dataclass
class SweepTable:
    points: list[SweepPoint]

    def curve(self, n_bar: float) -> list[SweepPoint]:
        return sorted((p for p in self.points if p.n_bar == n_bar), key=lambda p: p.order)

    def optimum(self, n_bar: float) -> SweepPoint:
        return min(self.curve(n_bar), key=lambda p: p.p_donor)

    def n_bars(self) -> list[float]:
        return sorted({p.n_bar for p in self.points})


def delta_e_sweep(
    p: ETParams,
    n_bar_grid: Sequence[float],
    orders: Sequence[int],
    n_c: int = 14,
    gamma: float | Callable[[int], float] | None = None,
    method: str = "auto",
    workers: int | None = None,
) -> SweepTable:
    """Steady-state donor population of the single-site model at resonant Delta E = n omega0.

    ``gamma`` is a fixed rate, a function of the order, or None for the
    first-order 2 V_e shared by every order.
    """
    if any(n < 1 for n in orders):
        raise ValueError("Resonance orders must be positive integers.")

    def rate_for(order: int) -> float:
        if gamma is None:
            return 2.0 * abs(p.v) * franck_condon_factor(p.g_tilde, 1)
        return float(gamma(order)) if callable(gamma) else float(gamma)

    space = et_space(n_c)
    a = embed(fock_ops(n_c)[0], 1, space)

    def point(order: int, n_bar: float) -> SweepPoint:
        params = p.with_delta_e(order * p.omega0)
        rate = rate_for(order)
        model = LindbladModel(build_single_site_et(params, n_c), thermal_channels(a, BathParams(gamma=rate, n_bar=n_bar)))
        rho = steady_state(model, method=method)
        value = donor_population(rho, space)
        logger.info(f"Delta E = {order} omega0, n_bar = {n_bar}: P_D,ss = {value:.4e}")
        return SweepPoint(order=order, delta_e=params.delta_e, n_bar=n_bar, gamma=rate, p_donor=value)

    grid = [(order, n_bar) for n_bar in n_bar_grid for order in orders]
    with ThreadPoolExecutor(max_workers=workers or default_workers()) as pool:
        points = list(pool.map(lambda args: point(*args), grid))
    return SweepTable(points)
