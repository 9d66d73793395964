"""Pydantic models for physical parameters, scenario configuration and run reports.

Energies and rates are in units of omega0 unless a field alias says otherwise;
config files use the aliased (unit-suffixed) names.
"""

from __future__ import annotations

import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .common_utils import TWO_PI, khz_to_omega0


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class ETParams(_Record):
    """Single-site electron-transfer parameters."""

    delta_e: float = Field(..., alias="delta_e_omega0", description="Donor-acceptor energy splitting.")
    g: float = Field(..., alias="g_omega0", description="Spin-dependent displacement coupling (sign may alternate).")
    v: float = Field(0.0, alias="v_omega0", description="Electronic coupling V of H1 = V sigma_x.")
    omega0: float = Field(1.0, gt=0, alias="omega0_omega0", description="Boson frequency; defines the energy unit.")
    omega0_angular_khz: float = Field(
        TWO_PI * 20.0,
        gt=0,
        alias="omega0_angular_khz",
        description="omega0 in rad/ms, used only for millisecond time axes.",
    )

    @property
    def g_tilde(self) -> float:
        return self.g / self.omega0

    @property
    def reorganization_energy(self) -> float:
        return self.g**2 / self.omega0

    def with_flipped_g(self) -> "ETParams":
        return self.model_copy(update={"g": -self.g})

    def with_delta_e(self, delta_e: float) -> "ETParams":
        return self.model_copy(update={"delta_e": delta_e})


class BathParams(_Record):
    """Sympathetic-cooling bath: channels gamma(n_bar+1) on a and gamma n_bar on a^dagger."""

    gamma: float = Field(..., ge=0, alias="gamma_omega0", description="Boson damping rate.")
    n_bar: float = Field(0.0, ge=0, description="Mean thermal occupation of the bath.")


class SpinNetwork(_Record):
    """Couplings from the control qubit (index 0) to the targets, plus the optional full matrix."""

    n_targets: int = Field(..., ge=1)
    j: List[float] = Field(..., alias="j_omega0", description="Control-to-target couplings J_i, always in omega0 units.")
    j_matrix: Optional[List[List[float]]] = Field(
        default=None,
        description="Full symmetric coupling matrix over control + targets (control first).",
    )
    j_matrix_units: Literal["omega0", "khz"] = "omega0"
    b_field: float = Field(0.0, alias="b_field_omega0", description="Transverse field B on every qubit.")
    include_counter_rotating: bool = False

    @model_validator(mode="after")
    def _check_shapes(self) -> "SpinNetwork":
        if len(self.j) != self.n_targets:
            raise ValueError(f"j has {len(self.j)} entries but n_targets = {self.n_targets}")
        if not all(math.isfinite(x) for x in self.j):
            raise ValueError("j entries must be finite")
        if self.j_matrix is not None:
            mat = np.asarray(self.j_matrix, dtype=float)
            size = self.n_targets + 1
            if mat.shape != (size, size):
                raise ValueError(f"j_matrix must be {size}x{size}, got {mat.shape}")
            if np.max(np.abs(mat - mat.T)) > 1e-9:
                raise ValueError("j_matrix must be symmetric")
            if np.max(np.abs(np.diag(mat))) != 0.0:
                raise ValueError("j_matrix must have a zero diagonal")
        return self

    def coupling_matrix(self, omega0_angular_khz: float | None = None) -> np.ndarray:
        """Full matrix in omega0 units; built from ``j`` when no matrix was given."""
        if self.j_matrix is None:
            mat = np.zeros((self.n_targets + 1, self.n_targets + 1))
            mat[0, 1:] = self.j
            mat[1:, 0] = self.j
            return mat
        mat = np.asarray(self.j_matrix, dtype=float)
        if self.j_matrix_units == "khz":
            if omega0_angular_khz is None:
                raise ValueError("omega0_angular_khz is required to convert a kHz coupling matrix")
            mat = khz_to_omega0(mat, omega0_angular_khz)
        return mat

    def in_omega0(self, omega0_angular_khz: float) -> "SpinNetwork":
        """The same network with ``j`` and ``j_matrix`` both in omega0 units."""
        if self.j_matrix is None or self.j_matrix_units == "omega0":
            return self
        mat = self.coupling_matrix(omega0_angular_khz)
        return self.model_copy(
            update={"j": [float(x) for x in mat[0, 1:]], "j_matrix": mat.tolist(), "j_matrix_units": "omega0"}
        )

    @property
    def delta_j(self) -> float:
        """Spread of the control row, in the units of ``j_matrix`` when one is given."""
        row = np.asarray(self.j_matrix, dtype=float)[0, 1:] if self.j_matrix is not None else np.asarray(self.j)
        return float(np.max(row) - np.min(row))

    @property
    def j_res(self) -> float:
        if self.j_matrix is None or self.n_targets < 2:
            return 0.0
        block = np.abs(np.asarray(self.j_matrix, dtype=float)[1:, 1:])
        return float(np.max(block))


class MSDriveSpec(_Record):
    """Molmer-Sorensen drive: per-ion Rabi rates, Lamb-Dicke matrix, modes and phases."""

    rabi: List[float] = Field(..., description="Omega_i in angular kHz.")
    lamb_dicke: List[List[float]] = Field(..., description="eta_im, ions x modes.")
    mode_frequencies: List[float] = Field(..., description="omega_m in angular kHz.")
    mu: float = Field(..., description="Beat-note detuning in angular kHz.")
    spin_phases: Optional[List[float]] = None
    motional_phases: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> "MSDriveSpec":
        eta = np.asarray(self.lamb_dicke, dtype=float)
        if eta.shape != (len(self.rabi), len(self.mode_frequencies)):
            raise ValueError(
                f"lamb_dicke must be {len(self.rabi)}x{len(self.mode_frequencies)}, got {eta.shape}"
            )
        for name in ("spin_phases", "motional_phases"):
            phases = getattr(self, name)
            if phases is not None and len(phases) != len(self.rabi):
                raise ValueError(f"{name} needs one entry per ion")
        return self

    @property
    def dispersive(self) -> bool:
        detuning = np.min(np.abs(self.mu - np.asarray(self.mode_frequencies)))
        strength = np.max(np.abs(np.asarray(self.lamb_dicke) * np.asarray(self.rabi)[:, None]))
        return bool(detuning > 10.0 * strength)

    def phases_psi(self) -> np.ndarray:
        if self.motional_phases is None:
            return np.zeros(len(self.rabi))
        return np.asarray(self.motional_phases, dtype=float)


class GHZParams(_Record):
    """GHZ scheme couplings: E0 (sigma_z sigma_z and field) and k (string sigma_x products)."""

    e0: float = Field(..., gt=0, alias="e0_omega0")
    k: float = Field(..., gt=0, alias="k_omega0")
    n_half: int = Field(1, ge=1, description="N, half the number of target qubits.")
    polarization: Literal["up", "down"] = Field(
        "up", description="Initial polarization of all targets."
    )

    @property
    def n_targets(self) -> int:
        return 2 * self.n_half


class NoiseSpec(_Record):
    """Coupling imperfections of the realistic spin-hopping engineering."""

    delta_j: float = Field(0.0, ge=0, description="Coupling imbalance, in units of J.")
    j_res: float = Field(0.0, ge=0, description="Residual target-target coupling, in units of J.")
    include_counter_rotating: bool = False
    b_field: float = Field(0.0, alias="b_field_omega0")
    n_bar: float = Field(0.0, ge=0)
    seed: int = 0

    @property
    def is_ideal(self) -> bool:
        return self.delta_j == 0.0 and self.j_res == 0.0 and not self.include_counter_rotating and self.b_field == 0.0


class InitialStateSpec(_Record):
    control: Literal["donor", "acceptor"] = "donor"
    boson_init: Literal["ground_displaced", "displaced_thermal"] = "ground_displaced"
    n0: float = Field(0.0, ge=0, description="Thermal occupation of the displaced-thermal start.")
    target_init: Literal["all_down", "all_up", "all_vacuum", "thermal", "custom"] = "all_down"
    custom_target: Optional[List[float]] = Field(
        default=None, description="Real amplitudes of a custom target product/entangled state."
    )

    @model_validator(mode="after")
    def _check_custom(self) -> "InitialStateSpec":
        if self.target_init == "custom" and not self.custom_target:
            raise ValueError("custom_target is required when target_init = 'custom'")
        return self


class IntegratorConfig(_Record):
    rtol: float = Field(1e-8, gt=0)
    atol: float = Field(1e-10, gt=0)
    max_step: Optional[float] = Field(default=None, gt=0, description="Largest step in 1/omega0.")
    sample_dt: float = Field(5.0, gt=0, description="Sampling interval in 1/omega0.")
    method: Literal["DOP853", "RK45"] = "DOP853"


class ScheduleParams(_Record):
    """Multi-step Dicke protocol parameters."""

    scheme: Literal["hybrid", "dissipative"] = "hybrid"
    n_targets: int = Field(4, ge=1)
    m_excitations: int = Field(2, ge=1)
    j: float = Field(0.025, alias="j_omega0")
    tau1_ms: float = Field(3.0, gt=0)
    tau2_ms: float = Field(1e-3, gt=0)
    gamma_override: Optional[float] = Field(default=None, alias="gamma_override_omega0")
    repump_v: float = Field(0.05, alias="repump_v_omega0")
    repump_couplings_on: bool = False
    tail_ms: float = Field(0.0, ge=0, description="Extra integration after the last pump.")


class SweepParams(_Record):
    n_bar_grid: List[float] = Field(default_factory=lambda: [0.0, 0.05, 0.1])
    delta_e_orders: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    ratio_min: float = Field(0.01, gt=0)
    ratio_max: float = Field(100.0, gt=0)
    ratio_points: int = Field(81, ge=3)


class CheckpointBand(_Record):
    label: str
    expected: float
    tolerance: float = Field(..., ge=0)
    time_ms: Optional[float] = None


class OutputConfig(_Record):
    out_dir: Optional[str] = None
    prefix: Optional[str] = None


ScenarioId = Literal["fig2", "fig3b", "fig4b", "fig5", "fig6", "fig7", "fig8", "appC", "appE"]


class ScenarioConfig(_Record):
    """Complete, validated description of one scenario run."""

    scenario: ScenarioId
    description: str = ""
    et: ETParams
    bath: BathParams
    network: Optional[SpinNetwork] = None
    ghz: Optional[GHZParams] = None
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    initial: InitialStateSpec = Field(default_factory=InitialStateSpec)
    schedule: Optional[ScheduleParams] = None
    sweep: Optional[SweepParams] = None
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    n_cutoff: int = Field(12, ge=2)
    target_cutoff: int = Field(3, ge=2, description="Cutoff of each target boson mode.")
    sample_dt_ms: float = Field(0.05, gt=0)
    duration_ms: Optional[float] = Field(default=None, gt=0)
    couplings_csv: Optional[str] = None
    seed: int = 0
    checkpoints: List[CheckpointBand] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("checkpoints")
    @classmethod
    def _unique_labels(cls, value: List[CheckpointBand]) -> List[CheckpointBand]:
        labels = [c.label for c in value]
        if len(labels) != len(set(labels)):
            raise ValueError("checkpoint labels must be unique")
        return value

    @property
    def omega0_angular_khz(self) -> float:
        return self.et.omega0_angular_khz

    def parameter_echo(self) -> dict:
        """Physical parameters in omega0 units and SI (Hz, s)."""
        w = self.et.omega0_angular_khz * 1e3  # rad/s
        echo = {
            "omega0_rad_per_s": w,
            "omega0_hz": w / TWO_PI,
            "delta_e": {"omega0": self.et.delta_e, "hz": self.et.delta_e * w / TWO_PI},
            "g": {"omega0": self.et.g, "hz": self.et.g * w / TWO_PI},
            "v": {"omega0": self.et.v, "hz": self.et.v * w / TWO_PI},
            "gamma": {"omega0": self.bath.gamma, "per_s": self.bath.gamma * w},
            "n_bar": self.bath.n_bar,
            "n_cutoff": self.n_cutoff,
        }
        if self.schedule is not None:
            echo["j"] = {"omega0": self.schedule.j, "hz": self.schedule.j * w / TWO_PI}
            echo["tau1"] = {"ms": self.schedule.tau1_ms, "s": self.schedule.tau1_ms * 1e-3}
            echo["tau2"] = {"ms": self.schedule.tau2_ms, "s": self.schedule.tau2_ms * 1e-3}
        if self.ghz is not None:
            echo["e0"] = {"omega0": self.ghz.e0, "hz": self.ghz.e0 * w / TWO_PI}
            echo["k"] = {"omega0": self.ghz.k, "hz": self.ghz.k * w / TWO_PI}
        return echo


class CheckpointResult(BaseModel):
    label: str
    value: float
    expected: float
    tolerance: float
    passed: bool
    time_ms: Optional[float] = None


class QualityFlags(BaseModel):
    trace_ok: bool = True
    positivity_ok: bool = True
    converged: bool = True
    messages: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.trace_ok and self.positivity_ok and self.converged


class RunReport(BaseModel):
    """JSON report written next to every scenario's CSV output."""

    scenario: str
    checkpoints: List[CheckpointResult] = Field(default_factory=list)
    quality: QualityFlags = Field(default_factory=QualityFlags)
    wall_time_s: float = 0.0
    version: str
    seed: int
    created_at: str
    parameters: dict = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)
    results: dict = Field(default_factory=dict)

    @property
    def checkpoints_passed(self) -> bool:
        return all(c.passed for c in self.checkpoints)


class RunScenarioRequest(BaseModel):
    """Body of POST /scenarios/{scenario_id}/run."""

    n_cutoff: Optional[int] = Field(default=None, ge=2)
    rtol: Optional[float] = Field(default=None, gt=0)
    seed: Optional[int] = None
    strict: bool = False


class RunScenarioResponse(BaseModel):
    status: str = Field(..., description="Outcome indicator, e.g. 'accepted'.")
    message: str = Field(..., description="Human-readable explanation of the result.")
