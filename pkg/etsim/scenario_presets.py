"""Built-in scenario presets, one per reproduced figure or appendix."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .common_utils import TWO_PI, khz_to_omega0
from .couplings_utils import measured_couplings_khz
from .models import (
    BathParams,
    CheckpointBand,
    ETParams,
    GHZParams,
    NoiseSpec,
    ScenarioConfig,
    ScheduleParams,
    SpinNetwork,
    SweepParams,
)
from .reduced_model import effective_rabi


@dataclass(frozen=True)
class Preset:
    scenario: str
    anchor: str
    description: str
    build: Callable[[], ScenarioConfig]


def _fig2() -> ScenarioConfig:
    return ScenarioConfig(
        scenario="fig2",
        description="Transfer rate |lambda~| of the three-level model against gamma / V_e.",
        et=ETParams(delta_e=1.0, g=1.0, v=0.01),
        bath=BathParams(gamma=0.01),
        sweep=SweepParams(ratio_min=0.01, ratio_max=100.0, ratio_points=81),
        checkpoints=[
            CheckpointBand(label="argmax_gamma_over_ve", expected=2.0, tolerance=0.5),
            CheckpointBand(label="slope_low_gamma", expected=1.0, tolerance=0.1),
            CheckpointBand(label="slope_high_gamma", expected=-1.0, tolerance=0.1),
        ],
    )


def _fig3b() -> ScenarioConfig:
    return ScenarioConfig(
        scenario="fig3b",
        description="Hybrid W_4^2 preparation: pump, pi pulse with g flipped, pump.",
        et=ETParams(delta_e=1.0, g=1.0, v=0.0, omega0_angular_khz=TWO_PI * 20.0),
        bath=BathParams(gamma=0.0),
        schedule=ScheduleParams(scheme="hybrid", n_targets=4, m_excitations=2, j=0.025, tau1_ms=3.0, tau2_ms=1e-3),
        n_cutoff=12,
        sample_dt_ms=0.05,
        checkpoints=[
            CheckpointBand(label="W_4^1", expected=0.998, tolerance=0.005, time_ms=3.0),
            CheckpointBand(label="W_4^2", expected=0.995, tolerance=0.005, time_ms=6.001),
        ],
    )


def _fig4b() -> ScenarioConfig:
    return ScenarioConfig(
        scenario="fig4b",
        description="Fully dissipative W_4^2 preparation with an ET repump at reversed Delta E.",
        et=ETParams(delta_e=1.0, g=1.0, v=0.0, omega0_angular_khz=TWO_PI * 20.0),
        bath=BathParams(gamma=0.0),
        schedule=ScheduleParams(
            scheme="dissipative",
            n_targets=4,
            m_excitations=2,
            j=0.025,
            tau1_ms=3.0,
            tau2_ms=3.0,
            repump_v=0.05,
            repump_couplings_on=False,
        ),
        n_cutoff=12,
        sample_dt_ms=0.05,
        checkpoints=[
            CheckpointBand(label="p_donor_after_repump_1", expected=1.0, tolerance=0.02, time_ms=6.0),
            CheckpointBand(label="W_4^2", expected=0.993, tolerance=0.005, time_ms=9.0),
        ],
    )


def _fig5() -> ScenarioConfig:
    return ScenarioConfig(
        scenario="fig5",
        description="Steady-state donor population at resonant Delta E = n omega0 for three bath temperatures.",
        et=ETParams(delta_e=1.0, g=1.0, v=0.01),
        bath=BathParams(gamma=0.0),
        sweep=SweepParams(n_bar_grid=[0.0, 0.05, 0.1], delta_e_orders=[1, 2, 3, 4, 5, 6]),
        n_cutoff=14,
        checkpoints=[CheckpointBand(label="optimum_order_nbar_0.05", expected=2.0, tolerance=1.0)],
    )


def _fig6() -> ScenarioConfig:
    w = TWO_PI * 10.0
    measured = measured_couplings_khz()
    row = measured[0, 1:]
    return ScenarioConfig(
        scenario="fig6",
        description="Seven-ion W_4^2 experiment with measured couplings, counter-rotating terms and heating.",
        et=ETParams(delta_e=2.0, g=1.0, v=0.0, omega0_angular_khz=w),
        bath=BathParams(gamma=0.07, n_bar=0.05),
        network=SpinNetwork(
            n_targets=4,
            j=[khz_to_omega0(x, w) for x in row],
            j_matrix=measured.tolist(),
            j_matrix_units="khz",
            b_field=0.6,
            include_counter_rotating=True,
        ),
        noise=NoiseSpec(include_counter_rotating=True, b_field=0.6, n_bar=0.05),
        schedule=ScheduleParams(
            scheme="hybrid",
            n_targets=4,
            m_excitations=2,
            j=khz_to_omega0(0.4, w),
            tau1_ms=5.0,
            tau2_ms=1e-3,
            gamma_override=0.07,
        ),
        n_cutoff=12,
        sample_dt_ms=0.05,
        checkpoints=[
            CheckpointBand(label="W_4^1", expected=0.994, tolerance=0.01, time_ms=5.0),
            CheckpointBand(label="W_4^2", expected=0.979, tolerance=0.01, time_ms=10.001),
        ],
    )


def _single_site_comparison(scenario: str, description: str, band: CheckpointBand) -> ScenarioConfig:
    et = ETParams(delta_e=1.0, g=1.0, v=0.01)
    v_e = abs(effective_rabi(et.v, et.g_tilde))
    return ScenarioConfig(
        scenario=scenario,
        description=description,
        et=et,
        bath=BathParams(gamma=v_e),
        n_cutoff=10,
        duration_ms=16.0,
        sample_dt_ms=0.1,
        checkpoints=[band],
    )


def _fig7() -> ScenarioConfig:
    return _single_site_comparison(
        "fig7",
        "Full single-site dynamics projected on |D,0>, |A,1>, |A,0> against the three-level model.",
        CheckpointBand(label="max_population_deviation", expected=0.0, tolerance=0.02),
    )


def _fig8() -> ScenarioConfig:
    return _single_site_comparison(
        "fig8",
        "Coherences |rho13| and |rho23| neglected by the three-level model.",
        CheckpointBand(label="max_coherence", expected=0.0, tolerance=0.05),
    )


def _app_c() -> ScenarioConfig:
    return ScenarioConfig(
        scenario="appC",
        description="Steady-state two-mode boson W (triplet) state at three bath temperatures.",
        et=ETParams(delta_e=1.0, g=1.0, v=0.0, omega0_angular_khz=TWO_PI * 10.0),
        bath=BathParams(gamma=2.0 * math.sqrt(2) * 0.05 * math.exp(-0.5)),
        network=SpinNetwork(n_targets=2, j=[0.05, 0.05]),
        sweep=SweepParams(n_bar_grid=[0.0, 0.05, 0.1]),
        n_cutoff=12,
        target_cutoff=4,
        duration_ms=10.0,
        sample_dt_ms=0.05,
        checkpoints=[
            CheckpointBand(label="F_nbar_0", expected=0.996, tolerance=0.01),
            CheckpointBand(label="F_nbar_0.05", expected=0.904, tolerance=0.01),
            CheckpointBand(label="F_nbar_0.1", expected=0.819, tolerance=0.01),
        ],
    )


def _app_e() -> ScenarioConfig:
    return ScenarioConfig(
        scenario="appE",
        description="Dissipative two-qubit GHZ state through string couplings, with and without heating.",
        et=ETParams(delta_e=1.4, g=0.5, v=0.008, omega0_angular_khz=TWO_PI * 25.0),
        bath=BathParams(gamma=0.0),
        ghz=GHZParams(e0=0.2, k=0.04, n_half=1, polarization="down"),
        sweep=SweepParams(n_bar_grid=[0.0, 0.05]),
        n_cutoff=12,
        duration_ms=20.0,
        sample_dt_ms=0.05,
        checkpoints=[
            CheckpointBand(label="F_nbar_0", expected=0.972, tolerance=0.005, time_ms=20.0),
            CheckpointBand(label="F_nbar_0.05", expected=0.951, tolerance=0.01, time_ms=20.0),
        ],
    )


PRESETS: dict[str, Preset] = {
    p.scenario: p
    for p in [
        Preset("fig2", "Fig. 2(b)", "Reduced-model transfer rate against gamma / V_e.", _fig2),
        Preset("fig3b", "Fig. 3(b)", "Hybrid W_4^2 scheme, fidelity after each pump.", _fig3b),
        Preset("fig4b", "Fig. 4(b)", "Fully dissipative W_4^2 scheme with ET repump.", _fig4b),
        Preset("fig5", "Fig. 5 / Appendix B", "Steady donor population over resonant Delta E.", _fig5),
        Preset("fig6", "Fig. 6(b)", "Seven-ion experiment with measured couplings and heating.", _fig6),
        Preset("fig7", "Fig. 7 / Appendix A", "Full vs three-level population dynamics.", _fig7),
        Preset("fig8", "Fig. 8 / Appendix A", "Coherences neglected by the three-level model.", _fig8),
        Preset("appC", "Appendix C", "Boson triplet W state at n_bar = 0, 0.05, 0.1.", _app_c),
        Preset("appE", "Appendix E", "Two-qubit GHZ state at n_bar = 0 and 0.05.", _app_e),
    ]
}


def preset_config(scenario: str) -> ScenarioConfig:
    try:
        return PRESETS[scenario].build()
    except KeyError:
        raise KeyError(f"Unknown scenario preset {scenario!r}; choose one of {', '.join(PRESETS)}.") from None
