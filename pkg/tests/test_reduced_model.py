import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etsim.common_utils import TWO_PI, ms_to_omega0_time
from etsim.hilbert_utils import DensityMatrix, embed, fock_ops
from etsim.lindblad_solver import LindbladModel, evolve, thermal_channels
from etsim.model_builders import build_single_site_et, franck_condon_factor
from etsim.models import BathParams, ETParams, IntegratorConfig
from etsim.reduced_model import (
    ReducedModel,
    ReducedModelError,
    dicke_reduced_prediction,
    dicke_step_rabi,
    effective_rabi,
    lambda_scan,
    optimal_gamma,
    project_full_state,
    projection_observables,
    reduced_model_for,
    single_site_basis,
    solve_reduced,
    transfer_rate,
    w_aggregate_rabi,
    w_state_pump_basis,
)

FC1 = math.exp(-0.5)


def build_params(v=0.01):
    """Helper: the resonant single-site setup, Delta E = omega0 and g = omega0."""
    return ETParams(delta_e=1.0, g=1.0, v=v)


@settings(max_examples=50, deadline=None)
@given(
    v=st.floats(1e-3, 1.0),
    gamma=st.floats(1e-3, 1.0),
    g=st.floats(-2.0, 2.0),
)
def test_determinant_and_stability(v, gamma, g):
    rm = ReducedModel(v_e=v, gamma=gamma, g_tilde=g)
    assert rm.determinant() == pytest.approx(-2 * v**2 * gamma, rel=1e-8, abs=1e-15)
    assert np.max(np.real(np.linalg.eigvals(rm.m_matrix))) < 0


def test_effective_rabi_values():
    assert effective_rabi(0.01, 1.0) == pytest.approx(-0.01 * FC1)
    assert effective_rabi(0.01, 1.0, 1 / math.sqrt(2)) == pytest.approx(-0.01 * FC1 / math.sqrt(2))
    assert effective_rabi(0.01, 1.0, order=2) == pytest.approx(-0.01 * FC1 / math.sqrt(2))


def test_dicke_step_rabi():
    j = 0.025
    assert dicke_step_rabi(4, 0, j, 1.0) == pytest.approx(2 * j * FC1)
    assert dicke_step_rabi(4, 1, j, 1.0) == pytest.approx(math.sqrt(6) * j * FC1)
    assert dicke_step_rabi(4, 4, j, 1.0) == 0.0
    with pytest.raises(ReducedModelError):
        dicke_step_rabi(4, 5, j, 1.0)


def test_w_aggregate_matches_first_dicke_step():
    assert w_aggregate_rabi([0.025] * 4, 1.0) == pytest.approx(dicke_step_rabi(4, 0, 0.025, 1.0))
    assert w_aggregate_rabi([0.03, 0.04], 1.0) == pytest.approx(0.05 * FC1)


def test_slow_eigenvalue_limits():
    v_e = 0.01
    weak = transfer_rate(ReducedModel(v_e, 1e-3 * v_e, 1.0))
    assert weak.lambda_tilde == pytest.approx(-0.5e-3 * v_e, rel=1e-2)
    strong_gamma = 1e3 * v_e
    strong = transfer_rate(ReducedModel(v_e, strong_gamma, 1.0))
    assert strong.lambda_tilde == pytest.approx(-2 * v_e**2 / strong_gamma, rel=1e-2)
    assert strong.rate == abs(strong.lambda_tilde)


def test_optimal_damping_is_about_twice_the_rabi_frequency():
    v_e = 0.01 * FC1
    ratio = optimal_gamma(v_e, 1.0) / v_e
    assert 1.5 <= ratio <= 2.5


def test_lambda_scan_power_laws():
    ratios, rates = lambda_scan(0.01, 1.0)
    assert len(ratios) == 81
    low = np.polyfit(np.log(ratios[:10]), np.log(rates[:10]), 1)[0]
    high = np.polyfit(np.log(ratios[-10:]), np.log(rates[-10:]), 1)[0]
    assert low == pytest.approx(1.0, abs=0.05)
    assert high == pytest.approx(-1.0, abs=0.05)


def test_transfer_rate_needs_positive_inputs():
    with pytest.raises(ReducedModelError):
        transfer_rate(ReducedModel(0.0, 0.01, 1.0))


def test_reduced_model_for_flags_invalid_regime(caplog):
    p = build_params()
    good = reduced_model_for(p, BathParams(gamma=0.01))
    assert good.valid
    assert good.v_e == pytest.approx(0.01 * FC1)
    with caplog.at_level(logging.WARNING):
        bad = reduced_model_for(p, BathParams(gamma=1e-4))
    assert not bad.valid
    assert "validity regime" in caplog.text


def test_solve_reduced_conserves_population():
    rm = ReducedModel(0.01, 0.02, 1.0)
    traj = solve_reduced(rm, (1.0, 0.0, 0.0), np.linspace(0, 5000, 51))
    total = traj.rho11 + traj.rho22 + traj.rho33
    assert np.allclose(total, 1.0)
    assert traj.rho11[0] == pytest.approx(1.0)
    assert traj.rho33[-1] > 0.99
    assert not traj.out_of_range
    with pytest.raises(ReducedModelError):
        solve_reduced(rm, (1.0, 0.0), [0.0])


@pytest.mark.parametrize("rho0", [(-0.1, 0.0, 1.1), (0.6, 0.0, 0.6), (1.0, 0.0, -1e-6)])
def test_solve_reduced_rejects_unphysical_populations(rho0):
    with pytest.raises(ReducedModelError):
        solve_reduced(ReducedModel(0.01, 0.02, 1.0), rho0, [0.0])


def test_solve_reduced_accepts_rounding_slack():
    traj = solve_reduced(ReducedModel(0.01, 0.02, 1.0), (0.5, 0.0, 0.5 + 5e-10), [0.0])
    assert traj.rho33[0] == pytest.approx(0.0, abs=1e-9)


def test_basis_checks():
    p = build_params()
    basis = single_site_basis(p, 10)
    gram = np.array([[np.vdot(a, b) for b in basis] for a in basis])
    assert np.allclose(gram, np.eye(3), atol=1e-10)
    with pytest.raises(ReducedModelError):
        project_full_state(np.eye(20) / 20, basis[:2])
    with pytest.raises(ReducedModelError):
        projection_observables([basis[0], basis[0], basis[1]])


def test_project_donor_state():
    p = build_params()
    basis = single_site_basis(p, 10)
    rho = np.outer(basis[0], basis[0].conj())
    proj = project_full_state(rho, basis)
    assert proj.as_tuple() == pytest.approx((1.0, 0.0, 0.0, 0.0), abs=1e-12)
    columns = projection_observables(basis)
    assert columns["rho11"](rho) == pytest.approx(1.0)
    assert columns["abs_rho23"](rho) == pytest.approx(0.0, abs=1e-12)


def test_dicke_reduced_prediction_chains_steps():
    tau1 = ms_to_omega0_time(3.0, TWO_PI * 20.0)
    pred = dicke_reduced_prediction(4, 2, 0.025, 1.0, tau1)
    assert [s.step for s in pred.steps] == [0, 1]
    assert pred.steps[0].gamma == pytest.approx(2 * pred.steps[0].v_e)
    assert pred.steps[1].v_e == pytest.approx(math.sqrt(6) * 0.025 * franck_condon_factor(1.0))
    assert 0.0 < pred.final <= pred.steps[0].cumulative <= 1.0
    assert pred.final == pytest.approx(pred.steps[0].transferred * pred.steps[1].transferred)
    with pytest.raises(ReducedModelError):
        dicke_reduced_prediction(2, 3, 0.025, 1.0, tau1)


@pytest.mark.slow
def test_reduced_model_tracks_full_single_site_dynamics():
    n_c = 10
    p = build_params()
    v_e = abs(effective_rabi(p.v, p.g_tilde))
    h = build_single_site_et(p, n_c)
    a = embed(fock_ops(n_c)[0], 1, h.space)
    model = LindbladModel(h, thermal_channels(a, BathParams(gamma=v_e)))
    basis = single_site_basis(p, n_c)
    rho0 = DensityMatrix.from_ket(h.space, basis[0])
    t_final = ms_to_omega0_time(16.0, TWO_PI * 20.0)
    series = evolve(model, rho0, t_final, IntegratorConfig(sample_dt=20.0), projection_observables(basis))
    traj = solve_reduced(ReducedModel(v_e, v_e, p.g_tilde), (1.0, 0.0, 0.0), series.times_omega0)
    for name in ("rho11", "rho22", "rho33"):
        assert np.max(np.abs(series.column(name) - getattr(traj, name))) < 0.02


def test_w_state_pump_basis_is_orthonormal():
    basis = w_state_pump_basis(build_params(), [0.03, 0.04], n_c=6)
    assert all(vec.size == 2 * 6 * 4 for vec in basis)
    gram = np.array([[np.vdot(a, b) for b in basis] for a in basis])
    assert np.allclose(gram, np.eye(3), atol=1e-10)
    with pytest.raises(ReducedModelError):
        w_state_pump_basis(build_params(), [0.0, 0.0], n_c=6)
