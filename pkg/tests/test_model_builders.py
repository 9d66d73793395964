import logging
import math

import numpy as np
import pytest
from scipy.linalg import expm

from etsim.hilbert_utils import Qubit, SpaceSpec, basis_vector, commutator, embed, pauli_ops
from etsim.model_builders import (
    ModelBuildError,
    boson_w_excitation_operator,
    build_boson_w,
    build_dicke_pump,
    build_ghz,
    build_multi_control_dicke,
    build_pi_pulse,
    build_repump,
    build_single_site_et,
    check_perturbative,
    et_space,
    franck_condon_factor,
    franck_condon_matrix,
    ghz_external_hamiltonians,
    ghz_resonant_delta_e,
    ms_coupling_matrix,
    resonance_cutoff,
    resonance_order,
    selective_hopping,
    spin_excitation_operator,
    vibronic_state,
)
from etsim.models import BathParams, ETParams, GHZParams, MSDriveSpec, SpinNetwork
from etsim.reduced_model import effective_rabi


def build_params(**overrides):
    """Helper: the single-site parameters (dE, g, V) = (1, 1, 0.01) omega0."""
    values = {"delta_e": 1.0, "g": 1.0, "v": 0.01}
    values.update(overrides)
    return ETParams(**values)


def build_network(n=2, j=0.025, **overrides):
    return SpinNetwork(n_targets=n, j=[j] * n, **overrides)


def test_uncoupled_spectrum_gaps():
    h = build_single_site_et(build_params(v=0.0), 40)
    levels = np.linalg.eigvalsh(h.matrix)[:4]
    # +-dE/2 + n w0 - g^2 / (4 w0)
    assert np.allclose(levels + 0.25, [-0.5, 0.5, 0.5, 1.5], atol=1e-8)


def test_franck_condon_factors():
    assert franck_condon_factor(1.0, 0) == pytest.approx(math.exp(-0.5))
    assert franck_condon_factor(1.0, 1) == pytest.approx(0.6065306597)
    assert franck_condon_factor(1.0, 2) == pytest.approx(math.exp(-0.5) / math.sqrt(2))
    assert franck_condon_factor(-1.0, 1) == franck_condon_factor(1.0, 1)
    with pytest.raises(ModelBuildError):
        franck_condon_factor(1.0, -1)


def test_franck_condon_matrix_matches_closed_form():
    overlaps = franck_condon_matrix(1.0, 30, size=4)
    for n in range(4):
        assert abs(overlaps[n, 0]) == pytest.approx(franck_condon_factor(1.0, n), abs=1e-10)


def test_resonance_order_rounds_delta_e():
    assert resonance_order(build_params(delta_e=1.0)) == 1
    assert resonance_order(build_params(delta_e=2.0)) == 2
    assert resonance_order(build_params(delta_e=-1.0)) == 1
    assert resonance_order(build_params(delta_e=1.4)) == 1


@pytest.mark.parametrize("branch,n,energy", [("donor", 0, 0.25), ("acceptor", 0, -0.75), ("acceptor", 1, 0.25)])
def test_vibronic_states_are_eigenstates(branch, n, energy):
    p = build_params(v=0.0)
    h = build_single_site_et(p, 30).matrix
    vec = vibronic_state(branch, n, p, 30)
    assert np.allclose(h @ vec, energy * vec, atol=1e-8)


def test_vibronic_state_rejects_level_outside_cutoff():
    with pytest.raises(ModelBuildError):
        vibronic_state("donor", 10, build_params(), 10)


def test_transfer_matrix_element_matches_effective_rabi():
    p = build_params()
    n_c = 30
    sx, _, _, _, _ = pauli_ops()
    coupling = p.v * embed(sx, 0, et_space(n_c)).matrix
    element = np.vdot(vibronic_state("donor", 0, p, n_c), coupling @ vibronic_state("acceptor", 1, p, n_c))
    assert element.real == pytest.approx(effective_rabi(p.v, p.g_tilde).real, abs=1e-10)
    assert element.real == pytest.approx(-0.01 * math.exp(-0.5), abs=1e-10)


def test_repump_reverses_delta_e():
    p = build_params(v=0.0)
    space = et_space(6)
    repump = build_repump(p, space, 0.05)
    expected = build_single_site_et(build_params(delta_e=-1.0, v=0.05), 6)
    assert np.allclose(repump.matrix, expected.matrix)


def test_pi_pulse_flips_the_control():
    space = et_space(3)
    tau2 = 0.125
    h = build_pi_pulse(space, tau2)
    u = expm(-1j * tau2 * h.matrix)
    start = np.kron(basis_vector(2, 0), basis_vector(3, 0))
    target = np.kron(basis_vector(2, 1), basis_vector(3, 0))
    assert abs(np.vdot(target, u @ start)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ModelBuildError):
        build_pi_pulse(space, 0.0)


def test_dicke_pump_conserves_spin_excitations():
    h = build_dicke_pump(build_params(v=0.0), build_network(2), n_c=3)
    assert h.space.dims == (2, 3, 2, 2)
    number = spin_excitation_operator(h.space)
    assert np.max(np.abs(commutator(h.matrix, number.matrix))) < 1e-12


def test_counter_rotating_terms_break_excitation_number():
    net = build_network(2, include_counter_rotating=True)
    h = build_dicke_pump(build_params(v=0.0), net, n_c=3)
    number = spin_excitation_operator(h.space)
    assert np.max(np.abs(commutator(h.matrix, number.matrix))) > 1e-3


def test_dicke_pump_full_matrix_matches_control_row():
    net = build_network(2)
    mat = net.coupling_matrix()
    with_matrix = SpinNetwork(n_targets=2, j=net.j, j_matrix=mat.tolist())
    a = build_dicke_pump(build_params(v=0.0), net, n_c=3)
    b = build_dicke_pump(build_params(v=0.0), with_matrix, n_c=3)
    assert np.allclose(a.matrix, b.matrix)


def test_khz_matrix_needs_omega0():
    net = SpinNetwork(n_targets=1, j=[0.4], j_matrix=[[0.0, 0.4], [0.4, 0.0]], j_matrix_units="khz")
    with pytest.raises(ValueError):
        build_dicke_pump(build_params(v=0.0), net, n_c=3)
    h = build_dicke_pump(build_params(v=0.0), net, n_c=3, omega0_angular_khz=2 * math.pi * 10.0)
    assert h.hermitian


def test_dimension_guard_is_enforced():
    with pytest.raises(ModelBuildError):
        build_dicke_pump(build_params(v=0.0), build_network(4), n_c=12, guard=100)


def test_multi_control_layout_and_conservation():
    h = build_multi_control_dicke(build_params(v=0.0), 2, build_network(2), n_c=3)
    assert h.space.dims == (2, 3, 2, 3, 2, 2)
    number = spin_excitation_operator(h.space)
    assert np.max(np.abs(commutator(h.matrix, number.matrix))) < 1e-12
    with pytest.raises(ModelBuildError):
        build_multi_control_dicke(build_params(), 0, build_network(2), n_c=3)


def test_boson_w_conserves_total_excitations():
    h, modes = build_boson_w(build_params(v=0.0), 2, 0.05, n_t=3, n_c=4)
    assert h.space.dims == (2, 4, 3, 3)
    assert len(modes) == 1
    number = boson_w_excitation_operator(h.space)
    assert np.max(np.abs(commutator(h.matrix, number.matrix))) < 1e-12


def test_ms_coupling_matrix_two_ions_one_mode():
    spec = MSDriveSpec(rabi=[1.0, 2.0], lamb_dicke=[[0.1], [0.2]], mode_frequencies=[10.0], mu=12.0)
    mat = ms_coupling_matrix(spec)
    expected = 1.0 * 2.0 * 0.1 * 0.2 * 10.0 / (12.0**2 - 10.0**2)
    assert mat[0, 1] == pytest.approx(expected)
    assert mat[1, 0] == pytest.approx(expected)
    assert np.all(np.diag(mat) == 0.0)


def kron_all(*ops):
    """Helper: left-to-right Kronecker product of dense matrices."""
    out = np.eye(1)
    for op in ops:
        out = np.kron(out, op)
    return out


def test_ghz_hamiltonian_matches_kron_construction():
    n_c = 4
    p = build_params(delta_e=1.4, g=0.5, v=0.008)
    gp = GHZParams(e0=0.2, k=0.04, n_half=2)
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.diag([1.0, -1.0])
    i2, ic = np.eye(2), np.eye(n_c)
    a = np.diag(np.sqrt(np.arange(1, n_c)), k=1)
    num = a.T @ a

    def on_target(op, t):
        return [op if s == t else i2 for s in range(4)]

    expected = 0.5 * p.delta_e * kron_all(sz, ic, *[i2] * 4)
    expected += 0.5 * p.g * kron_all(sz, a + a.T, *[i2] * 4)
    expected += p.omega0 * kron_all(i2, num, *[i2] * 4)
    expected += p.v * kron_all(sx, ic, *[i2] * 4)
    for t in range(4):
        expected += 0.5 * gp.e0 * kron_all(sz, ic, *on_target(sz, t))
        expected += 0.5 * gp.e0 * kron_all(i2, ic, *on_target(sz, t))
    expected += 0.5 * gp.k * kron_all(i2, ic, sx, sx, i2, i2)
    expected += 0.5 * gp.k * kron_all(i2, ic, i2, i2, sx, sx)

    h = build_ghz(p, gp, n_c=n_c)
    assert h.space.dims == (2, n_c, 2, 2, 2, 2)
    assert np.allclose(h.matrix, expected, atol=1e-14)


def build_ms_spec(scale=1.0, mu=12.0):
    """Helper: two ions on two modes, drive between the modes."""
    return MSDriveSpec(
        rabi=[scale * 1.0, scale * 2.0],
        lamb_dicke=[[0.1, 0.05], [0.2, -0.05]],
        mode_frequencies=[10.0, 20.0],
        mu=mu,
    )


@pytest.mark.parametrize("scale", [0.5, 2.0, 3.0])
def test_ms_coupling_matrix_scales_quadratically_with_rabi(scale):
    base = ms_coupling_matrix(build_ms_spec())
    scaled = ms_coupling_matrix(build_ms_spec(scale=scale))
    assert np.allclose(scaled, scale**2 * base, rtol=1e-12, atol=0.0)


@pytest.mark.parametrize("below,above", [(8.0, 12.0), (9.5, 10.5)])
def test_ms_coupling_changes_sign_across_the_mode(below, above):
    def spec(mu):
        return MSDriveSpec(rabi=[1.0, 1.0], lamb_dicke=[[0.1], [0.1]], mode_frequencies=[10.0], mu=mu)

    red = ms_coupling_matrix(spec(below))[0, 1]
    blue = ms_coupling_matrix(spec(above))[0, 1]
    assert red < 0.0 < blue


def test_ms_coupling_matrix_rejects_pole():
    spec = MSDriveSpec(rabi=[1.0, 1.0], lamb_dicke=[[0.1], [0.1]], mode_frequencies=[10.0], mu=10.0)
    with pytest.raises(ModelBuildError):
        ms_coupling_matrix(spec)


def test_ms_coupling_matrix_warns_when_not_dispersive(caplog):
    spec = MSDriveSpec(rabi=[10.0, 10.0], lamb_dicke=[[0.5], [0.5]], mode_frequencies=[10.0], mu=11.0)
    with caplog.at_level(logging.WARNING, logger="etsim.model_builders"):
        ms_coupling_matrix(spec)
    assert "not dispersive" in caplog.text


def test_selective_hopping_cancels_target_block():
    j_a = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.3], [1.0, 0.3, 0.0]])
    j_b = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.3], [0.0, 0.3, 0.0]])
    result = selective_hopping(j_a, [0.0, 0.0, 0.0], j_b, [0.0, 0.0, math.pi])
    assert result.j_res == pytest.approx(0.0, abs=1e-12)
    assert result.delta_j == pytest.approx(0.0)
    assert result.matrix[0, 1] == pytest.approx(1.0)
    with pytest.raises(ModelBuildError):
        selective_hopping(j_a, [0, 0, 0], j_a, [0, 0, 0])


def test_ghz_minus_hamiltonian_annihilates_target():
    gp = GHZParams(e0=0.2, k=0.04, n_half=1)
    _, h_minus = ghz_external_hamiltonians(gp)
    ghz = np.zeros(4, dtype=complex)
    ghz[0], ghz[3] = 1 / math.sqrt(2), -1 / math.sqrt(2)
    assert np.allclose(h_minus.matrix @ ghz, 0.0)


def test_ghz_builder_dimensions():
    gp = GHZParams(e0=0.2, k=0.04, n_half=1)
    h = build_ghz(build_params(delta_e=1.4, g=0.5, v=0.008), gp, n_c=4)
    assert h.space.dims == (2, 4, 2, 2)
    assert h.hermitian


@pytest.mark.parametrize("polarization,expected", [("up", 0.6), ("down", 1.4)])
def test_ghz_resonant_delta_e(polarization, expected):
    gp = GHZParams(e0=0.2, k=0.04, n_half=1, polarization=polarization)
    assert ghz_resonant_delta_e(gp) == pytest.approx(expected)


def test_resonance_cutoff_for_heating_suppressed_setup():
    n_cut, overlap = resonance_cutoff(build_params(delta_e=2.0, v=0.0))
    assert n_cut == 5
    assert overlap < 1e-2


def test_resonance_cutoff_is_at_least_one():
    n_cut, overlap = resonance_cutoff(build_params(delta_e=3.0, g=0.1, v=0.0))
    assert franck_condon_factor(0.1, 3) < 1e-2
    assert n_cut == 1
    assert overlap == pytest.approx(franck_condon_factor(0.1, 4))


def test_realistic_perturbative_checks():
    p = build_params(delta_e=2.0, v=0.0)
    bath = BathParams(gamma=0.07, n_bar=0.05)
    good = check_perturbative(p, bath, "realistic", build_network(4, 0.04, b_field=0.6))
    assert good.passed
    assert good.n_cutoff == 5
    assert good.min_field_detuning == pytest.approx(0.4)
    bad = check_perturbative(p, bath, "realistic", build_network(4, 0.04, b_field=0.25))
    assert not bad.passed
    assert "gamma << min |4B - n w0|" in bad.failures()


def test_perturbative_violation_is_logged_not_raised(caplog):
    with caplog.at_level(logging.WARNING, logger="etsim.model_builders"):
        report = check_perturbative(build_params(v=1.0), BathParams(gamma=0.01), "single_site")
    assert not report.passed
    assert "V <~ gamma" in caplog.text


def test_single_site_checks_pass_at_reference_point():
    v_e = abs(effective_rabi(0.01, 1.0))
    assert check_perturbative(build_params(), BathParams(gamma=v_e), "single_site").passed


def test_space_helper_orders_factors():
    space = et_space(5, [Qubit(), Qubit()])
    assert space == SpaceSpec(et_space(5).factors + (Qubit(), Qubit()))
