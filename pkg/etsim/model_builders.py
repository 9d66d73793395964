"""Hamiltonian builders for the electron-transfer (ET) control qubit and its targets.

Factor layout of every builder: control qubit at site 0, its damped boson
mode at site 1, then the target factors. Global energy offsets are dropped,
so spectra should be compared through their gaps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .common_utils import dimension_guard
from .hilbert_utils import (
    Boson,
    Operator,
    Qubit,
    SpaceSpec,
    basis_vector,
    displacement,
    embed,
    embed_many,
    fock_ops,
    pauli_ops,
)
from .models import BathParams, ETParams, GHZParams, MSDriveSpec, SpinNetwork

logger = logging.getLogger(__name__)

CONTROL_SITE = 0
MODE_SITE = 1

Branch = Literal["donor", "acceptor"]
Scheme = Literal["single_site", "dicke", "boson_w", "ghz", "realistic"]

# "much less than" / "of the order of" thresholds used by check_perturbative
MUCH_LESS_RATIO = 0.25
ORDER_OF_RANGE = (0.2, 5.0)
RESONANCE_OVERLAP_FLOOR = 1e-2


class ModelBuildError(ValueError):
    """Raised when coupling sizes disagree, a drive sits on a pole, or a space is too large."""


def check_dimension(space: SpaceSpec, guard: int | None = None) -> None:
    limit = dimension_guard() if guard is None else guard
    if space.dim > limit:
        raise ModelBuildError(
            f"Hilbert-space dimension {space.dim} exceeds the guard of {limit} "
            f"(factors {space.dims}); lower a cutoff or raise ETSIM_DIMENSION_GUARD."
        )


def et_space(n_c: int, targets: Iterable = ()) -> SpaceSpec:
    return SpaceSpec([Qubit(), Boson(n_c), *targets])


def franck_condon_factor(g_tilde: float, order: int = 1) -> float:
    """|<A, n=order| D, 0>| for the displaced oscillators, g^n e^{-g^2/2} / sqrt(n!)."""
    if order < 0:
        raise ModelBuildError(f"Resonance order must be non-negative, got {order}.")
    return abs(g_tilde) ** order * math.exp(-(g_tilde**2) / 2) / math.sqrt(math.factorial(order))


def franck_condon_matrix(g_tilde: float, n_c: int, size: int | None = None) -> np.ndarray:
    """Overlaps <A, m | D, n> of acceptor and donor vibronic boson states."""
    size = n_c if size is None else size
    shift = displacement(-g_tilde, n_c).matrix  # U(+g/2)^dagger U(-g/2)
    return np.asarray(shift[:size, :size])


def resonance_order(p: ETParams) -> int:
    """Nearest vibronic order n with Delta E = n omega0."""
    return max(1, int(round(abs(p.delta_e) / p.omega0)))


def _et_terms(p: ETParams, space: SpaceSpec, control: int, mode: int, include_v: bool = True) -> np.ndarray:
    sx, _, sz, _, _ = pauli_ops()
    n_c = space.factors[mode].dim
    a, a_dag, num = fock_ops(n_c)
    h = 0.5 * p.delta_e * embed(sz, control, space).matrix
    h = h + 0.5 * p.g * embed_many({control: sz, mode: a + a_dag}, space).matrix
    h = h + p.omega0 * embed(num, mode, space).matrix
    if include_v and p.v != 0.0:
        h = h + p.v * embed(sx, control, space).matrix
    return h


def build_single_site_et(p: ETParams, n_c: int) -> Operator:
    """H_ET = dE/2 sz + g/2 sz (a + a^dag) + w0 a^dag a + V sx on [Qubit, Boson(n_c)]."""
    space = et_space(n_c)
    return Operator(space, _et_terms(p, space, CONTROL_SITE, MODE_SITE)).as_hermitian()


def build_repump(p: ETParams, space: SpaceSpec, v: float) -> Operator:
    """Dissipative repump: the single-site ET Hamiltonian with Delta E reversed, targets idle."""
    repump = p.model_copy(update={"delta_e": -p.delta_e, "v": v})
    return Operator(space, _et_terms(repump, space, CONTROL_SITE, MODE_SITE)).as_hermitian()


def pi_pulse_rabi(tau2: float) -> float:
    """Rabi rate with which H = Omega sx on the control completes a flip in tau2."""
    if tau2 <= 0:
        raise ModelBuildError(f"Pi-pulse duration must be positive, got {tau2}.")
    return math.pi / (2.0 * tau2)


def build_pi_pulse(space: SpaceSpec, tau2: float) -> Operator:
    sx, _, _, _, _ = pauli_ops()
    return (pi_pulse_rabi(tau2) * embed(sx, CONTROL_SITE, space)).as_hermitian()


def vibronic_boson(branch: Branch, n: int, g_tilde: float, n_c: int) -> np.ndarray:
    alpha = -g_tilde / 2 if branch == "donor" else g_tilde / 2
    return displacement(alpha, n_c).matrix @ basis_vector(n_c, n)


def vibronic_state(branch: Branch, n: int, p: ETParams, n_c: int) -> np.ndarray:
    """|D> U(-g/2)|n> or |A> U(+g/2)|n> on [Qubit, Boson(n_c)]."""
    if not 0 <= n < n_c:
        raise ModelBuildError(f"Vibronic level {n} outside the cutoff {n_c}.")
    if branch not in ("donor", "acceptor"):
        raise ModelBuildError(f"Unknown vibronic branch {branch!r}.")
    spin = basis_vector(2, 0 if branch == "donor" else 1)
    boson = vibronic_boson(branch, n, p.g_tilde, n_c)
    vec = np.kron(spin, boson)
    return vec / np.linalg.norm(vec)


def _coupling_pair(i: int, j: int, space: SpaceSpec, counter_rotating: bool) -> np.ndarray:
    sx, _, _, sp, sm = pauli_ops()
    if counter_rotating:
        return embed_many({i: sx, j: sx}, space).matrix
    hop = embed_many({i: sp, j: sm}, space).matrix
    return hop + hop.conj().T


def _transverse_field(b_field: float, sites: Sequence[int], space: SpaceSpec) -> np.ndarray:
    _, _, sz, _, _ = pauli_ops()
    return b_field * sum(embed(sz, s, space).matrix for s in sites)


def build_multi_control_dicke(
    p: ETParams,
    m_controls: int,
    net: SpinNetwork,
    n_c: int,
    guard: int | None = None,
) -> Operator:
    """M (control qubit + damped mode) blocks, each hopping onto the same N targets.

    Layout: [Qubit, Boson(n_c)] * M followed by N target qubits.
    """
    if m_controls < 1:
        raise ModelBuildError(f"Need at least one control qubit, got {m_controls}.")
    factors = [Qubit(), Boson(n_c)] * m_controls + [Qubit()] * net.n_targets
    space = SpaceSpec(factors)
    check_dimension(space, guard)
    targets = [2 * m_controls + i for i in range(net.n_targets)]
    h = np.zeros((space.dim, space.dim), dtype=complex)
    for c in range(m_controls):
        control, mode = 2 * c, 2 * c + 1
        h += _et_terms(p, space, control, mode)
        for jt, site in zip(net.j, targets):
            if jt != 0.0:
                h += jt * _coupling_pair(control, site, space, net.include_counter_rotating)
    if net.b_field != 0.0:
        h += _transverse_field(net.b_field, [2 * c for c in range(m_controls)] + targets, space)
    return Operator(space, h).as_hermitian()


def build_dicke_pump(
    p: ETParams,
    net: SpinNetwork,
    n_c: int,
    omega0_angular_khz: float | None = None,
    guard: int | None = None,
) -> Operator:
    """Pump Hamiltonian on [control, Boson(n_c), N targets].

    Without a coupling matrix the control hops onto each target with J_i. With
    a matrix every pair i<j couples with J_ij, as sx sx when counter-rotating
    terms are kept and as a flip-flop otherwise; B acts on every qubit.
    """
    if net.j_matrix is None:
        return build_multi_control_dicke(p, 1, net, n_c, guard)
    mat = net.coupling_matrix(omega0_angular_khz)
    size = net.n_targets + 1
    if mat.shape != (size, size):
        raise ModelBuildError(f"Coupling matrix is {mat.shape}, expected {(size, size)}.")
    space = et_space(n_c, [Qubit()] * net.n_targets)
    check_dimension(space, guard)
    qubits = [CONTROL_SITE] + [MODE_SITE + 1 + i for i in range(net.n_targets)]
    h = _et_terms(p, space, CONTROL_SITE, MODE_SITE)
    for a_idx in range(size):
        for b_idx in range(a_idx + 1, size):
            if mat[a_idx, b_idx] != 0.0:
                h = h + mat[a_idx, b_idx] * _coupling_pair(
                    qubits[a_idx], qubits[b_idx], space, net.include_counter_rotating
                )
    if net.b_field != 0.0:
        h = h + _transverse_field(net.b_field, qubits, space)
    return Operator(space, h).as_hermitian()


def build_boson_w(
    p: ETParams,
    n_modes: int,
    j: float,
    n_t: int,
    n_c: int,
    guard: int | None = None,
) -> tuple[Operator, list[Operator]]:
    """ET terms plus J sum_i (s0+ b_i + h.c.) on [Qubit, Boson(n_c), Boson(n_t) * n_modes].

    Returns the Hamiltonian and the damped-mode annihilation operators.
    """
    if n_modes < 1:
        raise ModelBuildError(f"Need at least one target mode, got {n_modes}.")
    space = et_space(n_c, [Boson(n_t)] * n_modes)
    check_dimension(space, guard)
    _, _, _, sp, _ = pauli_ops()
    b, _, _ = fock_ops(n_t)
    h = _et_terms(p, space, CONTROL_SITE, MODE_SITE)
    for i in range(n_modes):
        jc = embed_many({CONTROL_SITE: sp, MODE_SITE + 1 + i: b}, space).matrix
        h = h + j * (jc + jc.conj().T)
    a, _, _ = fock_ops(n_c)
    return Operator(space, h).as_hermitian(), [embed(a, MODE_SITE, space)]


def spin_excitation_operator(space: SpaceSpec, sites: Iterable[int] | None = None) -> Operator:
    """Number of up spins, sum s+ s-, over the given (default: all) qubit sites."""
    _, _, _, sp, sm = pauli_ops()
    sites = space.qubit_sites() if sites is None else list(sites)
    mat = sum(embed(sp @ sm, s, space).matrix for s in sites)
    return Operator(space, mat, hermitian=True)


def boson_w_excitation_operator(space: SpaceSpec) -> Operator:
    """s0+ s0- plus the occupation of every target mode."""
    mat = spin_excitation_operator(space, [CONTROL_SITE]).matrix
    for site in space.boson_sites():
        if site == MODE_SITE:
            continue
        _, _, num = fock_ops(space.factors[site].dim)
        mat = mat + embed(num, site, space).matrix
    return Operator(space, mat, hermitian=True)


def ms_coupling_matrix(spec: MSDriveSpec) -> np.ndarray:
    """J_ij = Omega_i Omega_j sum_m eta_im eta_jm w_m / (mu^2 - w_m^2), zero diagonal."""
    omega = np.asarray(spec.rabi, dtype=float)
    eta = np.asarray(spec.lamb_dicke, dtype=float)
    modes = np.asarray(spec.mode_frequencies, dtype=float)
    denom = spec.mu**2 - modes**2
    scale = max(1.0, abs(spec.mu), float(np.max(np.abs(modes))))
    if np.any(np.abs(spec.mu - modes) <= 1e-12 * scale):
        raise ModelBuildError(f"Beat-note detuning mu = {spec.mu} sits on a motional mode (pole).")
    if not spec.dispersive:
        logger.warning("MS drive is not dispersive: min |mu - w_m| <= 10 max |eta Omega|.")
    weights = modes / denom
    mat = np.einsum("im,jm,m->ij", eta, eta, weights) * np.outer(omega, omega)
    mat = 0.5 * (mat + mat.T)
    np.fill_diagonal(mat, 0.0)
    return mat


@dataclass(frozen=True)
class HoppingResult:
    matrix: np.ndarray
    j_res: float
    delta_j: float


def selective_hopping(
    j_a: np.ndarray,
    psi_a: Sequence[float],
    j_b: np.ndarray,
    psi_b: Sequence[float],
    control: int = 0,
) -> HoppingResult:
    """Combine two MS drives into J_ij cos(psi_i - psi_j) + J'_ij cos(psi'_i - psi'_j).

    The second drive must leave the control qubit alone. Reports the residual
    target-target coupling and the spread of the control row.
    """
    j_a = np.asarray(j_a, dtype=float)
    j_b = np.asarray(j_b, dtype=float)
    psi_a = np.asarray(psi_a, dtype=float)
    psi_b = np.asarray(psi_b, dtype=float)
    n = j_a.shape[0]
    if j_a.shape != (n, n) or j_b.shape != (n, n) or psi_a.shape != (n,) or psi_b.shape != (n,):
        raise ModelBuildError("Coupling matrices and phase vectors must share one size.")
    if np.any(j_b[control, :] != 0.0) or np.any(j_b[:, control] != 0.0):
        raise ModelBuildError("The second drive must have a zero row and column on the control qubit.")
    combined = j_a * np.cos(psi_a[:, None] - psi_a[None, :]) + j_b * np.cos(psi_b[:, None] - psi_b[None, :])
    np.fill_diagonal(combined, 0.0)
    others = [i for i in range(n) if i != control]
    row = combined[control, others]
    block = np.abs(combined[np.ix_(others, others)])
    return HoppingResult(
        matrix=combined,
        j_res=float(block.max()) if block.size else 0.0,
        delta_j=float(row.max() - row.min()) if row.size else 0.0,
    )


def _x_string(sites: Sequence[int], space: SpaceSpec) -> np.ndarray:
    sx, _, _, _, _ = pauli_ops()
    return embed_many({s: sx for s in sites}, space).matrix


def build_ghz(p: ETParams, gp: GHZParams, n_c: int, guard: int | None = None) -> Operator:
    """ET control with sz-conditioned field on 2N targets and two N-spin sx strings."""
    space = et_space(n_c, [Qubit()] * gp.n_targets)
    check_dimension(space, guard)
    _, _, sz, _, _ = pauli_ops()
    targets = [MODE_SITE + 1 + i for i in range(gp.n_targets)]
    h = _et_terms(p, space, CONTROL_SITE, MODE_SITE)
    for t in targets:
        h = h + 0.5 * gp.e0 * embed_many({CONTROL_SITE: sz, t: sz}, space).matrix
        h = h + 0.5 * gp.e0 * embed(sz, t, space).matrix
    h = h + 0.5 * gp.k * (_x_string(targets[: gp.n_half], space) + _x_string(targets[gp.n_half :], space))
    return Operator(space, h).as_hermitian()


def ghz_external_hamiltonians(gp: GHZParams) -> tuple[Operator, Operator]:
    """Target-only Hamiltonians seen with the control in |D> (first) and |A> (second)."""
    space = SpaceSpec([Qubit()] * gp.n_targets)
    _, _, sz, _, _ = pauli_ops()
    sites = list(range(gp.n_targets))
    field = 0.5 * gp.e0 * sum(embed(sz, s, space).matrix for s in sites)
    strings = 0.5 * gp.k * (_x_string(sites[: gp.n_half], space) + _x_string(sites[gp.n_half :], space))
    return Operator(space, strings + 2 * field, hermitian=True), Operator(space, strings, hermitian=True)


def ghz_resonant_delta_e(gp: GHZParams, omega0: float = 1.0, order: int = 1) -> float:
    """Delta E bringing |D,0> x polarized targets onto |A,order> x GHZ."""
    shift = gp.n_targets * gp.e0
    return order * omega0 - shift if gp.polarization == "up" else order * omega0 + shift


class InequalityCheck(BaseModel):
    name: str
    lhs: float
    rhs: float
    relation: Literal["much_less", "order_of", "less_or_order"]
    ratio: float
    passed: bool


class PerturbativeReport(BaseModel):
    scheme: str
    checks: list[InequalityCheck] = Field(default_factory=list)
    n_cutoff: int | None = None
    cutoff_overlap: float | None = None
    min_field_detuning: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def _check(name: str, lhs: float, rhs: float, relation: str) -> InequalityCheck:
    ratio = abs(lhs) / abs(rhs) if rhs != 0 else math.inf
    if relation == "much_less":
        passed = ratio <= MUCH_LESS_RATIO
    elif relation == "order_of":
        passed = ORDER_OF_RANGE[0] <= ratio <= ORDER_OF_RANGE[1]
    else:
        passed = ratio <= ORDER_OF_RANGE[1]
    return InequalityCheck(name=name, lhs=lhs, rhs=rhs, relation=relation, ratio=ratio, passed=passed)


def resonance_cutoff(p: ETParams, floor: float = RESONANCE_OVERLAP_FLOOR) -> tuple[int, float]:
    """Smallest n >= 1 with vibronic overlap at n' = n + dE/w0 below ``floor``.

    The cutoff never drops to 0 so the field-detuning scan always covers the first sideband.
    """
    order = resonance_order(p)
    n = 1
    overlap = franck_condon_factor(p.g_tilde, n + order)
    while overlap >= floor and n < 64:
        n += 1
        overlap = franck_condon_factor(p.g_tilde, n + order)
    return n, overlap


def check_perturbative(
    p: ETParams,
    bath: BathParams,
    scheme: Scheme = "single_site",
    net: SpinNetwork | None = None,
    gp: GHZParams | None = None,
    gaps: Sequence[float] | None = None,
) -> PerturbativeReport:
    """Evaluate the weak-coupling inequalities of a scheme. Violations are logged, never raised."""
    report = PerturbativeReport(scheme=scheme)
    checks = report.checks
    w0 = p.omega0
    if scheme in ("single_site", "ghz") or gaps:
        checks.append(_check("V <~ gamma", p.v, bath.gamma, "less_or_order"))
    if gaps:
        checks.append(_check("gamma << min gap", bath.gamma, min(abs(x) for x in gaps), "much_less"))
        checks.append(_check("max gap << omega0", max(abs(x) for x in gaps), w0, "much_less"))
        checks.append(_check("max gap << lambda", max(abs(x) for x in gaps), p.reorganization_energy, "much_less"))
    if scheme in ("dicke", "realistic", "boson_w") and net is not None:
        j = max(abs(x) for x in net.j)
        checks.append(_check("J ~ gamma", j, bath.gamma, "order_of"))
        checks.append(_check("gamma << omega0", bath.gamma, w0, "much_less"))
    if scheme == "realistic" and net is not None:
        n_cut, overlap = resonance_cutoff(p)
        detuning = min(abs(4 * net.b_field - n * w0) for n in range(n_cut + 1))
        report.n_cutoff = n_cut
        report.cutoff_overlap = overlap
        report.min_field_detuning = detuning
        j = max(abs(x) for x in net.j)
        checks.append(_check("gamma << min |4B - n w0|", bath.gamma, detuning, "much_less"))
        checks.append(_check("J << min |4B - n w0|", j, detuning, "much_less"))
    if scheme == "ghz" and gp is not None:
        checks.append(_check("V << k", p.v, gp.k, "much_less"))
        checks.append(_check("k << E0", gp.k, gp.e0, "much_less"))
        checks.append(_check("N E0 << omega0", gp.n_half * gp.e0, w0, "much_less"))
    for c in checks:
        if not c.passed:
            logger.warning(f"Perturbative condition '{c.name}' not met ({scheme}): ratio {c.ratio:.3g}.")
    return report
