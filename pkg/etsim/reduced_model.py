"""Reduced three-level description of a resonant donor -> acceptor transfer.

States: |1> = |D, 0> x |e1>, |2> = |A, n> x |e2>, |3> = |A, 0> x |e2>. The
dynamics of (rho11, Im rho12, rho22) close under the matrix M below once the
1-3 and 2-3 coherences are dropped; rho33 is the complement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from .hilbert_utils import DensityMatrix, basis_vector
from .model_builders import (
    PerturbativeReport,
    check_perturbative,
    franck_condon_factor,
    vibronic_boson,
    vibronic_state,
)
from .models import BathParams, ETParams

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-8
POPULATION_SLACK = 1e-9
EIGVEC_COND_LIMIT = 1e8


class ReducedModelError(ValueError):
    """Raised for invalid reduced-model inputs (step index, projection basis, rates)."""


def effective_rabi(v: float, g_tilde: float, matrix_element: complex = 1.0, order: int = 1) -> complex:
    """V_e = -V g^n e^{-g^2/2} / sqrt(n!) <e2|H_int|e1>; order 1 is the usual resonance."""
    fc = g_tilde**order * math.exp(-(g_tilde**2) / 2) / math.sqrt(math.factorial(order))
    return -v * fc * matrix_element


def dicke_step_rabi(n_targets: int, step: int, j: float, g_tilde: float, order: int = 1) -> float:
    """Rabi frequency of pumping step m: sqrt((N - m)(m + 1)) J FC."""
    if step < 0 or step > n_targets:
        raise ReducedModelError(f"Step {step} outside 0..{n_targets - 1} for N = {n_targets}.")
    if step == n_targets:
        return 0.0
    return math.sqrt((n_targets - step) * (step + 1)) * abs(j) * franck_condon_factor(g_tilde, order)


def w_aggregate_rabi(j: Sequence[float], g_tilde: float, order: int = 1) -> float:
    """V_s = sqrt(sum_k V'_k^2), V'_k = -J_k FC, for unequal control-target couplings."""
    fc = franck_condon_factor(g_tilde, order)
    return float(math.sqrt(sum((jk * fc) ** 2 for jk in j)))


@dataclass(frozen=True)
class ReducedModel:
    v_e: float
    gamma: float
    g_tilde: float
    valid: bool = True

    @property
    def g_prime(self) -> float:
        return 0.5 * (1.0 + self.g_tilde**2)

    @property
    def m_matrix(self) -> np.ndarray:
        v, gm = self.v_e, self.gamma
        return np.array(
            [
                [0.0, -2.0 * v, 0.0],
                [v, -self.g_prime * gm, -v],
                [0.0, 2.0 * v, -gm],
            ]
        )

    def determinant(self) -> float:
        return float(np.linalg.det(self.m_matrix))


def reduced_model_for(
    p: ETParams,
    bath: BathParams,
    matrix_element: complex = 1.0,
    order: int = 1,
    report: PerturbativeReport | None = None,
) -> ReducedModel:
    """ReducedModel for an ET setup, flagged invalid when the perturbative checks fail."""
    report = report or check_perturbative(p, bath, "single_site")
    v_e = abs(effective_rabi(p.v, p.g_tilde, matrix_element, order))
    if not report.passed:
        logger.warning(f"Reduced model outside its validity regime: {', '.join(report.failures())}")
    return ReducedModel(v_e=v_e, gamma=bath.gamma, g_tilde=p.g_tilde, valid=report.passed)


@dataclass
class ReducedTrajectory:
    times: np.ndarray
    rho11: np.ndarray
    im_rho12: np.ndarray
    rho22: np.ndarray
    rho33: np.ndarray
    out_of_range: bool = False


def _propagators(m: np.ndarray) -> Callable[[float], np.ndarray]:
    w, vecs = np.linalg.eig(m)
    if np.linalg.cond(vecs) < EIGVEC_COND_LIMIT:
        inv = np.linalg.inv(vecs)
        return lambda t: np.real(vecs @ np.diag(np.exp(w * t)) @ inv)
    logger.debug("M is close to defective; falling back to expm(M t).")
    return lambda t: expm(m * t)


def solve_reduced(rm: ReducedModel, rho0: Sequence[float], times: Sequence[float]) -> ReducedTrajectory:
    """Solve d/dt (rho11, Im rho12, rho22) = M (...) at the requested times (1/omega0)."""
    x0 = np.asarray(rho0, dtype=float)
    if x0.shape != (3,):
        raise ReducedModelError("Initial vector must be (rho11, Im rho12, rho22).")
    # rho33 is implied by the trace, so it must stay non-negative too.
    rho33_0 = 1.0 - x0[0] - x0[2]
    if min(x0[0], x0[2], rho33_0) < -POPULATION_SLACK:
        raise ReducedModelError(
            f"Initial populations must be non-negative and sum to 1 within {POPULATION_SLACK}: "
            f"rho11={x0[0]}, rho22={x0[2]}, rho33={rho33_0}."
        )
    times = np.asarray(times, dtype=float)
    prop = _propagators(rm.m_matrix)
    traj = np.array([prop(t) @ x0 for t in times]).reshape(len(times), 3)
    rho11, im12, rho22 = traj[:, 0], traj[:, 1], traj[:, 2]
    rho33 = 1.0 - rho11 - rho22
    pops = np.concatenate([rho11, rho22, rho33])
    out = bool(np.any(pops < -POPULATION_SLACK) or np.any(pops > 1.0 + POPULATION_SLACK))
    if out:
        logger.warning("Reduced-model populations left [0, 1]; check the parameter regime.")
    return ReducedTrajectory(times, rho11, im12, rho22, rho33, out_of_range=out)


@dataclass(frozen=True)
class TransferAnalysis:
    eigenvalues: np.ndarray
    lambda_tilde: float
    optimal_gamma: float

    @property
    def rate(self) -> float:
        return abs(self.lambda_tilde)


def _lambda_tilde(v_e: float, gamma: float, g_tilde: float) -> float:
    return float(np.max(np.real(np.linalg.eigvals(ReducedModel(v_e, gamma, g_tilde).m_matrix))))


def optimal_gamma(v_e: float, g_tilde: float) -> float:
    """Damping rate maximizing |lambda~| at fixed V_e."""
    res = minimize_scalar(
        lambda log_ratio: _lambda_tilde(v_e, v_e * math.exp(log_ratio), g_tilde),
        bounds=(math.log(1e-2), math.log(1e2)),
        method="bounded",
        options={"xatol": 1e-8},
    )
    return v_e * math.exp(res.x)


def transfer_rate(rm: ReducedModel) -> TransferAnalysis:
    if rm.v_e <= 0 or rm.gamma <= 0:
        raise ReducedModelError("Transfer analysis needs V_e > 0 and gamma > 0.")
    eig = np.linalg.eigvals(rm.m_matrix)
    return TransferAnalysis(
        eigenvalues=eig,
        lambda_tilde=float(np.max(np.real(eig))),
        optimal_gamma=optimal_gamma(rm.v_e, rm.g_tilde),
    )


def lambda_scan(
    v_e: float, g_tilde: float, ratio_min: float = 1e-2, ratio_max: float = 1e2, points: int = 81
) -> tuple[np.ndarray, np.ndarray]:
    """|lambda~| over gamma / V_e on a log grid."""
    ratios = np.logspace(math.log10(ratio_min), math.log10(ratio_max), points)
    rates = np.array([abs(_lambda_tilde(v_e, r * v_e, g_tilde)) for r in ratios])
    return ratios, rates


@dataclass(frozen=True)
class ReducedProjection:
    rho11: float
    rho22: float
    rho33: float
    im_rho12: float
    abs_rho13: float = 0.0
    abs_rho23: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rho11, self.rho22, self.rho33, self.im_rho12)


def _check_basis(basis: Sequence[np.ndarray]) -> np.ndarray:
    vecs = np.array([np.asarray(b, dtype=complex).ravel() for b in basis])
    if vecs.shape[0] != 3:
        raise ReducedModelError("Projection basis needs exactly three states.")
    gram = vecs.conj() @ vecs.T
    if np.max(np.abs(gram - np.eye(3))) > ORTHONORMAL_TOL:
        raise ReducedModelError("Projection basis is not orthonormal.")
    return vecs


def project_full_state(rho: DensityMatrix | np.ndarray, basis: Sequence[np.ndarray]) -> ReducedProjection:
    """<i|rho|j> on the three-level basis."""
    vecs = _check_basis(basis)
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    sub = vecs.conj() @ mat @ vecs.T
    return ReducedProjection(
        rho11=float(np.real(sub[0, 0])),
        rho22=float(np.real(sub[1, 1])),
        rho33=float(np.real(sub[2, 2])),
        im_rho12=float(np.imag(sub[0, 1])),
        abs_rho13=float(abs(sub[0, 2])),
        abs_rho23=float(abs(sub[1, 2])),
    )


def projection_observables(basis: Sequence[np.ndarray]) -> dict[str, Callable[[np.ndarray], float]]:
    """Sampled columns rho11, rho22, rho33, im_rho12, abs_rho13, abs_rho23 for evolve."""
    vecs = _check_basis(basis)

    def element(i: int, j: int, part: Callable[[complex], float]) -> Callable[[np.ndarray], float]:
        return lambda rho: float(part(vecs[i].conj() @ rho @ vecs[j]))

    return {
        "rho11": element(0, 0, np.real),
        "rho22": element(1, 1, np.real),
        "rho33": element(2, 2, np.real),
        "im_rho12": element(0, 1, np.imag),
        "abs_rho13": element(0, 2, abs),
        "abs_rho23": element(1, 2, abs),
    }


def single_site_basis(p: ETParams, n_c: int, order: int = 1) -> list[np.ndarray]:
    """|D,0>, |A,order>, |A,0> on [Qubit, Boson(n_c)]."""
    return [
        vibronic_state("donor", 0, p, n_c),
        vibronic_state("acceptor", order, p, n_c),
        vibronic_state("acceptor", 0, p, n_c),
    ]


def w_state_pump_basis(p: ETParams, j: Sequence[float], n_c: int, order: int = 1) -> list[np.ndarray]:
    """Three-level basis of W pumping on [control, Boson(n_c), N targets].

    |2> and |3> carry the target superposition sum_k V'_k |{k}> / V_s.
    """
    n = len(j)
    fc = franck_condon_factor(p.g_tilde, order)
    weights = np.array([-jk * fc for jk in j], dtype=float)
    norm = np.linalg.norm(weights)
    if norm == 0:
        raise ReducedModelError("All control-target couplings vanish.")
    down = basis_vector(2, 1)
    up = basis_vector(2, 0)
    all_down = down
    for _ in range(n - 1):
        all_down = np.kron(all_down, down)
    w_vec = np.zeros(2**n, dtype=complex)
    for k, wk in enumerate(weights):
        ket = np.array([1.0 + 0j])
        for site in range(n):
            ket = np.kron(ket, up if site == k else down)
        w_vec += wk / norm * ket
    acceptor = basis_vector(2, 1)
    donor = np.kron(np.kron(basis_vector(2, 0), vibronic_boson("donor", 0, p.g_tilde, n_c)), all_down)
    excited = np.kron(np.kron(acceptor, vibronic_boson("acceptor", order, p.g_tilde, n_c)), w_vec)
    ground = np.kron(np.kron(acceptor, vibronic_boson("acceptor", 0, p.g_tilde, n_c)), w_vec)
    return [donor, excited, ground]


@dataclass
class StepPrediction:
    step: int
    v_e: float
    gamma: float
    transferred: float
    cumulative: float


@dataclass
class DickePrediction:
    steps: list[StepPrediction] = field(default_factory=list)

    @property
    def final(self) -> float:
        return self.steps[-1].cumulative if self.steps else 1.0


def dicke_reduced_prediction(
    n_targets: int,
    m_excitations: int,
    j: float,
    g_tilde: float,
    tau1: float,
    gammas: Sequence[float] | None = None,
    order: int = 1,
) -> DickePrediction:
    """Chain the three-level model over the pumping steps of a Dicke protocol.

    Each step m starts in |1> and transfers rho33(tau1) with V_e^m; the
    cumulative product estimates the fidelity after that step (tau1 in 1/omega0).
    """
    if m_excitations > n_targets:
        raise ReducedModelError(f"Cannot pump {m_excitations} excitations into {n_targets} targets.")
    out = DickePrediction()
    cumulative = 1.0
    for m in range(m_excitations):
        v_e = dicke_step_rabi(n_targets, m, j, g_tilde, order)
        gamma = gammas[m] if gammas is not None else 2.0 * v_e
        traj = solve_reduced(ReducedModel(v_e, gamma, g_tilde), (1.0, 0.0, 0.0), [tau1])
        transferred = float(traj.rho33[-1])
        cumulative *= transferred
        out.steps.append(StepPrediction(step=m, v_e=v_e, gamma=gamma, transferred=transferred, cumulative=cumulative))
    return out

