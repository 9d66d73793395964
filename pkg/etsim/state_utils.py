"""Initial states, target-state library and fidelity observables."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Literal, Sequence

import numpy as np

from .hilbert_utils import (
    Boson,
    DensityMatrix,
    Qubit,
    SpaceSpec,
    basis_vector,
    displacement,
    partial_trace,
)
from .models import ETParams, InitialStateSpec

logger = logging.getLogger(__name__)

THERMAL_TAIL_TOL = 1e-6
NORM_TOL = 1e-10

UP = basis_vector(2, 0)
DOWN = basis_vector(2, 1)


class StateError(ValueError):
    """Raised for state specifications that do not fit the target space."""


def thermal_populations(n0: float, n_c: int) -> np.ndarray:
    """Boltzmann populations with mean n0, renormalized on the truncated ladder."""
    if n0 < 0:
        raise StateError(f"Thermal occupation must be non-negative, got {n0}.")
    if n0 == 0:
        pops = np.zeros(n_c)
        pops[0] = 1.0
        return pops
    ratio = n0 / (1.0 + n0)
    tail = ratio**n_c
    if tail > THERMAL_TAIL_TOL:
        logger.warning(f"Thermal tail beyond cutoff {n_c} is {tail:.2e} for n0 = {n0}; raise the cutoff.")
    pops = (1.0 / (1.0 + n0)) * ratio ** np.arange(n_c)
    return pops / pops.sum()


def thermal_state(n0: float, n_c: int) -> DensityMatrix:
    return DensityMatrix(SpaceSpec([Boson(n_c)]), np.diag(thermal_populations(n0, n_c)))


def displaced_thermal(n0: float, alpha: complex, n_c: int) -> DensityMatrix:
    """U(alpha) rho_th(n0) U(alpha)^dagger on one truncated mode."""
    u = displacement(alpha, n_c).matrix
    rho = u @ np.diag(thermal_populations(n0, n_c)).astype(complex) @ u.conj().T
    return DensityMatrix(SpaceSpec([Boson(n_c)]), rho)


def thermal_entropy(n0: float) -> float:
    """Von Neumann entropy of an untruncated thermal mode."""
    if n0 <= 0:
        return 0.0
    return (n0 + 1) * math.log(n0 + 1) - n0 * math.log(n0)


def thermal_purity(n0: float) -> float:
    return 1.0 / (2.0 * n0 + 1.0)


def _qubit_product(bits: Sequence[int]) -> np.ndarray:
    return reduce(np.kron, [UP if b else DOWN for b in bits], np.array([1.0 + 0j]))


def dicke_state(n: int, m: int) -> np.ndarray:
    """Equal superposition of all n-qubit basis states with m spins up."""
    if n < 1 or not 0 <= m <= n:
        raise StateError(f"Dicke state needs 0 <= m <= N and N >= 1, got N = {n}, m = {m}.")
    vec = np.zeros(2**n, dtype=complex)
    for ups in itertools.combinations(range(n), m):
        vec += _qubit_product([1 if i in ups else 0 for i in range(n)])
    return vec / math.sqrt(math.comb(n, m))


def boson_w_state(n: int, n_t: int) -> np.ndarray:
    """(1/sqrt N) sum_i |0 .. 1_i .. 0> over N modes of cutoff n_t."""
    if n < 1 or n_t < 2:
        raise StateError(f"Boson W state needs N >= 1 and n_t >= 2, got N = {n}, n_t = {n_t}.")
    vac = basis_vector(n_t, 0)
    one = basis_vector(n_t, 1)
    vec = np.zeros(n_t**n, dtype=complex)
    for k in range(n):
        vec += reduce(np.kron, [one if i == k else vac for i in range(n)])
    return vec / math.sqrt(n)


def ghz_state(n: int, sign: int = -1) -> np.ndarray:
    """(|up...up> + sign |down...down>) / sqrt 2."""
    if sign not in (1, -1):
        raise StateError(f"GHZ sign must be +1 or -1, got {sign}.")
    return (_qubit_product([1] * n) + sign * _qubit_product([0] * n)) / math.sqrt(2)


TargetKind = Literal["dicke", "boson_w", "ghz", "custom"]


@dataclass(frozen=True, eq=False)
class TargetState:
    """Pure target on the target factors only."""

    kind: TargetKind
    space: SpaceSpec
    vector: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=complex).ravel()
        if vec.size != self.space.dim:
            raise StateError(f"Target vector of size {vec.size} does not match dimension {self.space.dim}.")
        if abs(np.linalg.norm(vec) - 1.0) > NORM_TOL:
            raise StateError("Target vector must have unit norm.")
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @classmethod
    def dicke(cls, n: int, m: int) -> "TargetState":
        return cls("dicke", SpaceSpec([Qubit()] * n), dicke_state(n, m), label=f"W_{n}^{m}")

    @classmethod
    def boson_w(cls, n: int, n_t: int) -> "TargetState":
        return cls("boson_w", SpaceSpec([Boson(n_t)] * n), boson_w_state(n, n_t), label=f"boson_W_{n}")

    @classmethod
    def ghz(cls, n: int, sign: int = -1) -> "TargetState":
        return cls("ghz", SpaceSpec([Qubit()] * n), ghz_state(n, sign), label=f"GHZ_{n}")

    @classmethod
    def custom(cls, space: SpaceSpec, vector: Sequence[complex], label: str = "custom") -> "TargetState":
        vec = np.asarray(vector, dtype=complex)
        return cls("custom", space, vec / np.linalg.norm(vec), label=label)


def _target_matrix(rho: DensityMatrix | np.ndarray, target: TargetState) -> np.ndarray:
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if mat.shape != (target.space.dim, target.space.dim):
        raise StateError(f"State of shape {mat.shape} does not match target dimension {target.space.dim}.")
    return mat


def fidelity(rho: DensityMatrix | np.ndarray, target: TargetState) -> float:
    """<psi|rho|psi> for a pure target."""
    mat = _target_matrix(rho, target)
    value = float(np.real(target.vector.conj() @ mat @ target.vector))
    return min(1.0, max(0.0, value))


def population_overlap(rho: DensityMatrix | np.ndarray, target: TargetState) -> float:
    """Phase-insensitive overlap sum_k |psi_k|^2 rho_kk."""
    mat = _target_matrix(rho, target)
    return float(np.real(np.abs(target.vector) ** 2 @ np.diag(mat)))


def target_reduced_state(rho: DensityMatrix, target_sites: Sequence[int]) -> DensityMatrix:
    return partial_trace(rho, target_sites)


def _control_ket(branch: str) -> np.ndarray:
    return UP if branch == "donor" else DOWN


def _boson_block(spec: InitialStateSpec, p: ETParams, n_c: int) -> DensityMatrix:
    alpha = -p.g_tilde / 2 if spec.control == "donor" else p.g_tilde / 2
    n0 = spec.n0 if spec.boson_init == "displaced_thermal" else 0.0
    return displaced_thermal(n0, alpha, n_c)


def _target_blocks(spec: InitialStateSpec, factors: Sequence) -> np.ndarray:
    if not factors:
        return np.ones((1, 1), dtype=complex)
    if spec.target_init == "custom":
        dim = int(np.prod([f.dim for f in factors]))
        vec = np.asarray(spec.custom_target, dtype=complex)
        if vec.size != dim:
            raise StateError(f"custom_target has {vec.size} amplitudes, target space has dimension {dim}.")
        vec = vec / np.linalg.norm(vec)
        return np.outer(vec, vec.conj())
    blocks = []
    for f in factors:
        if isinstance(f, Qubit):
            if spec.target_init not in ("all_down", "all_up"):
                raise StateError(f"Target qubits cannot start in {spec.target_init!r}.")
            ket = DOWN if spec.target_init == "all_down" else UP
            blocks.append(np.outer(ket, ket.conj()))
        else:
            if spec.target_init not in ("all_vacuum", "thermal"):
                raise StateError(f"Target modes cannot start in {spec.target_init!r}.")
            n0 = spec.n0 if spec.target_init == "thermal" else 0.0
            blocks.append(np.diag(thermal_populations(n0, f.dim)).astype(complex))
    return reduce(np.kron, blocks)


def build_initial(spec: InitialStateSpec, p: ETParams, space: SpaceSpec, m_controls: int = 1) -> DensityMatrix:
    """Product state: (control x damped mode) per control block, then the targets.

    The donor branch displaces the mode by -g/2 so it starts in |D, 0>.
    """
    factors = space.factors
    lead = factors[: 2 * m_controls]
    if len(lead) < 2 * m_controls or any(
        not isinstance(q, Qubit) or not isinstance(b, Boson) for q, b in zip(lead[0::2], lead[1::2])
    ):
        raise StateError("Space must start with (Qubit, Boson) control blocks.")
    blocks = []
    for boson in lead[1::2]:
        ket = _control_ket(spec.control)
        blocks.append(np.outer(ket, ket.conj()))
        blocks.append(_boson_block(spec, p, boson.dim).matrix)
    blocks.append(_target_blocks(spec, factors[2 * m_controls :]))
    return DensityMatrix(space, reduce(np.kron, blocks))
