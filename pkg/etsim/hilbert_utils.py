"""Composite Hilbert-space bookkeeping and dense operator algebra.

Factor ordering used across the package: control qubit first, then the damped
boson mode(s), then the target factors. Qubit basis index 0 is |up> = |D>
(donor), index 1 is |down> = |A> (acceptor), so sigma_z |D> = +|D>.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import expm

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
RHO_HERMITIAN_TOL = 1e-10
RHO_TRACE_TOL = 1e-9
RHO_POSITIVITY_TOL = -1e-8


class HilbertSpaceError(ValueError):
    """Raised for invalid cutoffs, factor indices or dimension mismatches."""


@dataclass(frozen=True)
class Qubit:
    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class Boson:
    cutoff: int

    def __post_init__(self) -> None:
        if int(self.cutoff) < 2:
            raise HilbertSpaceError(f"Boson cutoff must be >= 2, got {self.cutoff}.")

    @property
    def dim(self) -> int:
        return int(self.cutoff)


Factor = Qubit | Boson


@dataclass(frozen=True)
class SpaceSpec:
    """Ordered tensor factors of a composite Hilbert space."""

    factors: tuple[Factor, ...]

    def __init__(self, factors: Iterable[Factor]):
        object.__setattr__(self, "factors", tuple(factors))
        if not self.factors:
            raise HilbertSpaceError("A space needs at least one factor.")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.factors)

    def check_index(self, site: int) -> None:
        if not 0 <= site < len(self.factors):
            raise HilbertSpaceError(f"Factor index {site} out of range for {len(self.factors)} factors.")

    def subspace(self, keep: Iterable[int]) -> "SpaceSpec":
        return SpaceSpec(self.factors[k] for k in sorted(keep))

    def qubit_sites(self) -> list[int]:
        return [i for i, f in enumerate(self.factors) if isinstance(f, Qubit)]

    def boson_sites(self) -> list[int]:
        return [i for i, f in enumerate(self.factors) if isinstance(f, Boson)]


def _freeze(matrix: np.ndarray) -> np.ndarray:
    frozen = np.array(matrix, dtype=complex, copy=True)
    frozen.flags.writeable = False
    return frozen


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex operator tagged with the space it acts on."""

    space: SpaceSpec
    matrix: np.ndarray = field(repr=False)
    hermitian: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _freeze(self.matrix))
        d = self.space.dim
        if self.matrix.shape != (d, d):
            raise HilbertSpaceError(f"Operator shape {self.matrix.shape} does not match space dimension {d}.")
        if self.hermitian:
            err = max_norm(self.matrix - self.matrix.conj().T)
            if err >= HERMITIAN_TOL:
                raise HilbertSpaceError(f"Operator tagged Hermitian deviates by {err:.3e}.")

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T, hermitian=self.hermitian)

    def _check_same_space(self, other: "Operator") -> None:
        if other.space != self.space:
            raise HilbertSpaceError("Operators live on different spaces.")

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.space, scalar * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def as_hermitian(self) -> "Operator":
        """Symmetrize roundoff away and tag the result Hermitian."""
        return Operator(self.space, 0.5 * (self.matrix + self.matrix.conj().T), hermitian=True)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix with Hermiticity, unit trace and positivity contracts."""

    space: SpaceSpec
    matrix: np.ndarray = field(repr=False)
    validate: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _freeze(self.matrix))
        d = self.space.dim
        if self.matrix.shape != (d, d):
            raise HilbertSpaceError(f"Density matrix shape {self.matrix.shape} does not match dimension {d}.")
        if self.validate:
            problems = self.contract_violations()
            if problems:
                raise HilbertSpaceError("Invalid density matrix: " + "; ".join(problems))

    def contract_violations(self) -> list[str]:
        problems = []
        herm = max_norm(self.matrix - self.matrix.conj().T)
        if herm >= RHO_HERMITIAN_TOL:
            problems.append(f"non-Hermitian by {herm:.3e}")
        tr = self.trace()
        if abs(tr - 1.0) > RHO_TRACE_TOL:
            problems.append(f"trace {tr:.12f}")
        lam = self.min_eigenvalue()
        if lam < RHO_POSITIVITY_TOL:
            problems.append(f"min eigenvalue {lam:.3e}")
        return problems

    @classmethod
    def from_ket(cls, space: SpaceSpec, ket: np.ndarray) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex).ravel()
        ket = ket / np.linalg.norm(ket)
        return cls(space, np.outer(ket, ket.conj()))

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def min_eigenvalue(self) -> float:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def expect(self, op: Operator | np.ndarray) -> float:
        mat = op.matrix if isinstance(op, Operator) else np.asarray(op)
        return float(np.real(np.trace(mat @ self.matrix)))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


def max_norm(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(matrix))) if matrix.size else 0.0


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def trace_distance(rho: np.ndarray | DensityMatrix, sigma: np.ndarray | DensityMatrix) -> float:
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    s = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    diff = r - s
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def fock_ops(n_c: int) -> tuple[Operator, Operator, Operator]:
    """Truncated ladder operators a, a^dagger and number operator n = a^dagger a."""
    if int(n_c) < 2:
        raise HilbertSpaceError(f"Boson cutoff must be >= 2, got {n_c}.")
    space = SpaceSpec([Boson(n_c)])
    a = np.diag(np.sqrt(np.arange(1, n_c, dtype=float)), k=1).astype(complex)
    a_dag = a.conj().T
    return Operator(space, a), Operator(space, a_dag), Operator(space, a_dag @ a, hermitian=True)


def pauli_ops() -> tuple[Operator, Operator, Operator, Operator, Operator]:
    """sigma_x, sigma_y, sigma_z, sigma_plus, sigma_minus in the {|up>, |down>} basis."""
    space = SpaceSpec([Qubit()])
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    sp = 0.5 * (sx + 1j * sy)
    sm = 0.5 * (sx - 1j * sy)
    return (
        Operator(space, sx, hermitian=True),
        Operator(space, sy, hermitian=True),
        Operator(space, sz, hermitian=True),
        Operator(space, sp),
        Operator(space, sm),
    )


def identity(space: SpaceSpec) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex), hermitian=True)


def _local_matrix(op: Operator | np.ndarray) -> np.ndarray:
    return op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)


def embed_many(local_ops: Mapping[int, Operator | np.ndarray], space: SpaceSpec) -> Operator:
    """Tensor product placing each local operator on its factor, identity elsewhere."""
    mats = []
    for site in local_ops:
        space.check_index(site)
    for site, factor in enumerate(space.factors):
        if site in local_ops:
            mat = _local_matrix(local_ops[site])
            if mat.shape != (factor.dim, factor.dim):
                raise HilbertSpaceError(
                    f"Operator of shape {mat.shape} cannot act on factor {site} of dimension {factor.dim}."
                )
            mats.append(mat)
        else:
            mats.append(np.eye(factor.dim, dtype=complex))
    return Operator(space, reduce(np.kron, mats))


def embed(op: Operator | np.ndarray, site: int, space: SpaceSpec) -> Operator:
    """identity x ... x op x ... x identity in the factor order of ``space``."""
    space.check_index(site)
    embedded = embed_many({site: op}, space)
    if isinstance(op, Operator) and op.hermitian:
        return Operator(space, embedded.matrix, hermitian=True)
    return embedded


def displacement(alpha: complex, n_c: int) -> Operator:
    """U_disp(alpha) = exp(alpha a^dagger - alpha^* a) on the truncated Fock space.

    Unitarity degrades once |alpha|^2 approaches the cutoff; a warning is logged
    when |alpha|^2 > n_c / 4.
    """
    a, a_dag, _ = fock_ops(n_c)
    if abs(alpha) ** 2 > n_c / 4:
        logger.warning(
            f"Displacement |alpha|^2 = {abs(alpha) ** 2:.3f} exceeds n_c/4 = {n_c / 4:.2f}; truncation degrades unitarity."
        )
    generator = alpha * a_dag.matrix - np.conj(alpha) * a.matrix
    return Operator(a.space, expm(generator))


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on the kept factors (kept in ascending factor order)."""
    keep = sorted(set(keep))
    if not keep:
        raise HilbertSpaceError("partial_trace needs at least one factor to keep.")
    for k in keep:
        rho.space.check_index(k)
    dims = list(rho.space.dims)
    n = len(dims)
    traced = [i for i in range(n) if i not in keep]
    d_keep = int(np.prod([dims[k] for k in keep]))
    d_traced = int(np.prod([dims[t] for t in traced])) if traced else 1
    tensor = np.asarray(rho.matrix).reshape(dims + dims)
    perm = keep + traced + [n + k for k in keep] + [n + t for t in traced]
    tensor = tensor.transpose(perm).reshape(d_keep, d_traced, d_keep, d_traced)
    reduced = np.einsum("ajbj->ab", tensor)
    return DensityMatrix(rho.space.subspace(keep), reduced, validate=rho.validate)


def product_ket(space: SpaceSpec, local_kets: Sequence[np.ndarray]) -> np.ndarray:
    """Tensor product of one state vector per factor."""
    if len(local_kets) != len(space):
        raise HilbertSpaceError(f"Expected {len(space)} local states, got {len(local_kets)}.")
    for site, (ket, factor) in enumerate(zip(local_kets, space.factors)):
        if np.asarray(ket).size != factor.dim:
            raise HilbertSpaceError(f"Local state for factor {site} has wrong dimension.")
    return reduce(np.kron, [np.asarray(k, dtype=complex).ravel() for k in local_kets])


def basis_vector(dim: int, index: int) -> np.ndarray:
    if not 0 <= index < dim:
        raise HilbertSpaceError(f"Basis index {index} out of range for dimension {dim}.")
    vec = np.zeros(dim, dtype=complex)
    vec[index] = 1.0
    return vec


def tensor_density(*blocks: DensityMatrix) -> DensityMatrix:
    """Product state of density matrices, factor spaces concatenated in order."""
    space = SpaceSpec(f for b in blocks for f in b.space.factors)
    return DensityMatrix(space, reduce(np.kron, [b.matrix for b in blocks]))
