"""Coupling-matrix ingestion and the measured five-qubit spin-hopping table."""

from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

UNITS_HEADER = re.compile(r"^#\s*units\s*:\s*kHz\s*$", re.IGNORECASE)
ASYMMETRY_TOL_KHZ = 1e-9

# Selective pairwise spin-hopping couplings (kHz) of the seven-ion chain,
# qubit ions 1..5 left to right; ion 3 (index 2) is the control qubit.
MEASURED_COUPLINGS_KHZ = np.array(
    [
        [0.0, 2.25e-4, 0.398, 1.07e-4, 1.15e-4],
        [2.25e-4, 0.0, 0.402, 1.03e-4, 1.07e-4],
        [0.398, 0.402, 0.0, 0.402, 0.398],
        [1.07e-4, 1.03e-4, 0.402, 0.0, 2.25e-4],
        [1.15e-4, 1.07e-4, 0.398, 2.25e-4, 0.0],
    ]
)
MEASURED_CONTROL_INDEX = 2


class CouplingFileError(ValueError):
    """Raised when a coupling-matrix CSV cannot be parsed or violates its contract."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def control_first(matrix: np.ndarray, control_index: int) -> np.ndarray:
    """Permute a coupling matrix so the control qubit becomes index 0, targets keep their order."""
    matrix = np.asarray(matrix, dtype=float)
    order = [control_index] + [i for i in range(matrix.shape[0]) if i != control_index]
    return matrix[np.ix_(order, order)]


def measured_couplings_khz(control_first_order: bool = True) -> np.ndarray:
    mat = MEASURED_COUPLINGS_KHZ.copy()
    return control_first(mat, MEASURED_CONTROL_INDEX) if control_first_order else mat


def parse_couplings_csv(text: str) -> np.ndarray:
    """Parse a square kHz coupling matrix with a ``# units: kHz`` header row.

    Rows and columns are expected control-first, as the builders consume them.
    """
    rows: list[list[float]] = []
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if UNITS_HEADER.match(line):
                saw_header = True
            continue
        if not saw_header:
            raise CouplingFileError("missing '# units: kHz' header before data", lineno)
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError as exc:
            raise CouplingFileError(f"non-numeric entry ({exc})", lineno) from exc
        if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
            raise CouplingFileError("ragged row", lineno)
    if not rows:
        raise CouplingFileError("no matrix rows found")
    mat = np.asarray(rows)
    if mat.shape[0] != mat.shape[1]:
        raise CouplingFileError(f"matrix is {mat.shape[0]}x{mat.shape[1]}, expected square")
    if np.any(np.diag(mat) != 0.0):
        raise CouplingFileError("diagonal entries must be zero")
    asym = float(np.max(np.abs(mat - mat.T)))
    if asym > ASYMMETRY_TOL_KHZ:
        i, j = np.unravel_index(int(np.argmax(np.abs(mat - mat.T))), mat.shape)
        raise CouplingFileError(f"asymmetric entries ({i},{j}) differ by {asym:.3e} kHz")
    return mat


def load_couplings_csv(path: str | Path) -> np.ndarray:
    path = Path(path)
    logger.info(f"Loading coupling matrix from {path}")
    return parse_couplings_csv(path.read_text(encoding="utf-8"))


def format_couplings_csv(matrix: np.ndarray) -> str:
    lines = ["# units: kHz"]
    lines += [",".join(f"{x:.12g}" for x in row) for row in np.asarray(matrix, dtype=float)]
    return "\n".join(lines) + "\n"
