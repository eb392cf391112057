"""Unitary time evolution of sector states.

Two interchangeable backends: ``spectral`` diagonalizes each sector once
(the matrices are real symmetric, so eigenvectors are kept as float64 and
complex amplitudes are propagated with two real matmuls), which makes
sweeps over many evolution times cheap; ``krylov`` applies the matrix
exponential action directly via ``scipy.sparse.linalg.expm_multiply`` and
avoids the dense eigenvector store for large sectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import expm_multiply

from .hamiltonian import SectorOperator
from .system import SectorState

#: Largest sector dimension diagonalized by the "auto" method.
SPECTRAL_CUTOFF = 4000


class NumericalError(RuntimeError):
    """A linear-algebra kernel failed or produced inconsistent output."""


@dataclass(frozen=True)
class SpectralBlock:
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)  # real, columns are eigenstates


def real_matmul(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """``mat @ vec`` for a real matrix and complex right factor.

    Splitting into two real products avoids numpy upcasting ``mat`` to a
    complex copy, which matters for large eigenvector matrices.
    """
    if not np.iscomplexobj(vec):
        return mat @ vec
    stacked = np.concatenate([vec.real, vec.imag], axis=-1 if vec.ndim > 1 else 0)
    out = mat @ stacked
    if vec.ndim == 1:
        return out[: vec.shape[0]] + 1j * out[vec.shape[0]:]
    half = vec.shape[1]
    return out[:, :half] + 1j * out[:, half:]


@dataclass
class Propagator:
    """Reusable evolution object over a fixed set of sector operators."""

    operators: dict[int, SectorOperator]
    spectral_blocks: dict[int, SpectralBlock]

    @property
    def sectors(self) -> tuple[int, ...]:
        return tuple(sorted(self.operators))

    def is_spectral(self, k: int) -> bool:
        return k in self.spectral_blocks

    def evolve_sector(self, k: int, amplitudes: np.ndarray, t: float) -> np.ndarray:
        if k not in self.operators:
            raise ValueError(f"propagator does not cover sector {k}")
        if t == 0.0:
            return amplitudes.astype(complex, copy=True)
        block = self.spectral_blocks.get(k)
        if block is not None:
            coeffs = real_matmul(block.eigenvectors.T, np.asarray(amplitudes, dtype=complex))
            coeffs *= np.exp(-1j * block.eigenvalues * t)
            return real_matmul(block.eigenvectors, coeffs)
        gen = self.operators[k].matrix * (-1j * t)
        return expm_multiply(gen.tocsc(), np.asarray(amplitudes, dtype=complex))


def prepare_propagator(ops, method: str = "auto", spectral_cutoff: int = SPECTRAL_CUTOFF) -> Propagator:
    """Prepare evolution for a list of sector operators.

    ``method`` is ``"spectral"``, ``"krylov"`` or ``"auto"`` (spectral up
    to ``spectral_cutoff`` states, Krylov beyond).  Spectral caching pays
    off whenever many evolution times are needed from the same operators.
    """
    if method not in ("auto", "spectral", "krylov"):
        raise ValueError(f"unknown evolution method {method!r}")
    operators = {op.excitation_count: op for op in ops}
    blocks = {}
    for k, op in operators.items():
        if method == "krylov" or (method == "auto" and op.dimension > spectral_cutoff):
            continue
        try:
            w, v = np.linalg.eigh(op.dense())
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"diagonalization failed in sector {k}: {exc}") from exc
        blocks[k] = SpectralBlock(w, v)
    return Propagator(operators, blocks)


def evolve(prop: Propagator, state: SectorState, t: float) -> SectorState:
    """``exp(-iHt)`` applied per populated sector; norm preserving."""
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    sectors = {k: prop.evolve_sector(k, v, t) for k, v in state.sectors.items()}
    return SectorState(state.layout, sectors)
