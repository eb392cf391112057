"""Per-sector sparse Hamiltonians for the bus-plus-registers device.

The full Hamiltonian is the bus term plus the register coupling:

    H = J * sum_i (x_i x_{i+1} + y_i y_{i+1}) + h0 (z_1 + z_N)
      + J0 * sum_nu (x_{A_nu} x_1 + y_{A_nu} y_1 + x_N x_{B_nu} + y_N y_{B_nu})
      + sum_nu h_nu (z_{A_nu} + z_{B_nu})

with x, y, z the Pauli operators.  Conventions fixed here (and nowhere
else): ``z|1> = +|1>``, ``z|0> = -|0>``, so a field ``f`` on a site adds
``+f`` to the diagonal when the site is occupied and ``-f`` otherwise,
and ``xx + yy`` hops one excitation across a bond with amplitude
``2 * coupling``.  No overall energy shift is added; all fidelities are
insensitive to one.  The matrix conserves excitation number, so it is
assembled directly inside each sector, as a real symmetric sparse matrix
over the sector's bit-string basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .system import SystemLayout


@dataclass(frozen=True)
class HamiltonianParams:
    """Couplings and fields, all in units of the bus exchange coupling.

    ``J`` sets the energy scale (times are reported in 1/J), ``J0`` is the
    register-bus coupling, ``h0`` the field on the two bus end sites and
    ``h`` the per-pair field applied to both qubits of each pair.
    """

    J: float = 1.0
    J0: float = 1.0
    h0: float = 0.0
    h: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"exchange coupling must be positive, got {self.J}")
        object.__setattr__(self, "h", tuple(float(x) for x in np.atleast_1d(self.h)))


@dataclass(frozen=True)
class SectorOperator:
    """Restriction of H to one excitation sector, indexed like its basis."""

    excitation_count: int
    matrix: sparse.csr_matrix = field(repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def expectation(self, amplitudes: np.ndarray) -> float:
        return float(np.vdot(amplitudes, self.matrix @ amplitudes).real)


def _bonds_and_fields(layout: SystemLayout, p: HamiltonianParams):
    if len(p.h) != layout.pair_count:
        raise ValueError(f"expected {layout.pair_count} pair fields, got {len(p.h)}")
    bonds = [(layout.chain_site(i), layout.chain_site(i + 1), p.J) for i in range(1, layout.chain_length)]
    for nu in range(1, layout.pair_count + 1):
        bonds.append((layout.site_a(nu), layout.chain_site(1), p.J0))
        bonds.append((layout.chain_site(layout.chain_length), layout.site_b(nu), p.J0))
    fields = np.zeros(layout.total_sites)
    fields[layout.chain_site(1)] += p.h0
    fields[layout.chain_site(layout.chain_length)] += p.h0
    for nu in range(1, layout.pair_count + 1):
        fields[layout.site_a(nu)] += p.h[nu - 1]
        fields[layout.site_b(nu)] += p.h[nu - 1]
    return bonds, fields


def build_sector(layout: SystemLayout, params: HamiltonianParams, k: int) -> SectorOperator:
    """Assemble the k-excitation block of H."""
    if not 0 <= k <= layout.total_sites:
        raise ValueError(f"sector {k} outside [0, {layout.total_sites}]")
    bonds, fields = _bonds_and_fields(layout, params)
    basis = layout.basis(k)
    states = basis.states
    dim = basis.dimension

    diag = np.zeros(dim)
    for site in np.flatnonzero(fields):
        occ = ((states >> int(site)) & 1).astype(np.float64)
        diag += fields[site] * (2.0 * occ - 1.0)

    rows = [np.arange(dim, dtype=np.intp)]
    cols = [np.arange(dim, dtype=np.intp)]
    vals = [diag]
    for i, j, coupling in bonds:
        mask = (1 << i) | (1 << j)
        sel = np.flatnonzero(((states >> i) & 1) != ((states >> j) & 1))
        if sel.size == 0:
            continue
        # each ordered (source, target) appears once; the reverse hop is
        # generated when the loop reaches the target state
        rows.append(basis.index_of(states[sel] ^ mask))
        cols.append(sel.astype(np.intp))
        vals.append(np.full(sel.size, 2.0 * coupling))
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    mat.sum_duplicates()
    return SectorOperator(k, mat)


def build_hamiltonian(layout: SystemLayout, params: HamiltonianParams, sectors) -> list[SectorOperator]:
    """Sector blocks of H for each requested excitation count."""
    return [build_sector(layout, params, k) for k in sectors]
