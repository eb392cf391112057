"""Site layout, excitation-number sector bases, and state encoding.

The simulated device is an open chain of ``N`` bus sites with ``M``
register qubits coupled to each end.  Sites are enumerated as

    A_1 .. A_M,  bus 1 .. N,  B_M .. B_1

so that reversing the site index order maps A_nu onto B_nu and bus site
``i`` onto bus site ``N+1-i``; the mirror symmetry of the device is a
literal index reflection.  Total magnetization is conserved by every
Hamiltonian built here, so states are stored per excitation-number
sector over bit-string bases (bit ``i`` set = site ``i`` carries an
up-spin excitation; the bus vacuum is the all-zero string).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from math import comb

import numpy as np

NORM_ATOL = 1e-9

#: Named single-qubit states accepted wherever a qubit amplitude pair is expected.
_NAMED_QUBITS = {
    "0": (1.0, 0.0),
    "1": (0.0, 1.0),
    "+": (1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)),
    "-": (1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0)),
}


def single_qubit_state(spec) -> np.ndarray:
    """Return a normalized single-qubit amplitude pair.

    Accepts the named states ``"0" | "1" | "+" | "-"`` or any length-2
    complex sequence, which must already be normalized.
    """
    if isinstance(spec, str):
        try:
            return np.asarray(_NAMED_QUBITS[spec], dtype=complex)
        except KeyError:
            raise ValueError(f"unknown qubit state {spec!r}; use 0, 1, + or -") from None
    vec = np.asarray(spec, dtype=complex)
    if vec.shape != (2,):
        raise ValueError(f"qubit state must have two amplitudes, got shape {vec.shape}")
    if abs(np.linalg.norm(vec) - 1.0) > NORM_ATOL:
        raise ValueError(f"qubit state is not normalized: |norm - 1| = {abs(np.linalg.norm(vec) - 1.0):.2e}")
    return vec


def popcount(values: np.ndarray) -> np.ndarray:
    """Vectorized number of set bits of a non-negative int64 array."""
    x = np.asarray(values, dtype=np.uint64).copy()
    x -= (x >> np.uint64(1)) & np.uint64(0x5555555555555555)
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return ((x * np.uint64(0x0101010101010101)) >> np.uint64(56)).astype(np.int64)


@lru_cache(maxsize=None)
def _basis_states(num_sites: int, k: int) -> np.ndarray:
    """Sorted int64 array of all ``num_sites``-bit strings with ``k`` set bits."""
    states = np.fromiter(
        (sum(1 << p for p in occ) for occ in combinations(range(num_sites), k)),
        dtype=np.int64,
        count=comb(num_sites, k),
    )
    states.sort()
    return states


@dataclass(frozen=True)
class SectorBasis:
    """Dense indexing of the ``k``-excitation occupation states of ``num_sites`` sites."""

    num_sites: int
    excitation_count: int
    states: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        n, k = self.num_sites, self.excitation_count
        if not 0 <= k <= n:
            raise ValueError(f"excitation count {k} outside [0, {n}]")
        if self.states is None:
            object.__setattr__(self, "states", _basis_states(n, k))

    @property
    def dimension(self) -> int:
        return self.states.size

    def encode(self, state: int) -> int:
        """Dense index of an occupation bit string."""
        idx = int(np.searchsorted(self.states, state))
        if idx >= self.dimension or self.states[idx] != state:
            raise ValueError(f"state {state:b} is not in the k={self.excitation_count} sector")
        return idx

    def decode(self, index: int) -> int:
        """Occupation bit string at a dense index."""
        if not 0 <= index < self.dimension:
            raise ValueError(f"index {index} outside [0, {self.dimension})")
        return int(self.states[index])

    def index_of(self, states: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`encode` for arrays of known-member states."""
        return np.searchsorted(self.states, states)


@dataclass(frozen=True)
class SystemLayout:
    """Site bookkeeping for ``M`` register pairs sharing an ``N``-site bus."""

    chain_length: int
    pair_count: int
    _caches: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.chain_length < 2:
            raise ValueError(f"chain length must be at least 2, got {self.chain_length}")
        if self.pair_count < 1:
            raise ValueError(f"pair count must be at least 1, got {self.pair_count}")

    @property
    def total_sites(self) -> int:
        return self.chain_length + 2 * self.pair_count

    def site_a(self, nu: int) -> int:
        """Site index of register qubit A_nu (nu in 1..M)."""
        self._check_pair(nu)
        return nu - 1

    def site_b(self, nu: int) -> int:
        """Site index of register qubit B_nu (mirror image of A_nu)."""
        self._check_pair(nu)
        return self.total_sites - nu

    def chain_site(self, i: int) -> int:
        """Site index of bus site ``i`` (i in 1..N)."""
        if not 1 <= i <= self.chain_length:
            raise ValueError(f"bus site {i} outside 1..{self.chain_length}")
        return self.pair_count + i - 1

    def pair_sites(self, nu: int) -> tuple[int, int]:
        return self.site_a(nu), self.site_b(nu)

    def reflection(self) -> np.ndarray:
        """Site permutation implementing the end-to-end mirror (an involution)."""
        return np.arange(self.total_sites)[::-1].copy()

    def basis(self, k: int) -> SectorBasis:
        key = ("basis", k)
        if key not in self._caches:
            self._caches[key] = SectorBasis(self.total_sites, k)
        return self._caches[key]

    def pair_trace_index(self, nu: int) -> "PairTraceIndex":
        key = ("ptrace", nu)
        if key not in self._caches:
            self._caches[key] = PairTraceIndex(self, nu)
        return self._caches[key]

    def _check_pair(self, nu: int):
        if not 1 <= nu <= self.pair_count:
            raise ValueError(f"pair index {nu} outside 1..{self.pair_count}")

    def __getstate__(self):
        return (self.chain_length, self.pair_count)

    def __setstate__(self, state):
        object.__setattr__(self, "chain_length", state[0])
        object.__setattr__(self, "pair_count", state[1])
        object.__setattr__(self, "_caches", {})


def build_layout(chain_length: int, pair_count: int) -> SystemLayout:
    """Create the site layout for ``pair_count`` register pairs on an
    ``chain_length``-site bus.

    Raises ``ValueError`` for ``chain_length < 2`` or ``pair_count < 1``.
    """
    return SystemLayout(chain_length, pair_count)


def sector_basis(layout: SystemLayout, k: int) -> SectorBasis:
    """Basis of all ``k``-excitation occupation states of the layout."""
    return layout.basis(k)


@dataclass(frozen=True)
class RegisterState:
    """Product state of the two registers: one amplitude pair per qubit.

    ``alpha[nu-1]`` holds the A_nu amplitudes ``(a0, a1)`` and
    ``beta[nu-1]`` the B_nu amplitudes; every pair must be normalized.
    """

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=complex))
        beta = np.atleast_2d(np.asarray(self.beta, dtype=complex))
        if alpha.shape != beta.shape or alpha.ndim != 2 or alpha.shape[1] != 2:
            raise ValueError("register amplitudes must both have shape (M, 2)")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def pair_count(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def from_qubits(cls, a_states, b_states) -> "RegisterState":
        """Build from per-qubit specs (named states or amplitude pairs)."""
        return cls(
            np.array([single_qubit_state(s) for s in a_states]),
            np.array([single_qubit_state(s) for s in b_states]),
        )

    @classmethod
    def computational(cls, a_bits, b_bits) -> "RegisterState":
        return cls.from_qubits([str(int(b)) for b in a_bits], [str(int(b)) for b in b_bits])

    @classmethod
    def uniform(cls, pair_count: int, state="+") -> "RegisterState":
        return cls.from_qubits([state] * pair_count, [state] * pair_count)

    def replace_pair(self, nu: int, a_state, b_state) -> "RegisterState":
        """New register state with pair ``nu`` replaced."""
        alpha = self.alpha.copy()
        beta = self.beta.copy()
        alpha[nu - 1] = single_qubit_state(a_state)
        beta[nu - 1] = single_qubit_state(b_state)
        return RegisterState(alpha, beta)

    def validate(self):
        norms = np.concatenate([np.abs(self.alpha) ** 2, np.abs(self.beta) ** 2]).sum(axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_ATOL):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ValueError(f"register qubit state not normalized: |norm^2 - 1| up to {worst:.2e}")


@dataclass
class SectorState:
    """Pure state stored per populated excitation sector.

    ``sectors[k]`` is the complex amplitude vector over ``layout.basis(k)``;
    unpopulated sectors are absent.
    """

    layout: SystemLayout
    sectors: dict[int, np.ndarray]

    @property
    def populated(self) -> tuple[int, ...]:
        return tuple(sorted(self.sectors))

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(v, v).real for v in self.sectors.values())))

    def overlap(self, other: "SectorState") -> complex:
        """Inner product ``<self|other>``."""
        _check_same_layout(self.layout, other.layout)
        total = 0.0 + 0.0j
        for k, v in self.sectors.items():
            if k in other.sectors:
                total += np.vdot(v, other.sectors[k])
        return complex(total)

    def copy(self) -> "SectorState":
        return SectorState(self.layout, {k: v.copy() for k, v in self.sectors.items()})


def _check_same_layout(a: SystemLayout, b: SystemLayout):
    if a != b:
        raise ValueError(f"layout mismatch: ({a.chain_length},{a.pair_count}) vs ({b.chain_length},{b.pair_count})")


def encode_product_state(layout: SystemLayout, regs: RegisterState) -> SectorState:
    """Sector decomposition of (register A) x (bus vacuum) x (register B).

    Expands the register product state over the computational basis; the
    populated sectors are exactly ``k = 0 .. 2M``.
    """
    if regs.pair_count != layout.pair_count:
        raise ValueError(f"register state has {regs.pair_count} pairs, layout has {layout.pair_count}")
    regs.validate()
    m = layout.pair_count
    amps: dict[int, list] = {}
    for bits in product((0, 1), repeat=2 * m):
        a_bits, b_bits = bits[:m], bits[m:]
        amp = 1.0 + 0.0j
        state = 0
        for nu in range(1, m + 1):
            amp *= regs.alpha[nu - 1][a_bits[nu - 1]] * regs.beta[nu - 1][b_bits[nu - 1]]
            if a_bits[nu - 1]:
                state |= 1 << layout.site_a(nu)
            if b_bits[nu - 1]:
                state |= 1 << layout.site_b(nu)
        if amp != 0.0:
            amps.setdefault(sum(bits), []).append((state, amp))
    sectors = {}
    for k, entries in amps.items():
        basis = layout.basis(k)
        vec = np.zeros(basis.dimension, dtype=complex)
        for state, amp in entries:
            vec[basis.encode(state)] += amp
        sectors[k] = vec
    return SectorState(layout, sectors)


def _squeeze_out_bits(states: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Drop bit positions ``lo < hi`` from each state, closing the gaps."""
    low = states & ((1 << lo) - 1)
    mid = (states >> (lo + 1)) & ((1 << (hi - lo - 1)) - 1)
    high = states >> (hi + 1)
    return low | (mid << lo) | (high << (hi - 1))


class PairTraceIndex:
    """Precomputed index groups for tracing out everything but one pair.

    For sector ``k`` and pair configuration ``p = 2a + b`` (occupations of
    A_nu and B_nu), ``rows(k, p)`` lists the basis indices whose pair bits
    equal ``p``, ordered by the rank of the remaining-site configuration.
    Groups of equal environment excitation count are therefore aligned
    elementwise, which reduces partial traces to plain dot products.
    """

    def __init__(self, layout: SystemLayout, nu: int):
        self.layout = layout
        self.nu = nu
        self.site_lo, self.site_hi = sorted(layout.pair_sites(nu))
        self._rows: dict[tuple[int, int], np.ndarray] = {}

    def rows(self, k: int, p: int) -> np.ndarray | None:
        """Aligned basis indices for sector ``k``, pair configuration ``p``."""
        n = self.layout.total_sites
        m = k - ((p >> 1) + (p & 1))
        if not 0 <= m <= n - 2:
            return None
        key = (k, p)
        if key not in self._rows:
            self._build_sector(k)
        return self._rows[key]

    def _build_sector(self, k: int):
        layout, n = self.layout, self.layout.total_sites
        a_site, b_site = layout.pair_sites(self.nu)
        states = layout.basis(k).states
        pair_cfg = (((states >> a_site) & 1) << 1) | ((states >> b_site) & 1)
        env = _squeeze_out_bits(states & ~((1 << a_site) | (1 << b_site)), self.site_lo, self.site_hi)
        for p in range(4):
            m = k - ((p >> 1) + (p & 1))
            if not 0 <= m <= n - 2:
                continue
            sel = np.flatnonzero(pair_cfg == p)
            ranks = np.searchsorted(_basis_states(n - 2, m), env[sel])
            self._rows[(k, p)] = sel[np.argsort(ranks)].astype(np.intp)

    def trace_pair(self, bra: SectorState, ket: SectorState) -> np.ndarray:
        """4x4 matrix ``Tr_env |ket><bra|`` on the ordered (A_nu, B_nu) basis."""
        rho = np.zeros((4, 4), dtype=complex)
        weights = (0, 1, 1, 2)
        for p in range(4):
            for q in range(4):
                for k_ket in ket.sectors:
                    k_bra = k_ket - weights[p] + weights[q]
                    if k_bra not in bra.sectors:
                        continue
                    rk = self.rows(k_ket, p)
                    rb = self.rows(k_bra, q)
                    if rk is None or rb is None:
                        continue
                    rho[p, q] += np.vdot(bra.sectors[k_bra][rb], ket.sectors[k_ket][rk])
        return rho

    def trace_pair_operator(self, blocks: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
        """4x4 partial trace of an operator stored as sector blocks.

        ``blocks[(k, k')]`` is the matrix slice between sectors ``k`` (row)
        and ``k'`` (column); rows index the ket side.
        """
        rho = np.zeros((4, 4), dtype=complex)
        weights = (0, 1, 1, 2)
        for (k_row, k_col), block in blocks.items():
            for p in range(4):
                rk = self.rows(k_row, p)
                if rk is None:
                    continue
                for q in range(4):
                    if k_col - weights[q] != k_row - weights[p]:
                        continue
                    rb = self.rows(k_col, q)
                    if rb is None:
                        continue
                    rho[p, q] += block[rk, rb].sum()
        return rho


def partial_trace_pair(bra: SectorState, ket: SectorState, nu: int) -> np.ndarray:
    """``Tr_env |ket><bra|`` over all sites except pair ``nu``.

    Returns the 4x4 matrix on the ordered basis ``{|00>, |01>, |10>, |11>}``
    of (A_nu, B_nu).  Both states must live on the same layout.
    """
    _check_same_layout(bra.layout, ket.layout)
    return ket.layout.pair_trace_index(nu).trace_pair(bra, ket)
