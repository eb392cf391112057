"""Target gates, per-pair channel reconstruction, and gate fidelities.

At the working time the device swaps the two qubits of each pair while
imprinting configuration-dependent phases; the corresponding target gate
is ``G|ab> = exp(i phi_ab) |ba>``.  Because leakage into the bus and
residual crosstalk make the actual pair dynamics non-unitary, each pair
is described by the channel obtained by evolving the full system and
tracing out everything but that pair.  Reconstructing the channel on the
16 operators ``|j><j'|`` (four evolutions per pair, combined by
linearity) is enough to evaluate the average gate fidelity both in
closed form and by Haar Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import NamedTuple

import numpy as np

from .dynamics import NumericalError, Propagator, evolve, real_matmul
from .system import RegisterState, SectorState, SystemLayout, encode_product_state, partial_trace_pair

#: index permutation realizing |ab> -> |ba> on the ordered pair basis
_SWAP = (0, 2, 1, 3)
_PAIR_WEIGHT = (0, 1, 1, 2)

SPECTATOR_POLICIES = ("plus", "zero", "haar-mean")


class CalibrationError(RuntimeError):
    """Transfer amplitudes too weak to read gate phases off a channel."""


def wrap_phase(phi):
    """Wrap an angle (or array of angles) into (-pi, pi]."""
    return -((-np.asarray(phi) + np.pi) % (2.0 * np.pi) - np.pi)


@dataclass(frozen=True)
class GateTarget:
    """Swap-with-phases two-qubit gate, fixed by its four phases.

    ``phases[j]`` for ``j = 2a + b`` is the phase imprinted on input
    ``|ab>``; the mirror symmetry of the device requires
    ``phases[1] == phases[2]`` (mod 2pi).
    """

    phases: np.ndarray

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        if phases.shape != (4,):
            raise ValueError(f"expected 4 phases, got shape {phases.shape}")
        if abs(wrap_phase(phases[1] - phases[2])) > 1e-9:
            raise ValueError("cross-configuration phases must match (mirror symmetry)")
        object.__setattr__(self, "phases", phases)

    @property
    def matrix(self) -> np.ndarray:
        g = np.zeros((4, 4), dtype=complex)
        for j in range(4):
            g[_SWAP[j], j] = np.exp(1j * self.phases[j])
        return g

    def entangling_combination(self) -> float:
        """phi_00 + phi_11 - phi_01 - phi_10, wrapped into (-pi, pi]."""
        p = self.phases
        return float(wrap_phase(p[0] + p[3] - p[1] - p[2]))

    def unitarity_defect(self) -> float:
        g = self.matrix
        return float(np.max(np.abs(g.conj().T @ g - np.eye(4))))


def ideal_phases(chain_length: int) -> GateTarget:
    """Field-free single-pair phases: 0, (N+1)pi/2 (both cross terms), N pi."""
    if chain_length < 2:
        raise ValueError(f"chain length must be at least 2, got {chain_length}")
    cross = (chain_length + 1) * np.pi / 2.0
    return GateTarget(wrap_phase(np.array([0.0, cross, cross, chain_length * np.pi])))


@dataclass(frozen=True)
class PairChannel:
    """Reconstructed map on one pair: ``elements[j, j']`` = Lambda[|j><j'|].

    ``elements`` has shape (4, 4, 4, 4); ``elements[j, jp, i, ip]`` is
    ``<i| Lambda[|j><jp|] |ip>`` on the ordered (A_nu, B_nu) basis.
    """

    elements: np.ndarray
    pair_index: int = 0
    time: float = 0.0
    spectator_policy: str = ""

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Channel output for a 4x4 input density matrix."""
        return np.einsum("jk,jkil->il", np.asarray(rho, dtype=complex), self.elements)

    def choi(self) -> np.ndarray:
        """Block matrix sum_jj' |j><j'| (x) Lambda[|j><j'|], shape 16x16."""
        return self.elements.transpose(0, 2, 1, 3).reshape(16, 16)

    def trace_defect(self) -> float:
        traces = np.einsum("jkii->jk", self.elements)
        return float(np.max(np.abs(traces - np.eye(4))))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.elements - self.elements.transpose(1, 0, 3, 2).conj())))

    def choi_min_eigenvalue(self) -> float:
        c = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (c + c.conj().T))[0])

    @classmethod
    def from_unitary(cls, u: np.ndarray, **meta) -> "PairChannel":
        u = np.asarray(u, dtype=complex)
        elements = np.einsum("ij,lk->jkil", u, u.conj())
        return cls(elements, **meta)

    @classmethod
    def identity(cls, **meta) -> "PairChannel":
        return cls.from_unitary(np.eye(4), **meta)

    @classmethod
    def depolarizing(cls, **meta) -> "PairChannel":
        elements = np.einsum("jk,il->jkil", np.eye(4), np.eye(4) / 4.0).astype(complex)
        return cls(elements, **meta)


def _pair_initial_state(layout: SystemLayout, nu: int, j: int, spectator) -> SectorState:
    """Full initial state with pair ``nu`` in basis state ``j`` and every
    spectator qubit in ``spectator`` (a qubit spec or per-site callable)."""
    m = layout.pair_count
    pick = spectator if callable(spectator) else (lambda _: spectator)
    a_states = [pick(("a", k)) for k in range(1, m + 1)]
    b_states = [pick(("b", k)) for k in range(1, m + 1)]
    a_states[nu - 1] = str((j >> 1) & 1)
    b_states[nu - 1] = str(j & 1)
    return encode_product_state(layout, RegisterState.from_qubits(a_states, b_states))


def _haar_qubit(rng: np.random.Generator) -> np.ndarray:
    vec = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    return vec / np.linalg.norm(vec)


def _spectator_draws(layout, policy: str, samples: int, seed):
    """List of spectator assignments; one entry per channel realization."""
    if policy == "plus":
        return ["+"]
    if policy == "zero":
        return ["0"]
    if policy == "haar-mean":
        rng = np.random.default_rng(seed)
        draws = []
        for _ in range(samples):
            table = {
                (side, k): _haar_qubit(rng)
                for side in ("a", "b")
                for k in range(1, layout.pair_count + 1)
            }
            draws.append(lambda key, table=table: table[key])
        return draws
    raise ValueError(f"unknown spectator policy {policy!r}; expected one of {SPECTATOR_POLICIES}")


def reconstruct_pair_channel(
    layout: SystemLayout,
    prop: Propagator,
    spectator_policy: str,
    nu: int,
    t: float,
    *,
    samples: int = 8,
    seed: int = 0,
) -> PairChannel:
    """Reconstruct the pair-``nu`` channel at time ``t``.

    Evolves the four initial states with the pair prepared in each
    computational basis state (spectators fixed by the policy) and
    assembles all 16 operator images by linearity:
    ``Lambda[|j><j'|] = Tr_env |Psi_j(t)><Psi_j'(t)|``.  The policy
    ``haar-mean`` averages the channel over ``samples`` random spectator
    assignments drawn from the given seed.
    """
    layout._check_pair(nu)
    elements = np.zeros((4, 4, 4, 4), dtype=complex)
    draws = _spectator_draws(layout, spectator_policy, samples, seed)
    for spectator in draws:
        evolved = [evolve(prop, _pair_initial_state(layout, nu, j, spectator), t) for j in range(4)]
        for j in range(4):
            for jp in range(4):
                elements[j, jp] += partial_trace_pair(evolved[jp], evolved[j], nu)
    elements /= len(draws)
    return PairChannel(elements, pair_index=nu, time=t, spectator_policy=spectator_policy)


def channel_time_series(
    layout: SystemLayout,
    prop: Propagator,
    taus,
    pairs=None,
    spectator_policy: str = "plus",
    *,
    samples: int = 8,
    seed: int = 0,
):
    """Yield ``(tau, {nu: PairChannel})`` over a time grid.

    Equivalent to calling :func:`reconstruct_pair_channel` at every grid
    time, but when all populated sectors have spectral blocks the evolved
    states are rebuilt with one batched matmul per sector and the partial
    traces reduce to small Gram matrices, which makes long sweeps cheap.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    pairs = list(range(1, layout.pair_count + 1)) if pairs is None else list(pairs)
    draws = _spectator_draws(layout, spectator_policy, samples, seed)

    specs = [(nu, s, j) for nu in pairs for s in range(len(draws)) for j in range(4)]
    initial = [_pair_initial_state(layout, nu, j, draws[s]) for nu, s, j in specs]
    populated = sorted({k for state in initial for k in state.sectors})

    if not all(prop.is_spectral(k) for k in populated):
        for tau in taus:
            yield float(tau), {
                nu: reconstruct_pair_channel(
                    layout, prop, spectator_policy, nu, float(tau), samples=samples, seed=seed
                )
                for nu in pairs
            }
        return

    n_states = len(specs)
    coeffs = {}
    for k in populated:
        block = prop.spectral_blocks[k]
        psi0 = np.zeros((block.eigenvalues.size, n_states), dtype=complex)
        for col, state in enumerate(initial):
            if k in state.sectors:
                psi0[:, col] = state.sectors[k]
        coeffs[k] = real_matmul(block.eigenvectors.T, psi0)

    indices = {nu: layout.pair_trace_index(nu) for nu in pairs}
    n_env = layout.total_sites - 2
    env_counts = sorted({k - w for k in populated for w in (0, 1, 2) if 0 <= k - w <= n_env})
    col_of = {spec: col for col, spec in enumerate(specs)}

    for tau in taus:
        evolved = {}
        for k in populated:
            block = prop.spectral_blocks[k]
            phased = np.exp(-1j * block.eigenvalues * tau)[:, None] * coeffs[k]
            evolved[k] = real_matmul(block.eigenvectors, phased)
        channels = {}
        for nu in pairs:
            acc = np.zeros((16, 16), dtype=complex)
            for s in range(len(draws)):
                cols = [col_of[(nu, s, j)] for j in range(4)]
                for m in env_counts:
                    env_dim = comb(n_env, m)
                    bmat = np.zeros((16, env_dim), dtype=complex)
                    filled = False
                    for p in range(4):
                        k = m + _PAIR_WEIGHT[p]
                        if k not in evolved:
                            continue
                        rows = indices[nu].rows(k, p)
                        if rows is None:
                            continue
                        for j in range(4):
                            bmat[4 * j + p] = evolved[k][rows, cols[j]]
                            filled = True
                    if filled:
                        acc += bmat @ bmat.conj().T
            elements = acc.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3) / len(draws)
            channels[nu] = PairChannel(
                elements, pair_index=nu, time=float(tau), spectator_policy=spectator_policy
            )
        yield float(tau), channels


def average_gate_fidelity(channel: PairChannel, gate: GateTarget) -> float:
    """Closed-form Haar-average fidelity of a channel against a target gate.

    Equals ``1/5 + (1/20) * sum conj(G)_ij <i|Lambda[|j><j'|]|i'> G_i'j'``;
    the imaginary residue of the sum must vanish for a physical channel.
    """
    g = gate.matrix
    total = np.einsum("ij,jkil,lk->", g.conj(), channel.elements, g)
    if abs(total.imag) > 1e-6:
        raise NumericalError(f"fidelity sum has imaginary part {total.imag:.2e}; channel is inconsistent")
    return float(0.2 + total.real / 20.0)


class MonteCarloFidelity(NamedTuple):
    value: float
    stderr: float


def haar_average_fidelity_mc(
    channel: PairChannel, gate: GateTarget, samples: int = 2000, seed: int = 0
) -> MonteCarloFidelity:
    """Monte-Carlo estimate of the Haar-average gate fidelity.

    Samples two-qubit pure states uniformly and averages
    ``<psi| G^dag Lambda[|psi><psi|] G |psi>``; deterministic for a fixed
    seed.  Requires at least 100 samples.
    """
    if samples < 100:
        raise ValueError(f"need at least 100 samples, got {samples}")
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal((samples, 4)) + 1j * rng.standard_normal((samples, 4))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    out = psi @ gate.matrix.T
    vals = np.einsum(
        "sj,sk,jkil,si,sl->s", psi, psi.conj(), channel.elements, out.conj(), out
    ).real
    return MonteCarloFidelity(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)))


def calibrate_phases(channel: PairChannel, *, threshold: float = 0.5) -> GateTarget:
    """Read the swap phases off a reconstructed channel.

    Uses the transfer amplitudes ``<ba| Lambda[|ab><00|] |00>``, which for
    a clean swap-with-phases gate equal ``exp(i(phi_ab - phi_00))``.  The
    reference phase is fixed so ``phi_00 = 0`` and the two cross
    configurations are symmetrized by circular averaging.  Raises
    :class:`CalibrationError` when any amplitude magnitude drops below
    ``threshold`` (the channel is then too far from a swap to calibrate).
    """
    t = np.array([channel.elements[j, 0, _SWAP[j], 0] for j in range(4)])
    mags = np.abs(t)
    if mags.min() < threshold:
        raise CalibrationError(
            f"transfer amplitudes {np.array2string(mags, precision=3)} below threshold {threshold}"
        )
    rel = np.angle(t) - np.angle(t[0])
    cross = float(np.angle(np.exp(1j * rel[1]) + np.exp(1j * rel[2])))
    return GateTarget(wrap_phase(np.array([0.0, cross, cross, rel[3]])))


@dataclass(frozen=True)
class FidelityReport:
    """Per-pair average gate fidelities and their mean at one time."""

    time: float
    pair_fidelities: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.pair_fidelities))


def mean_fidelity(channels, gates, time: float | None = None) -> FidelityReport:
    """Average gate fidelity per pair plus their arithmetic mean."""
    channels, gates = list(channels), list(gates)
    if len(channels) != len(gates):
        raise ValueError(f"{len(channels)} channels but {len(gates)} gates")
    fids = tuple(average_gate_fidelity(c, g) for c, g in zip(channels, gates))
    if time is None:
        time = channels[0].time if channels else 0.0
    return FidelityReport(float(time), fids)


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    sy = np.array([[0.0, -1j], [1j, 0.0]])
    yy = np.kron(sy, sy)
    r = rho @ yy @ rho.conj() @ yy
    eigs = np.sort(np.sqrt(np.clip(np.linalg.eigvals(r).real, 0.0, None)))[::-1]
    return float(max(0.0, eigs[0] - eigs[1] - eigs[2] - eigs[3]))
