"""Analytic expectation-contraction noise model and stochastic trajectory channels.

The analytic model multiplies the Z-expectation vector by
alpha = zeta1**n1 * zeta2**n2 * (1 - 2*pr), with zeta1 = 1 - 4*p1/3 and
zeta2 = 1 - 16*p2/15 under the standard convention (a linear convention
zeta_i = 1 - p_i is available as a switch). The stochastic channels below
(Pauli insertion, readout flips, encoder-angle jitter) unravel the same
channels trajectory-wise so Monte Carlo means can be checked against the
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import Gate, QuantumState, apply_pauli

__all__ = [
    "NoiseModel",
    "GateCensus",
    "contraction_alpha",
    "apply_expectation_noise",
    "stochastic_depolarize",
    "stochastic_depolarize_2q",
    "depolarize_rows",
    "depolarize_2q_rows",
    "readout_flip",
    "flip_bits",
    "jitter_angles",
]

CONVENTIONS = ("standard", "linear")
_PAULI_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing, readout and encoder-jitter noise parameters.

    Defaults mirror the benchmark configuration: 0.1% single-qubit
    depolarizing, 0.1% two-qubit Pauli error, 1% readout error, no jitter.
    """

    p1: float = 0.001
    p2: float = 0.001
    pr: float = 0.01
    eps_jitter: float = 0.0
    convention: str = "standard"

    def __post_init__(self):
        for name, p in (("p1", self.p1), ("p2", self.p2)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 <= self.pr < 0.5:
            raise ValueError(f"pr must be in [0, 0.5), got {self.pr}")
        if self.eps_jitter < 0.0:
            raise ValueError("eps_jitter must be nonnegative")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")

    @property
    def zeta1(self) -> float:
        if self.convention == "standard":
            return 1.0 - 4.0 * self.p1 / 3.0
        return 1.0 - self.p1

    @property
    def zeta2(self) -> float:
        if self.convention == "standard":
            return 1.0 - 16.0 * self.p2 / 15.0
        return 1.0 - self.p2

    @property
    def is_trivial(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0 and self.pr == 0.0 and self.eps_jitter == 0.0


@dataclass(frozen=True)
class GateCensus:
    """Counts of one- and two-qubit gates in a circuit."""

    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0:
            raise ValueError("gate counts must be nonnegative")

    @classmethod
    def from_gates(cls, gates: list[Gate]) -> "GateCensus":
        n2 = sum(1 for g in gates if g.kind == "cnot")
        return cls(n1=len(gates) - n2, n2=n2)


def contraction_alpha(noise: NoiseModel, census: GateCensus) -> float:
    """Expectation contraction factor zeta1**n1 * zeta2**n2 * (1 - 2*pr)."""
    return noise.zeta1**census.n1 * noise.zeta2**census.n2 * (1.0 - 2.0 * noise.pr)


def apply_expectation_noise(
    z: np.ndarray,
    alpha: float,
    delta: np.ndarray | None = None,
    delta_bound: float = 0.0,
) -> np.ndarray:
    """Contract expectations to alpha*z + delta, clamped to [-1, 1].

    delta defaults to zero; when supplied its 2-norm must respect the
    declared bound.
    """
    z = np.asarray(z, dtype=float)
    if delta is None:
        delta = np.zeros_like(z)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != z.shape:
        raise ValueError(f"delta shape {delta.shape} != z shape {z.shape}")
    if np.linalg.norm(delta) > delta_bound + 1e-12:
        raise ValueError(
            f"||delta|| = {np.linalg.norm(delta):.3g} exceeds the declared bound {delta_bound:.3g}"
        )
    return np.clip(alpha * z + delta, -1.0, 1.0)


def depolarize_rows(
    amps: np.ndarray, qubits, p: float, rng: np.random.Generator, num_qubits: int,
    inplace: bool = False,
) -> np.ndarray:
    """Single-qubit depolarizing on each listed qubit, independently per row.

    With probability p a uniformly chosen non-identity Pauli is applied.
    amps has shape (B, 2**U).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    out = amps if inplace else np.array(amps, dtype=complex)
    nb = out.shape[0]
    for q in qubits:
        hit = np.flatnonzero(rng.random(nb) < p)
        if hit.size == 0:
            continue
        choice = rng.integers(0, 3, size=hit.size)
        for c, axis in enumerate(_PAULI_AXES):
            rows = hit[choice == c]
            if rows.size:
                out[rows] = apply_pauli(out[rows], axis, q, num_qubits)
    return out


def depolarize_2q_rows(
    amps: np.ndarray, pairs, p: float, rng: np.random.Generator, num_qubits: int,
    inplace: bool = False,
) -> np.ndarray:
    """Two-qubit depolarizing: with probability p, one of the 15 non-identity
    two-qubit Paulis (uniform) hits the pair. Independent per row and pair."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    out = amps if inplace else np.array(amps, dtype=complex)
    nb = out.shape[0]
    for qa, qb in pairs:
        hit = np.flatnonzero(rng.random(nb) < p)
        if hit.size == 0:
            continue
        # codes 1..15 encode (pauli_a, pauli_b) in base 4, 0 = identity
        codes = rng.integers(1, 16, size=hit.size)
        for code in np.unique(codes):
            rows = hit[codes == code]
            pa, pb = divmod(int(code), 4)
            sub = out[rows]
            if pa:
                sub = apply_pauli(sub, _PAULI_AXES[pa - 1], qa, num_qubits)
            if pb:
                sub = apply_pauli(sub, _PAULI_AXES[pb - 1], qb, num_qubits)
            out[rows] = sub
    return out


def stochastic_depolarize(
    state: QuantumState, qubits, p: float, rng: np.random.Generator
) -> QuantumState:
    """Trajectory unraveling of the single-qubit depolarizing channel."""
    amps = depolarize_rows(state.amplitudes[None, :], qubits, p, rng, state.num_qubits)
    return QuantumState(amps[0], state.num_qubits)


def stochastic_depolarize_2q(
    state: QuantumState, pairs, p: float, rng: np.random.Generator
) -> QuantumState:
    """Trajectory unraveling of the two-qubit depolarizing channel."""
    amps = depolarize_2q_rows(state.amplitudes[None, :], pairs, p, rng, state.num_qubits)
    return QuantumState(amps[0], state.num_qubits)


def flip_bits(bits: np.ndarray, pr: float, rng: np.random.Generator) -> np.ndarray:
    """Flip each 0/1 entry independently with probability pr."""
    if not 0.0 <= pr < 0.5:
        raise ValueError(f"pr must be in [0, 0.5), got {pr}")
    bits = np.asarray(bits)
    flips = rng.random(bits.shape) < pr
    return np.where(flips, 1 - bits, bits)


def readout_flip(bits: str, pr: float, rng: np.random.Generator) -> str:
    """Symmetric readout error on a measured bitstring."""
    arr = np.frombuffer(bits.encode(), dtype=np.uint8) - ord("0")
    if np.any(arr > 1):
        raise ValueError(f"not a bitstring: {bits!r}")
    flipped = flip_bits(arr, pr, rng)
    return "".join("1" if b else "0" for b in flipped)


def jitter_angles(angles: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. uniform noise in [-eps, eps] to every encoder angle."""
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    angles = np.asarray(angles, dtype=float)
    if eps == 0.0:
        return angles.copy()
    return angles + rng.uniform(-eps, eps, size=angles.shape)
