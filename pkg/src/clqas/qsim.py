"""Exact statevector simulation of small qubit registers.

Conventions, fixed once and tested everywhere:
  - qubit 0 is the most significant bit of the basis index;
  - rotations follow R_P(t) = exp(-i t P / 2);
  - all operations are value-semantic at the public API (inputs never mutated).

The module-level array functions accept amplitudes of shape (..., 2**U) with
arbitrary leading batch dimensions; rotation angles may then be per-row
vectors matching the batch. The dataclass wrappers below expose the
single-state contract used by the classifier and the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuantumState",
    "Gate",
    "prepare_amplitude_state",
    "prepare_angle_state",
    "apply_gate",
    "expect_z_all",
    "sample_bitstrings",
    "angle_state_batch",
    "apply_rotation",
    "apply_pauli",
    "apply_cnot",
    "rotate_inplace",
    "pauli_inplace",
    "cnot_inplace",
    "expectations_z",
]

ROTATION_KINDS = ("rx", "ry", "rz")
_NORM_TOL = 1e-8


def _as_batch(amps: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    lead = amps.shape[:-1]
    return amps.reshape(-1, amps.shape[-1]), lead


def _qubit_view(batch: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    if not 0 <= qubit < num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {num_qubits} qubits")
    left = 1 << qubit
    right = 1 << (num_qubits - qubit - 1)
    return batch.reshape(batch.shape[0], left, 2, right)


def _expand_angle(angle, nbatch: int) -> np.ndarray:
    arr = np.asarray(angle, dtype=float)
    if arr.ndim == 0:
        return np.full((nbatch, 1, 1), float(arr))
    if arr.shape != (nbatch,):
        raise ValueError(f"per-row angles must have shape ({nbatch},), got {arr.shape}")
    return arr.reshape(nbatch, 1, 1)


def rotate_inplace(batch: np.ndarray, axis: str, qubit: int, angle, num_qubits: int):
    """In-place rotation on a (B, 2**U) complex working buffer (hot path)."""
    view = _qubit_view(batch, qubit, num_qubits)
    half = _expand_angle(angle, batch.shape[0]) / 2.0
    if axis == "rz":
        view[:, :, 0, :] *= np.exp(-1j * half)
        view[:, :, 1, :] *= np.exp(1j * half)
        return
    a0 = view[:, :, 0, :].copy()
    a1 = view[:, :, 1, :]
    c, s = np.cos(half), np.sin(half)
    if axis == "rx":
        view[:, :, 0, :] = c * a0 - 1j * s * a1
        view[:, :, 1, :] = -1j * s * a0 + c * a1
    elif axis == "ry":
        view[:, :, 0, :] = c * a0 - s * a1
        view[:, :, 1, :] = s * a0 + c * a1
    else:
        raise ValueError(f"unknown rotation axis {axis!r}")


def pauli_inplace(batch: np.ndarray, axis: str, qubit: int, num_qubits: int):
    """In-place Pauli X, Y or Z on a (B, 2**U) working buffer."""
    view = _qubit_view(batch, qubit, num_qubits)
    if axis == "z":
        view[:, :, 1, :] *= -1.0
        return
    a0 = view[:, :, 0, :].copy()
    if axis == "x":
        view[:, :, 0, :] = view[:, :, 1, :]
        view[:, :, 1, :] = a0
    elif axis == "y":
        view[:, :, 0, :] = -1j * view[:, :, 1, :]
        view[:, :, 1, :] = 1j * a0
    else:
        raise ValueError(f"unknown Pauli axis {axis!r}")


def cnot_inplace(batch: np.ndarray, control: int, target: int, num_qubits: int):
    """In-place CNOT on a (B, 2**U) working buffer."""
    if control == target:
        raise ValueError("control and target must differ")
    for q in (control, target):
        if not 0 <= q < num_qubits:
            raise ValueError(f"qubit {q} out of range for {num_qubits} qubits")
    lo, hi = min(control, target), max(control, target)
    left = 1 << lo
    mid = 1 << (hi - lo - 1)
    right = 1 << (num_qubits - hi - 1)
    view = batch.reshape(batch.shape[0], left, 2, mid, 2, right)
    if control == lo:
        keep = view[:, :, 1, :, 0, :].copy()
        view[:, :, 1, :, 0, :] = view[:, :, 1, :, 1, :]
        view[:, :, 1, :, 1, :] = keep
    else:
        keep = view[:, :, 0, :, 1, :].copy()
        view[:, :, 0, :, 1, :] = view[:, :, 1, :, 1, :]
        view[:, :, 1, :, 1, :] = keep


def apply_rotation(amps: np.ndarray, axis: str, qubit: int, angle, num_qubits: int) -> np.ndarray:
    """R_axis(angle) on one qubit; angle scalar or per-row over the batch."""
    batch, lead = _as_batch(np.asarray(amps, dtype=complex))
    out = batch.copy()
    rotate_inplace(out, axis, qubit, angle, num_qubits)
    return out.reshape(*lead, -1)


def apply_pauli(amps: np.ndarray, axis: str, qubit: int, num_qubits: int) -> np.ndarray:
    """Apply a single Pauli X, Y or Z to one qubit."""
    batch, lead = _as_batch(np.asarray(amps, dtype=complex))
    out = batch.copy()
    pauli_inplace(out, axis, qubit, num_qubits)
    return out.reshape(*lead, -1)


def apply_cnot(amps: np.ndarray, control: int, target: int, num_qubits: int) -> np.ndarray:
    """CNOT with the given control and target qubits."""
    batch, lead = _as_batch(np.asarray(amps, dtype=complex))
    out = batch.copy()
    cnot_inplace(out, control, target, num_qubits)
    return out.reshape(*lead, -1)


def expectations_z(amps: np.ndarray, num_qubits: int) -> np.ndarray:
    """Pauli-Z expectation of every qubit; shape (..., U)."""
    batch, lead = _as_batch(np.asarray(amps, dtype=complex))
    probs = np.abs(batch) ** 2
    z = np.empty((batch.shape[0], num_qubits))
    for u in range(num_qubits):
        view = _qubit_view(probs, u, num_qubits)
        z[:, u] = view[:, :, 0, :].sum(axis=(1, 2)) - view[:, :, 1, :].sum(axis=(1, 2))
    return z.reshape(*lead, num_qubits)


def angle_state_batch(angles: np.ndarray) -> np.ndarray:
    """Product states prod_u RY(a_u)|0> for a batch of angle rows (B, U)."""
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    nb, num_qubits = angles.shape
    amps = np.ones((nb, 1), dtype=complex)
    half = angles / 2.0
    for u in range(num_qubits):
        qubit = np.stack([np.cos(half[:, u]), np.sin(half[:, u])], axis=1)
        amps = (amps[:, :, None] * qubit[:, None, :]).reshape(nb, -1)
    return amps


@dataclass
class QuantumState:
    """Unit-norm complex amplitude vector over num_qubits qubits."""

    amplitudes: np.ndarray
    num_qubits: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"amplitude vector of length {self.amplitudes.size} "
                f"is not 2**{self.num_qubits}"
            )
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"state norm {norm} deviates from 1")


@dataclass(frozen=True)
class Gate:
    """One circuit operation: rx/ry/rz on a qubit, or cnot on (control, target)."""

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    param_slot: int | None = None

    def __post_init__(self):
        if self.kind in ROTATION_KINDS:
            if len(self.qubits) != 1:
                raise ValueError(f"{self.kind} acts on exactly one qubit")
            if self.angle is None:
                raise ValueError(f"{self.kind} requires an angle")
        elif self.kind == "cnot":
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise ValueError("cnot needs distinct (control, target)")
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")


def prepare_amplitude_state(x: np.ndarray) -> QuantumState:
    """Normalize a real vector of power-of-two length into state amplitudes."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2 or (x.size & (x.size - 1)) != 0:
        raise ValueError(f"length {x.size} is not a power of two >= 2")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ValueError("cannot encode the zero vector as amplitudes")
    return QuantumState(x / norm, int(np.log2(x.size)))


def prepare_angle_state(angles: np.ndarray) -> QuantumState:
    """Product state with each qubit rotated by RY(angle) from |0>."""
    angles = np.asarray(angles, dtype=float)
    if angles.ndim != 1 or angles.size < 1:
        raise ValueError("angles must be a nonempty vector")
    return QuantumState(angle_state_batch(angles)[0], angles.size)


def apply_gate(state: QuantumState, gate: Gate) -> QuantumState:
    """Apply one gate, returning a new state (inputs untouched)."""
    if gate.kind in ROTATION_KINDS:
        amps = apply_rotation(
            state.amplitudes, gate.kind, gate.qubits[0], gate.angle, state.num_qubits
        )
    else:
        amps = apply_cnot(state.amplitudes, gate.qubits[0], gate.qubits[1], state.num_qubits)
    return QuantumState(amps, state.num_qubits)


def expect_z_all(state: QuantumState) -> np.ndarray:
    """Vector of per-qubit Z expectations, each in [-1, 1]."""
    return expectations_z(state.amplitudes, state.num_qubits)


def sample_bitstrings(
    state: QuantumState, shots: int, rng: np.random.Generator
) -> tuple[list[str], np.ndarray]:
    """Draw measurement outcomes and the empirical Z-expectation vector.

    Returns (bitstrings, z_hat); bit u of each string is qubit u (MSB first).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = np.abs(state.amplitudes) ** 2
    probs = probs / probs.sum()
    outcomes = rng.choice(probs.size, size=shots, p=probs)
    num_qubits = state.num_qubits
    bits = (outcomes[:, None] >> np.arange(num_qubits - 1, -1, -1)) & 1
    z_hat = 1.0 - 2.0 * bits.mean(axis=0)
    strings = [format(o, f"0{num_qubits}b") for o in outcomes]
    return strings, z_hat
