"""Variational circuit classifier: circuit construction, class probabilities,
cross-entropy loss, exact gradients, and Adam updates.

Two gradient routes are provided and tested against each other:
  - `gradient` evaluates the parameter-shift rule on every rotation slot and
    chains it with the analytic softmax-cross-entropy Jacobian; it is the
    contract implementation, checkable term by term.
  - `gradient_adjoint` computes the same values with a reverse statevector
    sweep in O(#gates) instead of O(#slots * #gates); training uses it.

Encoder gradients flow through the angle-preparation RY layer into the
TT-linear cores in both routes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise import GateCensus, NoiseModel, contraction_alpha, depolarize_rows, flip_bits
from .policy import Architecture, entangler_pairs
from .qsim import (
    Gate,
    angle_state_batch,
    apply_pauli,
    cnot_inplace,
    expectations_z,
    pauli_inplace,
    rotate_inplace,
)
from .tt import TTLinear, tt_linear_forward, tt_linear_grad

__all__ = [
    "CircuitParams",
    "ClassifierHead",
    "AdamState",
    "adam_step",
    "build_circuit",
    "init_theta",
    "circuit_expectations",
    "forward",
    "loss",
    "cross_entropy_from_probs",
    "gradient",
    "gradient_adjoint",
    "train_classifier",
    "trajectory_expectations",
    "shot_trajectory_expectations",
    "evaluate",
]

_ROTATION_AXES = {"rx": "x", "ry": "y", "rz": "z"}


@dataclass
class CircuitParams:
    """Flat rotation-angle vector bound to an architecture's parameter slots."""

    theta: np.ndarray
    arch: Architecture

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.arch.num_param_slots,):
            raise ValueError(
                f"theta has {self.theta.size} entries, architecture needs "
                f"{self.arch.num_param_slots}"
            )


@dataclass(frozen=True)
class ClassifierHead:
    """Softmax over the first num_classes Z-expectations."""

    num_classes: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least two classes")


def build_circuit(arch: Architecture, theta: np.ndarray) -> list[Gate]:
    """Emit rotation gates (slot-bound) then entangler CNOTs, layer by layer."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (arch.num_param_slots,):
        raise ValueError(
            f"theta has {theta.size} entries, architecture needs {arch.num_param_slots}"
        )
    gates: list[Gate] = []
    slot = 0
    for lay in arch.layers:
        for u, rot in enumerate(lay.rotations):
            if rot == "id":
                continue
            kinds = ("rx", "ry", "rz") if rot == "rxyz" else (rot,)
            for kind in kinds:
                gates.append(Gate(kind, (u,), float(theta[slot]), param_slot=slot))
                slot += 1
        for c, t in entangler_pairs(lay.entangler, arch.num_qubits):
            gates.append(Gate("cnot", (c, t)))
    return gates


def init_theta(arch: Architecture, rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
    """Small random angles keep the initial circuit near the identity."""
    return rng.uniform(-scale, scale, size=arch.num_param_slots)


def _run_gates(amps: np.ndarray, gates: list[Gate], num_qubits: int) -> np.ndarray:
    """Apply gates to a fresh working copy of the (B, 2**U) batch."""
    amps = np.array(amps, dtype=complex)
    for g in gates:
        if g.kind == "cnot":
            cnot_inplace(amps, g.qubits[0], g.qubits[1], num_qubits)
        else:
            rotate_inplace(amps, g.kind, g.qubits[0], g.angle, num_qubits)
    return amps


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def cross_entropy_from_probs(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    if probs.shape[0] == 0:
        raise ValueError("empty batch")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def _as_batch_xy(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def circuit_expectations(
    x: np.ndarray, theta: np.ndarray, arch: Architecture, encoder: TTLinear
) -> np.ndarray:
    """Exact Z-expectation vector(s) of the encoded and circuit-evolved state."""
    batch, single = _as_batch_xy(x)
    angles = tt_linear_forward(batch, encoder)
    amps = angle_state_batch(angles)
    amps = _run_gates(amps, build_circuit(arch, theta), arch.num_qubits)
    z = expectations_z(amps, arch.num_qubits)
    return z[0] if single else z


def _check_head(head: ClassifierHead, arch: Architecture):
    if head.num_classes >= arch.num_qubits:
        raise ValueError(
            f"num_classes {head.num_classes} must be < num_qubits {arch.num_qubits}"
        )


def _sample_z_rows(
    amps: np.ndarray, num_qubits: int, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Shot-estimated Z expectations, one row of shots per state row."""
    probs = np.abs(amps) ** 2
    probs /= probs.sum(axis=1, keepdims=True)
    z = np.empty((amps.shape[0], num_qubits))
    weights = np.arange(num_qubits - 1, -1, -1)
    for b in range(amps.shape[0]):
        outcomes = rng.choice(probs.shape[1], size=shots, p=probs[b])
        bits = (outcomes[:, None] >> weights) & 1
        z[b] = 1.0 - 2.0 * bits.mean(axis=0)
    return z


def forward(
    x: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    head: ClassifierHead,
    encoder: TTLinear,
    noise: NoiseModel | None = None,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Class probabilities: encode, evolve, measure Z, optionally contract
    expectations under noise, softmax over the first num_classes entries."""
    _check_head(head, arch)
    batch, single = _as_batch_xy(x)
    angles = tt_linear_forward(batch, encoder)
    gates = build_circuit(arch, theta)
    amps = _run_gates(angle_state_batch(angles), gates, arch.num_qubits)
    if shots > 0:
        if rng is None:
            raise ValueError("shot sampling requires an rng")
        z = _sample_z_rows(amps, arch.num_qubits, shots, rng)
    else:
        z = expectations_z(amps, arch.num_qubits)
    if noise is not None:
        alpha = contraction_alpha(noise, GateCensus.from_gates(gates))
        z = np.clip(alpha * z, -1.0, 1.0)
    probs = _softmax_rows(z[:, : head.num_classes])
    return probs[0] if single else probs


def loss(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    head: ClassifierHead,
    encoder: TTLinear,
    noise: NoiseModel | None = None,
) -> float:
    """Mean cross-entropy of the batch under exact expectations."""
    batch, _ = _as_batch_xy(x)
    y = np.atleast_1d(np.asarray(y, dtype=int))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    if np.any((y < 0) | (y >= head.num_classes)):
        raise ValueError("labels out of range")
    probs = forward(batch, theta, arch, head, encoder, noise=noise)
    return cross_entropy_from_probs(probs, y)


def _loss_upstream(z: np.ndarray, y: np.ndarray, head: ClassifierHead) -> tuple[float, np.ndarray]:
    """Loss and dL/dz (zero beyond the first num_classes columns)."""
    nb = z.shape[0]
    probs = _softmax_rows(z[:, : head.num_classes])
    value = cross_entropy_from_probs(probs, y)
    upstream = np.zeros_like(z)
    upstream[:, : head.num_classes] = probs
    upstream[np.arange(nb), y] -= 1.0
    return value, upstream / nb


def gradient(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    head: ClassifierHead,
    encoder: TTLinear,
    shots: int = 0,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Parameter-shift gradients for theta and the encoder cores.

    dz/dtheta_i = (z(theta_i + pi/2) - z(theta_i - pi/2)) / 2 per slot, and
    the same shift on each preparation angle feeds the TT-core chain rule.
    Exact-expectation mode only.
    """
    if shots:
        raise ValueError("gradients are exact-mode only; shot mode is unsupported")
    _check_head(head, arch)
    batch, _ = _as_batch_xy(x)
    y = np.atleast_1d(np.asarray(y, dtype=int))
    num_qubits = arch.num_qubits

    angles = tt_linear_forward(batch, encoder)
    base_state = angle_state_batch(angles)

    def z_of(th: np.ndarray, prep: np.ndarray | None = None) -> np.ndarray:
        start = base_state if prep is None else angle_state_batch(prep)
        return expectations_z(
            _run_gates(start, build_circuit(arch, th), num_qubits), num_qubits
        )

    z = z_of(theta)
    _, upstream = _loss_upstream(z, y, head)

    grad_theta = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += np.pi / 2
        dn[i] -= np.pi / 2
        dz = (z_of(up) - z_of(dn)) / 2.0
        grad_theta[i] = float(np.sum(upstream * dz))

    upstream_angles = np.zeros_like(angles)
    for u in range(num_qubits):
        up, dn = angles.copy(), angles.copy()
        up[:, u] += np.pi / 2
        dn[:, u] -= np.pi / 2
        dz = (z_of(theta, prep=up) - z_of(theta, prep=dn)) / 2.0
        upstream_angles[:, u] = np.sum(upstream * dz, axis=1)
    grad_cores = tt_linear_grad(batch, encoder, upstream_angles)
    return grad_theta, grad_cores


def _parity_signs(num_qubits: int) -> np.ndarray:
    idx = np.arange(1 << num_qubits)
    bits = (idx[:, None] >> np.arange(num_qubits - 1, -1, -1)) & 1
    return 1.0 - 2.0 * bits  # (2**U, U)


def gradient_adjoint(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    head: ClassifierHead,
    encoder: TTLinear,
) -> tuple[np.ndarray, list[np.ndarray], float]:
    """Reverse-sweep gradients, numerically identical to the parameter-shift
    route but with cost independent of the slot count. Also returns the loss."""
    _check_head(head, arch)
    batch, _ = _as_batch_xy(x)
    y = np.atleast_1d(np.asarray(y, dtype=int))
    num_qubits = arch.num_qubits

    angles = tt_linear_forward(batch, encoder)
    gates = build_circuit(arch, theta)
    amps = _run_gates(angle_state_batch(angles), gates, num_qubits)
    z = expectations_z(amps, num_qubits)
    value, upstream = _loss_upstream(z, y, head)

    # lam = O|psi> with the diagonal observable O = sum_u w_u Z_u per row
    diag = upstream @ _parity_signs(num_qubits).T
    lam = diag * amps

    grad_theta = np.zeros_like(theta)
    for g in reversed(gates):
        if g.kind == "cnot":
            cnot_inplace(amps, g.qubits[0], g.qubits[1], num_qubits)
            cnot_inplace(lam, g.qubits[0], g.qubits[1], num_qubits)
            continue
        q = g.qubits[0]
        paulied = apply_pauli(amps, _ROTATION_AXES[g.kind], q, num_qubits)
        contrib = np.imag(np.sum(np.conj(lam) * paulied, axis=1))
        grad_theta[g.param_slot] = float(contrib.sum())
        rotate_inplace(amps, g.kind, q, -g.angle, num_qubits)
        rotate_inplace(lam, g.kind, q, -g.angle, num_qubits)

    upstream_angles = np.zeros_like(angles)
    for u in range(num_qubits - 1, -1, -1):
        paulied = apply_pauli(amps, "y", u, num_qubits)
        upstream_angles[:, u] = np.imag(np.sum(np.conj(lam) * paulied, axis=1))
        rotate_inplace(amps, "ry", u, -angles[:, u], num_qubits)
        rotate_inplace(lam, "ry", u, -angles[:, u], num_qubits)
    grad_cores = tt_linear_grad(batch, encoder, upstream_angles)
    return grad_theta, grad_cores, value


@dataclass
class AdamState:
    """First/second moment accumulators for a list of parameter arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def init(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float = 3e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh arrays and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must align")
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g**2
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    grad_sq_norms: list[float] = field(default_factory=list)


def train_classifier(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    head: ClassifierHead,
    encoder: TTLinear,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, TTLinear, TrainHistory]:
    """Mini-batch Adam training of theta and the encoder cores."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    theta = np.array(theta, dtype=float)
    encoder = encoder.copy()
    params = [theta] + list(encoder.cores)
    state = AdamState.init(params)
    history = TrainHistory()
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            g_theta, g_cores, batch_loss = gradient_adjoint(
                x[idx], y[idx], params[0], arch, head, encoder
            )
            grads = [g_theta] + g_cores
            history.losses.append(batch_loss)
            history.grad_sq_norms.append(float(sum(np.sum(g**2) for g in grads)))
            params, state = adam_step(params, grads, state, lr=lr)
            encoder.cores = list(params[1:])
    return params[0], encoder, history


def trajectory_expectations(
    x: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    encoder: TTLinear,
    noise: NoiseModel,
    n_traj: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean Z-expectation vector over Pauli-insertion trajectories of one input.

    Depolarizing events follow every circuit gate (single-qubit after
    rotations, two-qubit after CNOTs); encoder jitter perturbs the preparation
    angles per trajectory; the symmetric readout channel enters analytically
    as the exact (1 - 2*pr) contraction of the mean.
    """
    from .noise import depolarize_2q_rows, jitter_angles

    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("one input vector at a time")
    num_qubits = arch.num_qubits
    angles = tt_linear_forward(x, encoder)
    rows = np.tile(angles, (n_traj, 1))
    if noise.eps_jitter > 0:
        rows = jitter_angles(rows, noise.eps_jitter, rng)
    amps = angle_state_batch(rows)
    for g in build_circuit(arch, theta):
        if g.kind == "cnot":
            cnot_inplace(amps, g.qubits[0], g.qubits[1], num_qubits)
            depolarize_2q_rows(amps, [g.qubits], noise.p2, rng, num_qubits, inplace=True)
        else:
            rotate_inplace(amps, g.kind, g.qubits[0], g.angle, num_qubits)
            depolarize_rows(amps, [g.qubits[0]], noise.p1, rng, num_qubits, inplace=True)
    z = expectations_z(amps, num_qubits).mean(axis=0)
    return (1.0 - 2.0 * noise.pr) * z


def shot_trajectory_expectations(
    x: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    encoder: TTLinear,
    noise: NoiseModel,
    shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Empirical Z expectations of one input from `shots` noisy executions.

    Each shot is an independent trajectory measured once, with readout flips
    applied to the sampled bits. Shots whose trajectory has no Pauli event
    share the clean state, so only the eventful ones are simulated.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("one input vector at a time")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    from .noise import jitter_angles

    num_qubits = arch.num_qubits
    gates = build_circuit(arch, theta)
    sites = [(k, g) for k, g in enumerate(gates)]
    probs_site = np.array([noise.p2 if g.kind == "cnot" else noise.p1 for _, g in sites])

    # per-shot event matrix over gate sites
    events = rng.random((shots, len(sites))) < probs_site[None, :]
    if noise.eps_jitter > 0:
        dirty = np.arange(shots)
    else:
        dirty = np.flatnonzero(events.any(axis=1))
    clean_count = shots - dirty.size

    base_angles = tt_linear_forward(x, encoder)
    bit_weights = np.arange(num_qubits - 1, -1, -1)
    all_bits = np.empty((shots, num_qubits), dtype=int)
    row = 0

    if clean_count > 0:
        amps = angle_state_batch(base_angles[None, :])
        amps = _run_gates(amps, gates, num_qubits)
        p = np.abs(amps[0]) ** 2
        p /= p.sum()
        outcomes = rng.choice(p.size, size=clean_count, p=p)
        all_bits[:clean_count] = (outcomes[:, None] >> bit_weights) & 1
        row = clean_count

    if dirty.size > 0:
        angles_rows = np.tile(base_angles, (dirty.size, 1))
        if noise.eps_jitter > 0:
            angles_rows = jitter_angles(angles_rows, noise.eps_jitter, rng)
        amps = angle_state_batch(angles_rows)
        for k, g in sites:
            if g.kind == "cnot":
                cnot_inplace(amps, g.qubits[0], g.qubits[1], num_qubits)
            else:
                rotate_inplace(amps, g.kind, g.qubits[0], g.angle, num_qubits)
            hit = np.flatnonzero(events[dirty, k])
            if hit.size == 0:
                continue
            if g.kind == "cnot":
                codes = rng.integers(1, 16, size=hit.size)
                for code in np.unique(codes):
                    rows_c = hit[codes == code]
                    pa, pb = divmod(int(code), 4)
                    sub = amps[rows_c]
                    if pa:
                        sub = apply_pauli(sub, "xyz"[pa - 1], g.qubits[0], num_qubits)
                    if pb:
                        sub = apply_pauli(sub, "xyz"[pb - 1], g.qubits[1], num_qubits)
                    amps[rows_c] = sub
            else:
                choice = rng.integers(0, 3, size=hit.size)
                for c, axis in enumerate("xyz"):
                    rows_c = hit[choice == c]
                    if rows_c.size:
                        amps[rows_c] = apply_pauli(amps[rows_c], axis, g.qubits[0], num_qubits)
        p = np.abs(amps) ** 2
        p /= p.sum(axis=1, keepdims=True)
        for b in range(dirty.size):
            outcome = rng.choice(p.shape[1], p=p[b])
            all_bits[row + b] = (outcome >> bit_weights) & 1

    flipped = flip_bits(all_bits, noise.pr, rng) if noise.pr > 0 else all_bits
    return 1.0 - 2.0 * flipped.mean(axis=0)


def evaluate(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    arch: Architecture,
    head: ClassifierHead,
    encoder: TTLinear,
    noise: NoiseModel | None = None,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and class probabilities for a test split.

    With a nontrivial noise model and shots > 0 every example is evaluated by
    shot trajectories (the hardware-faithful path); with shots = 0 the
    analytic contraction path is used.
    """
    batch, _ = _as_batch_xy(x)
    y = np.atleast_1d(np.asarray(y, dtype=int))
    if noise is not None and not noise.is_trivial and shots > 0:
        if rng is None:
            raise ValueError("trajectory evaluation requires an rng")
        z = np.stack(
            [
                shot_trajectory_expectations(row, theta, arch, encoder, noise, shots, rng)
                for row in batch
            ]
        )
        probs = _softmax_rows(z[:, : head.num_classes])
    else:
        probs = forward(batch, theta, arch, head, encoder, noise=noise, shots=shots, rng=rng)
    return probs.argmax(axis=1), probs
