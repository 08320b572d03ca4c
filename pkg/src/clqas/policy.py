"""Discrete circuit-architecture space and the stochastic search policy.

The policy is an autoregressive categorical distribution with position-wise
independent logits: one block for the circuit depth, then for every layer a
per-qubit rotation choice and an entangler pattern. REINFORCE gradients,
the quadratic consolidation penalty weighted by the Fisher diagonal, the
KL anchor to a prior policy, and the Fisher estimator all operate on the
flat logit vector. The policy lives behind plain functions so a richer
sequence model could replace the logit table without touching the gradient
machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ROTATION_CHOICES",
    "ENTANGLER_CHOICES",
    "entangler_pairs",
    "LayerSpec",
    "Architecture",
    "SearchSpace",
    "PolicySnapshot",
    "ArchSample",
    "baseline_architecture",
    "categorical_score",
    "categorical_kl",
    "sample_architecture",
    "architecture_log_prob",
    "grad_log_prob",
    "reward",
    "reinforce_grad",
    "surrogate_objective",
    "ewc_penalty",
    "kl_penalty",
    "estimate_fisher",
    "policy_loss",
]

ROTATION_CHOICES = ("rx", "ry", "rz", "rxyz", "id")
ENTANGLER_CHOICES = ("chain", "ring", "none")


def entangler_pairs(entangler: str, num_qubits: int) -> list[tuple[int, int]]:
    """CNOT (control, target) pairs for one layer's entangler pattern."""
    if entangler not in ENTANGLER_CHOICES:
        raise ValueError(f"unknown entangler {entangler!r}")
    if entangler == "none" or num_qubits < 2:
        return []
    pairs = [(u, u + 1) for u in range(num_qubits - 1)]
    if entangler == "ring" and num_qubits > 2:
        pairs.append((num_qubits - 1, 0))
    return pairs


@dataclass(frozen=True)
class LayerSpec:
    """Per-qubit rotation choices plus the layer's entangler pattern."""

    rotations: tuple[str, ...]
    entangler: str

    def __post_init__(self):
        for r in self.rotations:
            if r not in ROTATION_CHOICES:
                raise ValueError(f"unknown rotation choice {r!r}")
        if self.entangler not in ENTANGLER_CHOICES:
            raise ValueError(f"unknown entangler {self.entangler!r}")


@dataclass(frozen=True)
class Architecture:
    """A concrete gate layout: an ordered stack of layers over num_qubits wires."""

    num_qubits: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("need at least one qubit")
        if not self.layers:
            raise ValueError("need at least one layer")
        for lay in self.layers:
            if len(lay.rotations) != self.num_qubits:
                raise ValueError("layer rotation list does not match qubit count")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def num_param_slots(self) -> int:
        per = {"rx": 1, "ry": 1, "rz": 1, "rxyz": 3, "id": 0}
        return sum(per[r] for lay in self.layers for r in lay.rotations)

    @property
    def cnot_count(self) -> int:
        return sum(len(entangler_pairs(lay.entangler, self.num_qubits)) for lay in self.layers)

    @property
    def rotation_count(self) -> int:
        return self.num_param_slots

    def to_token(self) -> str:
        parts = []
        for lay in self.layers:
            rots = " ".join(f"q{u}:{r.upper()}" for u, r in enumerate(lay.rotations))
            parts.append(f"{rots} | ent:{lay.entangler}")
        return f"L{self.depth} | " + " ; ".join(parts)

    @classmethod
    def from_token(cls, token: str) -> "Architecture":
        head, _, rest = token.partition(" | ")
        if not head.startswith("L"):
            raise ValueError(f"malformed architecture token: {token!r}")
        depth = int(head[1:])
        layers = []
        blocks = rest.split(" ; ")
        if len(blocks) != depth:
            raise ValueError(f"token declares depth {depth} but has {len(blocks)} layers")
        num_qubits = None
        for block in blocks:
            rots_part, _, ent_part = block.rpartition(" | ent:")
            rotations = []
            for item in rots_part.split():
                name, _, rot = item.partition(":")
                if not name.startswith("q"):
                    raise ValueError(f"malformed qubit entry {item!r}")
                rotations.append(rot.lower())
            if num_qubits is None:
                num_qubits = len(rotations)
            layers.append(LayerSpec(tuple(rotations), ent_part))
        return cls(num_qubits, tuple(layers))


def baseline_architecture(num_qubits: int, depth: int) -> Architecture:
    """The fixed ansatz: an RX-RY-RZ block on every qubit plus a CNOT chain."""
    layer = LayerSpec(("rxyz",) * num_qubits, "chain")
    return Architecture(num_qubits, (layer,) * depth)


@dataclass(frozen=True)
class SearchSpace:
    """Decision-position layout for the architecture policy logits.

    Position order: depth (max_layers choices), then for each layer the
    per-qubit rotation choices (5 each) followed by the entangler (3).
    """

    num_qubits: int
    max_layers: int

    def __post_init__(self):
        if self.num_qubits < 1 or self.max_layers < 1:
            raise ValueError("num_qubits and max_layers must be positive")

    @property
    def positions(self) -> list[tuple[str, int, int]]:
        """List of (kind, offset, size) for every decision position."""
        out = [("depth", 0, self.max_layers)]
        off = self.max_layers
        for _ in range(self.max_layers):
            for _ in range(self.num_qubits):
                out.append(("rot", off, len(ROTATION_CHOICES)))
                off += len(ROTATION_CHOICES)
            out.append(("ent", off, len(ENTANGLER_CHOICES)))
            off += len(ENTANGLER_CHOICES)
        return out

    @property
    def num_logits(self) -> int:
        per_layer = self.num_qubits * len(ROTATION_CHOICES) + len(ENTANGLER_CHOICES)
        return self.max_layers + self.max_layers * per_layer

    def depth_slice(self) -> slice:
        return slice(0, self.max_layers)

    def rot_slice(self, layer: int, qubit: int) -> slice:
        per_layer = self.num_qubits * len(ROTATION_CHOICES) + len(ENTANGLER_CHOICES)
        off = self.max_layers + layer * per_layer + qubit * len(ROTATION_CHOICES)
        return slice(off, off + len(ROTATION_CHOICES))

    def ent_slice(self, layer: int) -> slice:
        per_layer = self.num_qubits * len(ROTATION_CHOICES) + len(ENTANGLER_CHOICES)
        off = self.max_layers + layer * per_layer + self.num_qubits * len(ROTATION_CHOICES)
        return slice(off, off + len(ENTANGLER_CHOICES))


@dataclass
class PolicySnapshot:
    """Current logits plus the consolidated anchor state.

    phi_old, fisher and prior_logits are frozen between consolidations; a
    fresh snapshot has zero fisher so the quadratic penalty starts inactive.
    """

    phi: np.ndarray
    phi_old: np.ndarray
    fisher: np.ndarray
    prior_logits: np.ndarray

    @classmethod
    def fresh(cls, space: SearchSpace) -> "PolicySnapshot":
        n = space.num_logits
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self) -> "PolicySnapshot":
        return PolicySnapshot(
            self.phi.copy(), self.phi_old.copy(), self.fisher.copy(), self.prior_logits.copy()
        )


@dataclass
class ArchSample:
    """One policy draw: the architecture, its log-probability, and (later) reward."""

    arch: Architecture
    logprob: float
    reward: float | None = None


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def categorical_score(logits: np.ndarray, choice: int) -> np.ndarray:
    """Gradient of log softmax probability of `choice` w.r.t. the logits."""
    probs = _softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[choice] = 1.0
    return onehot - probs


def categorical_kl(logits: np.ndarray, prior_logits: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(softmax(logits) || softmax(prior_logits)) and its logit gradient."""
    p = _softmax(logits)
    diff = _log_softmax(logits) - _log_softmax(prior_logits)
    kl = float(np.dot(p, diff))
    grad = p * (diff - kl)
    return kl, grad


def _sampled_positions(space: SearchSpace, arch: Architecture) -> list[tuple[slice, int]]:
    """(logit slice, chosen index) for every decision that produced arch."""
    out = [(space.depth_slice(), arch.depth - 1)]
    for l, lay in enumerate(arch.layers):
        for u, rot in enumerate(lay.rotations):
            out.append((space.rot_slice(l, u), ROTATION_CHOICES.index(rot)))
        out.append((space.ent_slice(l), ENTANGLER_CHOICES.index(lay.entangler)))
    return out


def sample_architecture(
    space: SearchSpace, phi: np.ndarray, rng: np.random.Generator
) -> ArchSample:
    """Draw depth, then per-layer rotations and entangler, each categorically."""
    logprob = 0.0

    def draw(logits: np.ndarray) -> int:
        nonlocal logprob
        probs = _softmax(logits)
        choice = int(rng.choice(probs.size, p=probs))
        logprob += float(_log_softmax(logits)[choice])
        return choice

    depth = draw(phi[space.depth_slice()]) + 1
    layers = []
    for l in range(depth):
        rotations = tuple(
            ROTATION_CHOICES[draw(phi[space.rot_slice(l, u)])] for u in range(space.num_qubits)
        )
        entangler = ENTANGLER_CHOICES[draw(phi[space.ent_slice(l)])]
        layers.append(LayerSpec(rotations, entangler))
    return ArchSample(Architecture(space.num_qubits, tuple(layers)), logprob)


def architecture_log_prob(space: SearchSpace, phi: np.ndarray, arch: Architecture) -> float:
    """Sum of per-decision log-probabilities of arch under phi."""
    total = 0.0
    for sl, choice in _sampled_positions(space, arch):
        total += float(_log_softmax(phi[sl])[choice])
    return total


def grad_log_prob(space: SearchSpace, phi: np.ndarray, arch: Architecture) -> np.ndarray:
    """Score function: gradient of log pi_phi(arch) over the full logit vector."""
    grad = np.zeros_like(phi)
    for sl, choice in _sampled_positions(space, arch):
        grad[sl] = categorical_score(phi[sl], choice)
    return grad


def reward(val_accuracy: float, n_cnot: int, kappa: float) -> float:
    """Validation accuracy minus a mild entanglement penalty, clamped to [0, 1]."""
    return float(np.clip(val_accuracy - kappa * n_cnot, 0.0, 1.0))


def reinforce_grad(
    samples: list[ArchSample],
    phi: np.ndarray,
    space: SearchSpace,
    baseline: float | None = None,
) -> np.ndarray:
    """Score-function gradient estimate, -mean((c - b) * grad log pi)."""
    if not samples:
        raise ValueError("need at least one sample")
    b = 0.0 if baseline is None else float(baseline)
    grad = np.zeros_like(phi)
    for s in samples:
        if s.reward is None:
            raise ValueError("sample rewards must be set before the policy update")
        grad -= (s.reward - b) * grad_log_prob(space, phi, s.arch)
    return grad / len(samples)


def surrogate_objective(samples: list[ArchSample], phi: np.ndarray, space: SearchSpace) -> float:
    """Logged scalar J_hat = -mean(c * log pi_phi(arch)) at fixed samples."""
    if not samples:
        raise ValueError("need at least one sample")
    total = 0.0
    for s in samples:
        total -= s.reward * architecture_log_prob(space, phi, s.arch)
    return total / len(samples)


def ewc_penalty(
    phi: np.ndarray, phi_old: np.ndarray, fisher: np.ndarray, lambda_ewc: float
) -> tuple[float, np.ndarray]:
    """(lambda/2) * sum_i F_i (phi_i - phi_old_i)^2 and its gradient."""
    if phi.shape != phi_old.shape or phi.shape != fisher.shape:
        raise ValueError("phi, phi_old and fisher must share a shape")
    if np.any(fisher < 0):
        raise ValueError("fisher entries must be nonnegative")
    diff = phi - phi_old
    value = 0.5 * lambda_ewc * float(np.sum(fisher * diff**2))
    grad = lambda_ewc * fisher * diff
    return value, grad


def kl_penalty(
    phi: np.ndarray, prior_logits: np.ndarray, space: SearchSpace
) -> tuple[float, np.ndarray]:
    """Sum of per-position KL divergences to the prior policy, with gradient."""
    if phi.shape != prior_logits.shape:
        raise ValueError("phi and prior logits must share a shape")
    total = 0.0
    grad = np.zeros_like(phi)
    for _, off, size in space.positions:
        sl = slice(off, off + size)
        kl, g = categorical_kl(phi[sl], prior_logits[sl])
        total += kl
        grad[sl] = g
    return total, grad


def estimate_fisher(
    space: SearchSpace, phi: np.ndarray, num_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Diagonal Fisher estimate: mean squared score over sampled architectures."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    fisher = np.zeros_like(phi)
    for _ in range(num_samples):
        s = sample_architecture(space, phi, rng)
        fisher += grad_log_prob(space, phi, s.arch) ** 2
    return fisher / num_samples


def policy_loss(j_hat: float, ewc: float, kl: float, mu: float, beta: float) -> float:
    """Composite policy objective: J_hat + mu * ewc + beta * kl."""
    return float(j_hat + mu * ewc + beta * kl)
