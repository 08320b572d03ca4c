"""Tensor-train decomposition, reconstruction, and the TT-structured linear encoder.

A length-D vector reshaped to modes (m_1, ..., m_U) is factorized into a
chain of 3-way cores G[u] of shape (r_{u-1}, m_u, r_u) with r_0 = r_U = 1.
The decomposition error of the sequential truncated-SVD sweep is bounded by
the root-sum-square of all discarded singular values, and the overlap of the
normalized vector with its normalized reconstruction admits the closed-form
lower bound ((1 - rho) / (1 + rho))^2 with rho = error / ||x||.

The TT-linear encoder is the operator analogue: 4-way cores of shape
(r_{k-1}, m_k, n_k, r_k) whose contraction is a dense (prod n) x (prod m)
matrix, used to map feature vectors to circuit rotation angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TTVector",
    "TTDecompositionReport",
    "TTLinear",
    "tt_svd",
    "tt_reconstruct",
    "fidelity_lower_bound",
    "tt_linear_forward",
    "tt_linear_grad",
]


@dataclass
class TTVector:
    """Chain of 3-way cores representing a dense vector of length prod(modes)."""

    cores: list[np.ndarray]
    modes: tuple[int, ...]

    def __post_init__(self):
        self.modes = tuple(int(m) for m in self.modes)
        if len(self.cores) != len(self.modes):
            raise ValueError(
                f"{len(self.cores)} cores for {len(self.modes)} modes"
            )
        ranks = self.ranks
        if ranks[0] != 1 or ranks[-1] != 1:
            raise ValueError(f"boundary ranks must be 1, got {ranks[0]} and {ranks[-1]}")
        for u, core in enumerate(self.cores):
            if core.ndim != 3:
                raise ValueError(f"core {u} is {core.ndim}-way, expected 3-way")
            if core.shape[1] != self.modes[u]:
                raise ValueError(
                    f"core {u} mode size {core.shape[1]} != declared mode {self.modes[u]}"
                )
            if u > 0 and core.shape[0] != self.cores[u - 1].shape[2]:
                raise ValueError(f"rank mismatch between cores {u - 1} and {u}")

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple([self.cores[0].shape[0]] + [c.shape[2] for c in self.cores])

    @property
    def length(self) -> int:
        return int(np.prod(self.modes))


@dataclass
class TTDecompositionReport:
    """Error accounting for one TT-SVD run.

    eps_tt is the measured 2-norm reconstruction error; the discarded singular
    values (one list per unfolding sweep step) upper-bound it via their
    root-sum-square. rho = eps_tt / ||x||; the fidelity lower bound is only
    defined for rho < 1 and reported as 0 otherwise. zero_input flags the
    degenerate all-zero vector, for which rho is undefined and reported as 0.
    """

    eps_tt: float
    discarded_singular_values: list[np.ndarray] = field(default_factory=list)
    rho: float = 0.0
    fidelity_lower_bound: float = 0.0
    zero_input: bool = False

    @property
    def discarded_rss(self) -> float:
        """Root-sum-square of every discarded singular value."""
        total = sum(float(np.sum(s**2)) for s in self.discarded_singular_values)
        return math.sqrt(total)


def tt_svd(x: np.ndarray, modes, max_rank: int) -> tuple[TTVector, TTDecompositionReport]:
    """Decompose a dense vector into TT cores by a left-to-right truncated-SVD sweep.

    Every intermediate rank is min(max_rank, achievable rank of the unfolding);
    the discarded singular values of each sweep step are recorded so the error
    bound can be checked against the measured reconstruction error.
    """
    x = np.asarray(x, dtype=float)
    modes = tuple(int(m) for m in modes)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got {x.ndim}-way array")
    if x.size != int(np.prod(modes)):
        raise ValueError(f"length {x.size} != product of modes {modes}")
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")

    x_norm = float(np.linalg.norm(x))
    if x_norm == 0.0:
        cores = [np.zeros((1, m, 1)) for m in modes]
        tt = TTVector(cores, modes)
        return tt, TTDecompositionReport(eps_tt=0.0, zero_input=True)

    num = len(modes)
    cores: list[np.ndarray] = []
    discarded: list[np.ndarray] = []
    work = x.reshape(modes)
    r_prev = 1
    for u in range(num - 1):
        mat = work.reshape(r_prev * modes[u], -1)
        svd_u, svd_s, svd_vt = np.linalg.svd(mat, full_matrices=False)
        rank = min(max_rank, len(svd_s))
        discarded.append(svd_s[rank:].copy())
        cores.append(svd_u[:, :rank].reshape(r_prev, modes[u], rank))
        work = svd_s[:rank, None] * svd_vt[:rank, :]
        r_prev = rank
    cores.append(work.reshape(r_prev, modes[-1], 1))
    discarded.append(np.zeros(0))

    tt = TTVector(cores, modes)
    eps_tt = float(np.linalg.norm(x - tt_reconstruct(tt)))
    rho = eps_tt / x_norm
    return tt, TTDecompositionReport(
        eps_tt=eps_tt,
        discarded_singular_values=discarded,
        rho=rho,
        fidelity_lower_bound=fidelity_lower_bound(eps_tt, x_norm),
    )


def tt_reconstruct(tt: TTVector) -> np.ndarray:
    """Contract TT cores left-to-right back into the dense vector."""
    left = tt.cores[0].reshape(tt.modes[0], -1)  # (m_1, r_1)
    for core in tt.cores[1:]:
        r_prev, mode, r_next = core.shape
        if left.shape[1] != r_prev:
            raise ValueError("rank mismatch during reconstruction")
        left = left @ core.reshape(r_prev, mode * r_next)
        left = left.reshape(-1, r_next)
    return left.reshape(-1)


def fidelity_lower_bound(eps_tt: float, x_norm: float) -> float:
    """Closed-form lower bound on the squared normalized overlap.

    Returns ((1 - rho) / (1 + rho))^2 with rho = eps_tt / x_norm when rho < 1,
    else 0 (the bound is vacuous past rho = 1).
    """
    if x_norm <= 0:
        raise ValueError("x_norm must be positive")
    if eps_tt < 0:
        raise ValueError("eps_tt must be nonnegative")
    rho = eps_tt / x_norm
    if rho >= 1.0:
        return 0.0
    return ((1.0 - rho) / (1.0 + rho)) ** 2


@dataclass
class TTLinear:
    """TT-factorized linear map from prod(input_modes) to prod(output_modes).

    Core k has shape (r_{k-1}, m_k, n_k, r_k); the contraction over all
    internal ranks materializes a dense (prod n, prod m) matrix. Parameter
    count is sum_k r_{k-1} * m_k * n_k * r_k.
    """

    cores: list[np.ndarray]
    input_modes: tuple[int, ...]
    output_modes: tuple[int, ...]
    trainable: bool = True

    def __post_init__(self):
        self.input_modes = tuple(int(m) for m in self.input_modes)
        self.output_modes = tuple(int(n) for n in self.output_modes)
        if not (len(self.cores) == len(self.input_modes) == len(self.output_modes)):
            raise ValueError("cores, input_modes and output_modes must align")
        for k, core in enumerate(self.cores):
            if core.ndim != 4:
                raise ValueError(f"core {k} is {core.ndim}-way, expected 4-way")
            if core.shape[1] != self.input_modes[k] or core.shape[2] != self.output_modes[k]:
                raise ValueError(f"core {k} shape {core.shape} does not match modes")
            if k > 0 and core.shape[0] != self.cores[k - 1].shape[3]:
                raise ValueError(f"rank mismatch between cores {k - 1} and {k}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must be 1")

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple([self.cores[0].shape[0]] + [c.shape[3] for c in self.cores])

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_modes))

    @property
    def output_dim(self) -> int:
        return int(np.prod(self.output_modes))

    @property
    def num_params(self) -> int:
        return sum(c.size for c in self.cores)

    def copy(self) -> "TTLinear":
        return TTLinear(
            [c.copy() for c in self.cores],
            self.input_modes,
            self.output_modes,
            self.trainable,
        )

    def materialize(self) -> np.ndarray:
        """Contract all cores into the dense (output_dim, input_dim) matrix."""
        mat = np.ones((1, 1, 1))  # (rank, out, in)
        for core in self.cores:
            mat = np.einsum("poi,pmnq->qonim", mat, core)
            q, out, n, inn, m = mat.shape
            mat = mat.reshape(q, out * n, inn * m)
        return mat.reshape(self.output_dim, self.input_dim)

    @classmethod
    def initialize(cls, input_modes, output_modes, ranks, rng: np.random.Generator) -> "TTLinear":
        """Random cores, each entry uniform on [-a, a] with
        a = (1/sqrt(fan_in))^(1/num_cores), keeping initial outputs O(1)."""
        input_modes = tuple(int(m) for m in input_modes)
        output_modes = tuple(int(n) for n in output_modes)
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != len(input_modes) + 1:
            raise ValueError("need len(modes)+1 rank entries")
        fan_in = int(np.prod(input_modes))
        a = (1.0 / math.sqrt(fan_in)) ** (1.0 / len(input_modes))
        cores = [
            rng.uniform(-a, a, size=(ranks[k], input_modes[k], output_modes[k], ranks[k + 1]))
            for k in range(len(input_modes))
        ]
        return cls(cores, input_modes, output_modes)


def tt_linear_forward(x: np.ndarray, w: TTLinear) -> np.ndarray:
    """Apply the TT-linear map by sequential core contraction.

    Accepts a single vector (input_dim,) or a batch (B, input_dim); returns
    angles of shape (output_dim,) or (B, output_dim). Agrees with the
    materialized dense matrix to float round-off.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != w.input_dim:
        raise ValueError(f"input length {batch.shape[1]} != {w.input_dim}")
    # carry: (B, r, accumulated-out, remaining-in)
    carry = batch.reshape(batch.shape[0], 1, 1, w.input_dim)
    for core in w.cores:
        r_prev, m, n, r_next = core.shape
        rest = carry.shape[3] // m
        carry = carry.reshape(carry.shape[0], r_prev, carry.shape[2], m, rest)
        carry = np.einsum("bpomr,pmnq->bqonr", carry, core)
        carry = carry.reshape(carry.shape[0], r_next, -1, rest)
    out = carry.reshape(batch.shape[0], w.output_dim)
    return out[0] if single else out


def _right_environments(w: TTLinear) -> list[np.ndarray]:
    """envs[k] contracts cores k+1..K-1 into shape (r_k, out_tail, in_tail)."""
    envs = [np.ones((1, 1, 1))]
    for core in reversed(w.cores[1:]):
        nxt = envs[0]
        env = np.einsum("pmnq,qoi->pnomi", core, nxt)
        p, n, o, m, i = env.shape
        envs.insert(0, env.reshape(p, n * o, m * i))
    return envs


def tt_linear_grad(x: np.ndarray, w: TTLinear, upstream: np.ndarray) -> list[np.ndarray]:
    """Exact gradient of upstream . (W x) with respect to every core entry.

    x may be (input_dim,) with upstream (output_dim,), or batched (B, ...) in
    which case gradients are summed over the batch.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
        upstream = upstream[None, :]
    if x.shape[1] != w.input_dim or upstream.shape[1] != w.output_dim:
        raise ValueError("shape mismatch between x, upstream and the TT map")
    if x.shape[0] != upstream.shape[0]:
        raise ValueError("batch sizes of x and upstream differ")

    nb = x.shape[0]
    envs = _right_environments(w)
    grads: list[np.ndarray] = []
    # left: (B, r_{k-1}, out_so_far, in_rest) -- the forward carry
    left = x.reshape(nb, 1, 1, w.input_dim)
    for k, core in enumerate(w.cores):
        r_prev, m, n, r_next = core.shape
        rest = left.shape[3] // m
        left_k = left.reshape(nb, r_prev, left.shape[2], m, rest)
        # upstream as (B, out_so_far, n_k, out_tail)
        up = upstream.reshape(nb, left.shape[2], n, -1)
        grads.append(np.einsum("bpomi,bonq,sqi->pmns", left_k, up, envs[k]))
        left = np.einsum("bpomr,pmnq->bqonr", left_k, core)
        left = left.reshape(nb, r_next, -1, rest)
    return grads
