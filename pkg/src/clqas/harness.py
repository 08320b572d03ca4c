"""Bi-loop continual trainer over a task sequence.

Per task: the outer loop samples candidate architectures from the policy,
the inner loop trains each candidate's circuit parameters and encoder on the
train split, validation rewards drive a policy-gradient step, the best
candidate is fine-tuned for an equal epoch budget and written back into the
shared parameter table, and the policy is consolidated (cl_qas only).

Circuit parameters live in a (max_layers, qubits, 3) slot table so any
architecture warm-starts from, and writes back to, the slots it uses; this
carries parameters across tasks for every method and leaves the policy-level
consolidation as the only continual-learning mechanism under test. The three
methods share one code path: naive_vqc is the degenerate search with a
constant sampler, qas_no_cl runs the policy with both regularizer weights
zero and no consolidation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .data import TaskDataset
from .noise import GateCensus, NoiseModel, contraction_alpha
from .policy import (
    ArchSample,
    Architecture,
    PolicySnapshot,
    SearchSpace,
    architecture_log_prob,
    baseline_architecture,
    estimate_fisher,
    ewc_penalty,
    kl_penalty,
    policy_loss,
    reinforce_grad,
    reward,
    sample_architecture,
    surrogate_objective,
)
from .tt import TTLinear, tt_svd
from .vqc import (
    ClassifierHead,
    build_circuit,
    circuit_expectations,
    cross_entropy_from_probs,
    evaluate,
    loss as vqc_loss,
    train_classifier,
    trajectory_expectations,
)

__all__ = [
    "Metrics",
    "TransferMetrics",
    "RunRecord",
    "compute_metrics",
    "transfer_metrics",
    "run_task",
    "run_sequence",
    "consolidate",
    "robustness_audit",
    "rng_for",
]

_AXIS = {"rx": 0, "ry": 1, "rz": 2}

# stream tags for derived RNGs (order-independent determinism)
_S_TABLE, _S_ENCODER, _S_REINIT, _S_CONSOL, _S_TRAIN, _S_FINETUNE, _S_EVAL, _S_VAL, _S_POLICY = range(9)


def rng_for(*parts: int) -> np.random.Generator:
    """Deterministic generator keyed by an integer tuple."""
    return np.random.default_rng(tuple(int(p) for p in parts))


@dataclass
class Metrics:
    """Accuracy, balanced accuracy, F1 of the positive class."""

    acc: float
    bacc: float
    f1: float
    missing_class: int | None = None


def compute_metrics(predictions: np.ndarray, labels: np.ndarray) -> Metrics:
    """Binary classification metrics; a class absent from the labels is
    excluded from the balanced accuracy and flagged."""
    predictions = np.asarray(predictions, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if predictions.size == 0 or predictions.shape != labels.shape:
        raise ValueError("predictions and labels must be equal-length and nonempty")
    acc = float(np.mean(predictions == labels))
    recalls = []
    missing = None
    for cls in (0, 1):
        mask = labels == cls
        if mask.any():
            recalls.append(float(np.mean(predictions[mask] == cls)))
        else:
            missing = cls
    bacc = float(np.mean(recalls))
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    return Metrics(acc=acc, bacc=bacc, f1=f1, missing_class=missing)


@dataclass
class TransferMetrics:
    bwt: float
    fwt: float
    forgetting: list[float]

    @property
    def avg_forgetting(self) -> float:
        return float(np.mean(self.forgetting)) if self.forgetting else 0.0


def transfer_metrics(r_matrix: np.ndarray, chance: float = 0.5) -> TransferMetrics:
    """Backward/forward transfer and per-task forgetting from the accuracy matrix.

    R[i][j] is task-j test accuracy after finishing task i. BWT averages
    R[M-1][j] - R[j][j] over earlier tasks; FWT averages the pre-training
    accuracy R[j-1][j] against the chance baseline; forgetting is the drop
    from each task's best-ever accuracy to its final one.
    """
    r = np.asarray(r_matrix, dtype=float)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or not np.all(np.isfinite(r)):
        raise ValueError("accuracy matrix must be square and fully populated")
    m = r.shape[0]
    if m < 2:
        return TransferMetrics(0.0, 0.0, [0.0])
    bwt = float(np.mean([r[m - 1, j] - r[j, j] for j in range(m - 1)]))
    fwt = float(np.mean([r[j - 1, j] - chance for j in range(1, m)]))
    forgetting = [float(np.max(r[:, j]) - r[m - 1, j]) for j in range(m - 1)]
    return TransferMetrics(bwt=bwt, fwt=fwt, forgetting=forgetting)


def theta_slots(arch: Architecture) -> list[tuple[int, int, int]]:
    """(layer, qubit, axis) for every parameter slot, in emission order."""
    out = []
    for l, lay in enumerate(arch.layers):
        for u, rot in enumerate(lay.rotations):
            if rot == "id":
                continue
            kinds = ("rx", "ry", "rz") if rot == "rxyz" else (rot,)
            out.extend((l, u, _AXIS[k]) for k in kinds)
    return out


def theta_from_table(table: np.ndarray, arch: Architecture) -> np.ndarray:
    return np.array([table[s] for s in theta_slots(arch)])


def write_theta_to_table(table: np.ndarray, arch: Architecture, theta: np.ndarray):
    for s, value in zip(theta_slots(arch), theta):
        table[s] = value


@dataclass
class _Model:
    """Shared trainable state carried across tasks."""

    theta_table: np.ndarray
    encoder: TTLinear
    head: ClassifierHead


@dataclass
class _Candidate:
    sample: ArchSample
    theta: np.ndarray
    encoder: TTLinear
    val_acc: float
    grad_sq_max: float


@dataclass
class RunRecord:
    """Everything one (method, seed) run produces."""

    method: str
    seed: int
    config: dict
    config_hash: str
    task_rows: list[dict] = field(default_factory=list)
    r_matrix: list[list[float]] = field(default_factory=list)
    architectures: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "config_hash": self.config_hash,
            "task_rows": self.task_rows,
            "r_matrix": self.r_matrix,
            "architectures": self.architectures,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(**data)


def consolidate(
    policy: PolicySnapshot, fisher_samples: int, rng: np.random.Generator, space: SearchSpace
) -> PolicySnapshot:
    """Anchor the policy: freeze current logits as old/prior, refresh Fisher."""
    return PolicySnapshot(
        phi=policy.phi.copy(),
        phi_old=policy.phi.copy(),
        fisher=estimate_fisher(space, policy.phi, fisher_samples, rng),
        prior_logits=policy.phi.copy(),
    )


def _noise_from_config(cfg: RunConfig) -> NoiseModel | None:
    model = NoiseModel(
        p1=cfg.noise_p1,
        p2=cfg.noise_p2,
        pr=cfg.noise_pr,
        eps_jitter=cfg.noise_jitter,
        convention=cfg.noise_convention,
    )
    return None if model.is_trivial else model


def _eval_accuracy(x, y, theta, arch, model: _Model, noise, shots, rng) -> tuple[float, Metrics]:
    preds, _ = evaluate(
        x, y, theta, arch, model.head, model.encoder, noise=noise, shots=shots, rng=rng
    )
    metrics = compute_metrics(preds, y)
    return metrics.acc, metrics


def run_task(
    task: TaskDataset,
    policy: PolicySnapshot | None,
    model: _Model,
    cfg: RunConfig,
    method: str,
    seed: int,
    task_index: int,
    space: SearchSpace,
    sampler=None,
) -> dict:
    """One task of the bi-loop: candidate search, policy step, fine-tune,
    write-back. Returns the task summary (best arch, metrics, loss pieces)."""
    for name in ("train", "val", "test"):
        if getattr(task, f"x_{name}").shape[0] == 0:
            raise ValueError(f"task {task.task_id} has an empty {name} split")

    noise = _noise_from_config(cfg)
    shots = cfg.train_shots
    is_naive = method == "naive_vqc"
    use_cl = method == "cl_qas"
    rounds = 1 if is_naive else cfg.qas_rounds
    n_candidates = 1 if is_naive else cfg.qas_candidates_per_round

    policy_rng = rng_for(seed, _S_POLICY, task_index)
    if sampler is None:
        if is_naive:
            fixed = baseline_architecture(cfg.circuit_qubits, cfg.circuit_layers)
            sampler = lambda: ArchSample(fixed, 0.0)
        else:
            sampler = lambda: sample_architecture(space, policy.phi, policy_rng)

    candidates: list[_Candidate] = []
    running_mean = 0.0
    seen = 0
    policy_terms = {"j_hat": 0.0, "ewc": 0.0, "kl": 0.0, "policy_loss": 0.0}
    for rnd in range(rounds):
        batch: list[_Candidate] = []
        for c in range(n_candidates):
            s = sampler()
            theta0 = theta_from_table(model.theta_table, s.arch)
            train_rng = rng_for(seed, _S_TRAIN, task_index, rnd, c)
            theta_tr, enc_tr, hist = train_classifier(
                task.x_train,
                task.y_train,
                theta0,
                s.arch,
                model.head,
                model.encoder,
                epochs=cfg.train_epochs,
                batch_size=cfg.train_batch,
                lr=cfg.train_lr,
                rng=train_rng,
            )
            val_rng = rng_for(seed, _S_VAL, task_index, rnd, c)
            tmp = _Model(model.theta_table, enc_tr, model.head)
            val_acc, _ = _eval_accuracy(
                task.x_val, task.y_val, theta_tr, s.arch, tmp, noise, shots, val_rng
            )
            s.reward = reward(val_acc, s.arch.cnot_count, cfg.qas_kappa)
            batch.append(
                _Candidate(s, theta_tr, enc_tr, val_acc, max(hist.grad_sq_norms, default=0.0))
            )
        candidates.extend(batch)

        if not is_naive:
            samples = [c.sample for c in batch]
            baseline = None
            if cfg.qas_baseline == "running_mean" and seen > 0:
                baseline = running_mean
            grad = reinforce_grad(samples, policy.phi, space, baseline=baseline)
            ewc_val = kl_val = 0.0
            if use_cl:
                ewc_val, ewc_grad = ewc_penalty(
                    policy.phi, policy.phi_old, policy.fisher, cfg.ewc_lambda
                )
                kl_val, kl_grad = kl_penalty(policy.phi, policy.prior_logits, space)
                grad = grad + cfg.qas_mu * ewc_grad + cfg.qas_beta * kl_grad
            policy.phi = policy.phi - cfg.qas_policy_lr * grad
            for s in samples:
                seen += 1
                running_mean += (s.reward - running_mean) / seen
            j_hat = surrogate_objective(samples, policy.phi, space)
            if use_cl:
                ewc_val, _ = ewc_penalty(policy.phi, policy.phi_old, policy.fisher, cfg.ewc_lambda)
                kl_val, _ = kl_penalty(policy.phi, policy.prior_logits, space)
            policy_terms = {
                "j_hat": j_hat,
                "ewc": ewc_val,
                "kl": kl_val,
                "policy_loss": policy_loss(j_hat, ewc_val, kl_val, cfg.qas_mu, cfg.qas_beta),
            }

    best = max(
        range(len(candidates)),
        key=lambda i: (candidates[i].sample.reward, -i),
    )
    chosen = candidates[best]
    finetune_rng = rng_for(seed, _S_FINETUNE, task_index)
    theta_ft, enc_ft, hist_ft = train_classifier(
        task.x_train,
        task.y_train,
        chosen.theta,
        chosen.sample.arch,
        model.head,
        chosen.encoder,
        epochs=cfg.train_epochs,
        batch_size=cfg.train_batch,
        lr=cfg.train_lr,
        rng=finetune_rng,
    )
    write_theta_to_table(model.theta_table, chosen.sample.arch, theta_ft)
    model.encoder = enc_ft

    final_train_loss = vqc_loss(
        task.x_train, task.y_train, theta_ft, chosen.sample.arch, model.head, model.encoder
    )
    grad_sq_max = max(
        [c.grad_sq_max for c in candidates] + [max(hist_ft.grad_sq_norms, default=0.0)]
    )
    return {
        "arch": chosen.sample.arch,
        "reward": None if is_naive else chosen.sample.reward,
        "val_acc": chosen.val_acc,
        "vqc_loss": final_train_loss,
        "policy_terms": policy_terms,
        "grad_sq_max": grad_sq_max,
    }


def _tt_diagnostics(task: TaskDataset, cfg: RunConfig) -> dict:
    x = task.x_train[0]
    modes = tuple(cfg.encoder_input_modes)
    if int(np.prod(modes)) != x.size:
        return {}
    _, report = tt_svd(x, modes, max_rank=max(cfg.encoder_ranks))
    return {
        "eps_tt": report.eps_tt,
        "rho": report.rho,
        "fidelity_lower_bound": report.fidelity_lower_bound,
    }


def run_sequence(
    tasks: list[TaskDataset], method: str, seeds: list[int], cfg: RunConfig
) -> list[RunRecord]:
    """Run the full task sequence once per seed and collect RunRecords."""
    if method not in ("naive_vqc", "qas_no_cl", "cl_qas"):
        raise ValueError(f"unknown method {method!r}")
    if not tasks or not seeds:
        raise ValueError("need at least one task and one seed")
    dims = {t.feature_dim for t in tasks}
    if len(dims) != 1:
        raise ValueError(f"tasks disagree on feature dimension: {sorted(dims)}")
    (feature_dim,) = dims
    if int(np.prod(cfg.encoder_input_modes)) != feature_dim:
        raise ValueError(
            f"encoder.input_modes product {int(np.prod(cfg.encoder_input_modes))} "
            f"!= feature dimension {feature_dim}"
        )

    noise = _noise_from_config(cfg)
    shots = cfg.train_shots
    space = SearchSpace(cfg.circuit_qubits, cfg.circuit_max_layers)
    records = []
    for seed in seeds:
        table_rng = rng_for(seed, _S_TABLE)
        table = table_rng.uniform(-0.1, 0.1, size=(cfg.circuit_max_layers, cfg.circuit_qubits, 3))
        encoder = TTLinear.initialize(
            cfg.encoder_input_modes,
            cfg.encoder_output_modes,
            cfg.encoder_ranks,
            rng_for(seed, _S_ENCODER),
        )
        model = _Model(table, encoder, ClassifierHead(2))
        policy = None if method == "naive_vqc" else PolicySnapshot.fresh(space)

        m = len(tasks)
        r_matrix = np.full((m, m), np.nan)
        record = RunRecord(
            method=method,
            seed=seed,
            config=cfg.resolved(),
            config_hash=cfg.config_hash(),
        )
        vqc_losses = []
        chosen: list[Architecture] = []
        last_policy_terms = {"j_hat": 0.0, "ewc": 0.0, "kl": 0.0, "policy_loss": 0.0}
        tt_diag = []
        grad_sq = []
        for i, task in enumerate(tasks):
            if cfg.train_theta_reinit:
                reinit_rng = rng_for(seed, _S_REINIT, i)
                model.theta_table = reinit_rng.uniform(-0.1, 0.1, size=table.shape)
            summary = run_task(task, policy, model, cfg, method, seed, i, space)
            chosen.append(summary["arch"])
            vqc_losses.append(summary["vqc_loss"])
            grad_sq.append(summary["grad_sq_max"])
            last_policy_terms = summary["policy_terms"]
            tt_diag.append(_tt_diagnostics(task, cfg))

            for j, other in enumerate(tasks):
                arch_j = chosen[min(j, i)]
                theta_j = theta_from_table(model.theta_table, arch_j)
                acc, metrics = _eval_accuracy(
                    other.x_test,
                    other.y_test,
                    theta_j,
                    arch_j,
                    model,
                    noise,
                    shots,
                    rng_for(seed, _S_EVAL, i, j),
                )
                r_matrix[i, j] = acc
                if j == i:
                    record.task_rows.append(
                        {
                            "task_id": task.task_id,
                            "acc": metrics.acc,
                            "bacc": metrics.bacc,
                            "f1": metrics.f1,
                            "rwd": summary["reward"],
                            "arch": summary["arch"].to_token(),
                        }
                    )

            if method == "cl_qas":
                policy = consolidate(
                    policy, cfg.qas_fisher_samples, rng_for(seed, _S_CONSOL, i), space
                )

        total = float(np.sum(vqc_losses) + cfg.objective_lambda * last_policy_terms["policy_loss"])
        transfer = transfer_metrics(r_matrix)
        record.r_matrix = [[float(v) for v in row] for row in r_matrix]
        record.architectures = [a.to_token() for a in chosen]
        record.diagnostics = {
            "vqc_losses": [float(v) for v in vqc_losses],
            "policy_terms": last_policy_terms,
            "objective_lambda": cfg.objective_lambda,
            "total_objective": total,
            "grad_sq_max": [float(v) for v in grad_sq],
            "tt_encoding": tt_diag,
            "bwt": transfer.bwt,
            "fwt": transfer.fwt,
            "avg_forgetting": transfer.avg_forgetting,
        }
        records.append(record)
    return records


def robustness_audit(
    theta_table: np.ndarray,
    arch: Architecture,
    encoder: TTLinear,
    head: ClassifierHead,
    task: TaskDataset,
    noise: NoiseModel,
    space: SearchSpace,
    phi: np.ndarray,
    objective_lambda: float = 1.0,
    n_traj: int = 1000,
    max_examples: int = 8,
    n_arch_samples: int = 8,
    eval_shots: int = 256,
    seed: int = 0,
) -> dict:
    """Empirical check of the objective-level noise bound on a trained model.

    The noisy classifier loss uses trajectory-mean expectations; the measured
    deviation from the analytic contraction supplies the remainder bound.
    The policy term compares validation rewards of sampled architectures
    (parameters pulled from the shared slot table) under clean evaluation and
    shot-trajectory noisy evaluation. Returns the audit row; callers assert
    lhs <= rhs.
    """
    lipschitz = math.sqrt(2.0)
    num_qubits = arch.num_qubits
    rng = rng_for(seed, 11)

    theta = theta_from_table(theta_table, arch)
    gates = build_circuit(arch, theta)
    alpha = contraction_alpha(noise, GateCensus.from_gates(gates))

    x_eval = task.x_test[:max_examples]
    y_eval = task.y_test[:max_examples]
    z_clean = np.atleast_2d(circuit_expectations(x_eval, theta, arch, encoder))
    if noise.is_trivial:
        z_noisy = z_clean.copy()
    else:
        z_noisy = np.stack(
            [
                trajectory_expectations(row, theta, arch, encoder, noise, n_traj, rng)
                for row in x_eval
            ]
        )
    delta_hat = float(np.max(np.linalg.norm(z_noisy - alpha * z_clean, axis=1)))

    def head_loss(z):
        logits = z[:, : head.num_classes]
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        return cross_entropy_from_probs(probs, y_eval)

    loss_clean = head_loss(z_clean)
    loss_noisy = head_loss(z_noisy)
    lhs_vqc = loss_noisy - loss_clean

    # policy side: rewards of sampled architectures evaluated with the shared table
    arch_rng = rng_for(seed, 12)
    x_val = task.x_val[:max_examples]
    y_val = task.y_val[:max_examples]
    samples = [sample_architecture(space, phi, arch_rng) for _ in range(n_arch_samples)]
    c_clean, c_noisy, logps, alphas = [], [], [], []
    for k, s in enumerate(samples):
        theta_s = theta_from_table(theta_table, s.arch)
        preds, _ = evaluate(x_val, y_val, theta_s, s.arch, head, encoder)
        acc = float(np.mean(preds == y_val))
        alpha_s = contraction_alpha(noise, GateCensus.from_gates(build_circuit(s.arch, theta_s)))
        if noise.is_trivial:
            acc_n = acc
        else:
            preds_n, _ = evaluate(
                x_val,
                y_val,
                theta_s,
                s.arch,
                head,
                encoder,
                noise=noise,
                shots=eval_shots,
                rng=rng_for(seed, 13, k),
            )
            acc_n = float(np.mean(preds_n == y_val))
        c_clean.append(reward(acc, s.arch.cnot_count, 0.005))
        c_noisy.append(reward(acc_n, s.arch.cnot_count, 0.005))
        logps.append(architecture_log_prob(space, phi, s.arch))
        alphas.append(alpha_s)
    c_clean, c_noisy = np.array(c_clean), np.array(c_noisy)
    logps = np.array(logps)
    alpha_bar = float(np.mean(alphas))
    eps_c = float(np.max(np.abs(c_noisy - alpha_bar * c_clean)))
    c_pi = float(np.mean(np.abs(logps)))
    j_clean = float(-np.mean(c_clean * logps))
    j_noisy = float(-np.mean(c_noisy * logps))
    lhs_policy = j_noisy - j_clean

    lhs = abs(lhs_vqc + objective_lambda * lhs_policy)
    rhs = lipschitz * math.sqrt(num_qubits) * ((1.0 - alpha) + delta_hat) + (
        objective_lambda * c_pi * ((1.0 - alpha_bar) + eps_c)
    )
    return {
        "p1": noise.p1,
        "p2": noise.p2,
        "pr": noise.pr,
        "alpha": alpha,
        "delta_hat": delta_hat,
        "alpha_bar": alpha_bar,
        "eps_c_hat": eps_c,
        "c_pi_hat": c_pi,
        "lhs": float(lhs),
        "rhs": float(rhs),
        "holds": bool(lhs <= rhs + 1e-12),
    }
