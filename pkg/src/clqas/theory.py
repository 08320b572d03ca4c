"""Property-check suites behind the `theory-check` command.

Each suite returns CheckResult rows so the CLI can print one line per
assertion and the acceptance tests can assert on the same outcomes:
  - tt: decomposition error bound and normalized-overlap bound;
  - noise: Monte Carlo trajectory means against the contraction factors;
  - gradient: parameter-shift + chain-rule gradients against central
    finite differences on randomized circuits and the encoder;
  - robustness: the objective-level noise inequality over a noise grid on a
    freshly trained model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .data import gen_financial
from .harness import _Model, rng_for, robustness_audit, run_task, theta_from_table
from .noise import NoiseModel, depolarize_2q_rows, depolarize_rows, flip_bits
from .policy import PolicySnapshot, SearchSpace, sample_architecture
from .qsim import apply_cnot, apply_rotation, expectations_z
from .tt import TTLinear, tt_reconstruct, tt_svd
from .vqc import ClassifierHead, gradient, init_theta, loss

__all__ = ["CheckResult", "suite_tt", "suite_noise", "suite_gradient", "suite_robustness", "SUITES"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _random_modes(rng: np.random.Generator) -> tuple[int, ...]:
    """Random factorization with product between 16 and 256."""
    while True:
        modes = tuple(int(f) for f in rng.choice([2, 3, 4], size=rng.integers(2, 5)))
        length = int(np.prod(modes))
        if 16 <= length <= 256:
            return modes


def suite_tt(n_error: int = 200, n_fidelity: int = 100, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(n_error):
        modes = _random_modes(rng)
        x = rng.normal(size=int(np.prod(modes)))
        rank = int(rng.integers(1, 5))
        _, report = tt_svd(x, modes, max_rank=rank)
        slack = report.eps_tt - report.discarded_rss
        worst = max(worst, slack)
        if slack > 1e-10:
            violations += 1
    results = [
        CheckResult(
            f"tt error bound eps <= rss(discarded) + 1e-10 [{n_error - violations}/{n_error}]",
            violations == 0,
            f"worst slack {worst:.3e}",
        )
    ]

    checked = 0
    fid_violations = 0
    margin = 1.0
    while checked < n_fidelity:
        modes = _random_modes(rng)
        x = rng.normal(size=int(np.prod(modes)))
        tt, report = tt_svd(x, modes, max_rank=int(rng.integers(1, 3)))
        if report.rho >= 1.0 or report.zero_input:
            continue
        approx = tt_reconstruct(tt)
        overlap = float(
            np.dot(x / np.linalg.norm(x), approx / np.linalg.norm(approx))
        )
        gap = overlap**2 - report.fidelity_lower_bound
        margin = min(margin, gap)
        if gap < -1e-12:
            fid_violations += 1
        checked += 1
    results.append(
        CheckResult(
            f"fidelity >= ((1-rho)/(1+rho))^2 [{n_fidelity - fid_violations}/{n_fidelity}]",
            fid_violations == 0,
            f"smallest margin {margin:.3e}",
        )
    )
    return results


def suite_noise(trajectories: int = 100_000, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    # single-qubit depolarizing on |0>: <Z> contracts by 1 - 4p/3
    p1 = 0.3
    amps = np.zeros((trajectories, 2), dtype=complex)
    amps[:, 0] = 1.0
    noisy = depolarize_rows(amps, [0], p1, rng, 1)
    z = float(expectations_z(noisy, 1)[:, 0].mean())
    expected = 1.0 - 4.0 * p1 / 3.0
    results.append(
        CheckResult(
            f"1q depolarizing p={p1}: <Z> vs {expected}",
            abs(z - expected) <= 0.01,
            f"mc {z:.4f}, gap {abs(z - expected):.4f}",
        )
    )

    # two-qubit depolarizing on a Bell pair: <ZZ> contracts by 1 - 16p/15
    p2 = 0.15
    amps = np.zeros((trajectories, 4), dtype=complex)
    amps[:, 0] = 1.0
    amps = apply_rotation(amps, "ry", 0, np.pi / 2, 2)
    amps = apply_cnot(amps, 0, 1, 2)
    noisy = depolarize_2q_rows(amps, [(0, 1)], p2, rng, 2)
    parity = np.array([1.0, -1.0, -1.0, 1.0])
    zz = float((np.abs(noisy) ** 2 @ parity).mean())
    expected = 1.0 - 16.0 * p2 / 15.0
    results.append(
        CheckResult(
            f"2q depolarizing p={p2}: <ZZ> vs {expected}",
            abs(zz - expected) <= 0.01,
            f"mc {zz:.4f}, gap {abs(zz - expected):.4f}",
        )
    )

    # symmetric readout flips on a deterministic source: <Z> = 1 - 2 pr
    pr = 0.01
    bits = flip_bits(np.zeros(trajectories, dtype=int), pr, rng)
    z = float(1.0 - 2.0 * bits.mean())
    results.append(
        CheckResult(
            f"readout pr={pr}: <Z> vs {1 - 2 * pr}",
            abs(z - (1 - 2 * pr)) <= 0.005,
            f"mc {z:.4f}, gap {abs(z - (1 - 2 * pr)):.4f}",
        )
    )
    return results


def _random_small_architecture(rng: np.random.Generator):
    space = SearchSpace(num_qubits=3, max_layers=2)
    phi = rng.normal(scale=0.2, size=space.num_logits)
    # force full depth so every circuit has two layers
    phi[space.depth_slice()] = np.array([-20.0, 20.0])
    return sample_architecture(space, phi, rng).arch


def suite_gradient(n_circuits: int = 20, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    head = ClassifierHead(2)
    worst_theta = 0.0
    worst_core = 0.0
    failures = 0
    h = 1e-4
    for _ in range(n_circuits):
        arch = _random_small_architecture(rng)
        encoder = TTLinear.initialize((2, 2), (3, 1), (1, 2, 1), rng)
        theta = init_theta(arch, rng, scale=0.6)
        x = rng.normal(size=(4, 4))
        y = rng.integers(0, 2, size=4)
        g_theta, g_cores = gradient(x, y, theta, arch, head, encoder)

        fd_theta = np.zeros_like(theta)
        for i in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            fd_theta[i] = (
                loss(x, y, up, arch, head, encoder) - loss(x, y, dn, arch, head, encoder)
            ) / (2 * h)
        if theta.size:
            rel = np.linalg.norm(g_theta - fd_theta) / max(np.linalg.norm(fd_theta), 1e-12)
            worst_theta = max(worst_theta, rel)
            if rel >= 1e-5:
                failures += 1

        for k in range(len(encoder.cores)):
            fd = np.zeros_like(encoder.cores[k])
            it = np.nditer(encoder.cores[k], flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                up, dn = encoder.copy(), encoder.copy()
                up.cores[k][idx] += h
                dn.cores[k][idx] -= h
                fd[idx] = (
                    loss(x, y, theta, arch, head, up) - loss(x, y, theta, arch, head, dn)
                ) / (2 * h)
                it.iternext()
            rel = np.linalg.norm(g_cores[k] - fd) / max(np.linalg.norm(fd), 1e-12)
            worst_core = max(worst_core, rel)
            if rel >= 1e-5:
                failures += 1
    return [
        CheckResult(
            f"parameter-shift vs finite differences on {n_circuits} circuits",
            failures == 0,
            f"max rel error theta {worst_theta:.2e}, encoder {worst_core:.2e} (threshold 1e-5)",
        )
    ]


def _trained_audit_model(seed: int = 0):
    """Small financial model trained once and reused across the noise grid."""
    cfg = RunConfig.from_flat(
        {
            "circuit.layers": 2,
            "circuit.max_layers": 2,
            "train.lr": 0.05,
            "train.batch": 32,
            "train.epochs": 6,
            "qas.candidates_per_round": 2,
            "qas.rounds": 1,
            "data.n_tasks": 2,
        }
    )
    task = gen_financial(cfg.data_seed, n_steps=1500, n_tasks=2, max_samples_per_task=80)[0]
    space = SearchSpace(cfg.circuit_qubits, cfg.circuit_max_layers)
    table = rng_for(seed, 0).uniform(-0.1, 0.1, size=(cfg.circuit_max_layers, cfg.circuit_qubits, 3))
    encoder = TTLinear.initialize(
        cfg.encoder_input_modes, cfg.encoder_output_modes, cfg.encoder_ranks, rng_for(seed, 1)
    )
    model = _Model(table, encoder, ClassifierHead(2))
    policy = PolicySnapshot.fresh(space)
    summary = run_task(task, policy, model, cfg, "cl_qas", seed, 0, space)
    return cfg, task, space, model, policy, summary


def suite_robustness(
    seed: int = 0,
    p_grid=(0.0, 0.001, 0.005),
    pr_grid=(0.0, 0.01),
    n_traj: int = 1000,
) -> list[CheckResult]:
    cfg, task, space, model, policy, summary = _trained_audit_model(seed)
    results = []
    for p1 in p_grid:
        for p2 in p_grid:
            for pr in pr_grid:
                noise = NoiseModel(p1=p1, p2=p2, pr=pr)
                row = robustness_audit(
                    model.theta_table,
                    summary["arch"],
                    model.encoder,
                    model.head,
                    task,
                    noise,
                    space,
                    policy.phi,
                    objective_lambda=cfg.objective_lambda,
                    n_traj=n_traj,
                    max_examples=6,
                    n_arch_samples=6,
                    seed=seed,
                )
                results.append(
                    CheckResult(
                        f"objective robustness p1={p1} p2={p2} pr={pr}",
                        row["holds"],
                        f"lhs {row['lhs']:.4f} <= rhs {row['rhs']:.4f} "
                        f"(alpha {row['alpha']:.4f}, delta_hat {row['delta_hat']:.4f})",
                    )
                )
    return results


SUITES = {
    "tt": suite_tt,
    "noise": suite_noise,
    "gradient": suite_gradient,
    "robustness": suite_robustness,
}
