"""Architecture policy tests: sampling statistics, score-function identities,
hand-computed categorical gradients, consolidation penalties, Fisher estimates."""

import numpy as np
import pytest

from clqas.policy import (
    Architecture,
    ArchSample,
    LayerSpec,
    PolicySnapshot,
    SearchSpace,
    architecture_log_prob,
    baseline_architecture,
    categorical_kl,
    categorical_score,
    estimate_fisher,
    ewc_penalty,
    grad_log_prob,
    kl_penalty,
    policy_loss,
    reinforce_grad,
    reward,
    sample_architecture,
    surrogate_objective,
)


def small_space():
    return SearchSpace(num_qubits=2, max_layers=3)


def test_space_layout():
    space = small_space()
    # depth block of 3, then 3 layers x (2 qubits x 5 + 3)
    assert space.num_logits == 3 + 3 * (2 * 5 + 3)
    kinds = [k for k, _, _ in space.positions]
    assert kinds[0] == "depth"
    assert kinds.count("rot") == 6 and kinds.count("ent") == 3


def test_architecture_counts_and_tokens():
    arch = baseline_architecture(3, 2)
    assert arch.num_param_slots == 3 * 3 * 2
    assert arch.cnot_count == 2 * 2
    token = arch.to_token()
    assert token.startswith("L2 | ")
    assert Architecture.from_token(token) == arch

    mixed = Architecture(
        2,
        (
            LayerSpec(("rx", "id"), "ring"),
            LayerSpec(("rxyz", "rz"), "none"),
        ),
    )
    assert mixed.num_param_slots == 1 + 0 + 3 + 1
    assert mixed.cnot_count == 1  # two-wire ring collapses to one CNOT
    assert Architecture.from_token(mixed.to_token()) == mixed


def test_entangler_none_has_no_cnots():
    arch = Architecture(4, (LayerSpec(("ry",) * 4, "none"),))
    assert arch.cnot_count == 0


def test_uniform_policy_depth_distribution():
    space = small_space()
    phi = np.zeros(space.num_logits)
    rng = np.random.default_rng(0)
    n = 30_000
    counts = np.zeros(space.max_layers)
    for _ in range(n):
        counts[sample_architecture(space, phi, rng).arch.depth - 1] += 1
    freq = counts / n
    se = np.sqrt((1 / 3) * (2 / 3) / n)
    assert np.all(np.abs(freq - 1.0 / 3.0) <= 3.5 * se)


def test_saturated_logit_dominates():
    space = small_space()
    phi = np.zeros(space.num_logits)
    phi[space.depth_slice()][0] = 20.0
    rng = np.random.default_rng(1)
    depths = [sample_architecture(space, phi, rng).arch.depth for _ in range(2000)]
    assert np.mean(np.array(depths) == 1) > 0.999


def test_sampling_frequencies_match_softmax():
    space = SearchSpace(num_qubits=1, max_layers=2)
    rng_phi = np.random.default_rng(2)
    phi = rng_phi.normal(scale=0.5, size=space.num_logits)
    rng = np.random.default_rng(3)
    n = 100_000
    depth_counts = np.zeros(2)
    rot_counts = np.zeros(5)
    for _ in range(n):
        arch = sample_architecture(space, phi, rng).arch
        depth_counts[arch.depth - 1] += 1
        rot_counts[
            ["rx", "ry", "rz", "rxyz", "id"].index(arch.layers[0].rotations[0])
        ] += 1
    probs = np.exp(phi[space.depth_slice()])
    probs /= probs.sum()
    for k in range(2):
        se = np.sqrt(probs[k] * (1 - probs[k]) / n)
        assert abs(depth_counts[k] / n - probs[k]) <= 3.5 * se
    # layer-0 rotation position is sampled for every draw
    sl = space.rot_slice(0, 0)
    probs = np.exp(phi[sl])
    probs /= probs.sum()
    for k in range(5):
        se = np.sqrt(probs[k] * (1 - probs[k]) / n)
        assert abs(rot_counts[k] / n - probs[k]) <= 3.5 * se


def test_logprob_consistency():
    space = small_space()
    rng = np.random.default_rng(4)
    phi = rng.normal(size=space.num_logits)
    for _ in range(20):
        s = sample_architecture(space, phi, rng)
        assert s.logprob <= 0.0
        assert architecture_log_prob(space, phi, s.arch) == pytest.approx(s.logprob, abs=1e-12)


def test_reward_examples():
    assert reward(1.0, 0, 0.005) == 1.0
    assert reward(0.9, 20, 0.005) == pytest.approx(0.8)
    assert reward(0.1, 100, 0.005) == 0.0


def test_categorical_score_hand_example():
    # two actions, zero logits, action 0: onehot - softmax = (0.5, -0.5)
    assert np.allclose(categorical_score(np.zeros(2), 0), [0.5, -0.5])


def test_reinforce_gradients():
    space = SearchSpace(num_qubits=1, max_layers=2)
    phi = np.zeros(space.num_logits)
    arch = Architecture(1, (LayerSpec(("rx",), "chain"),))
    sample = ArchSample(arch, architecture_log_prob(space, phi, arch), reward=1.0)
    grad = reinforce_grad([sample], phi, space)
    # depth block: -(onehot(depth=1) - uniform) = -(0.5, -0.5)
    assert np.allclose(grad[space.depth_slice()], [-0.5, 0.5])
    # all-zero rewards give a zero gradient
    zeros = [ArchSample(arch, sample.logprob, reward=0.0)]
    assert np.allclose(reinforce_grad(zeros, phi, space), 0.0)
    with pytest.raises(ValueError):
        reinforce_grad([], phi, space)
    with pytest.raises(ValueError):
        reinforce_grad([ArchSample(arch, 0.0)], phi, space)


def test_reinforce_matches_finite_differences_of_surrogate():
    space = SearchSpace(num_qubits=2, max_layers=2)
    rng = np.random.default_rng(5)
    phi = rng.normal(scale=0.3, size=space.num_logits)
    samples = []
    for _ in range(6):
        s = sample_architecture(space, phi, rng)
        s.reward = float(rng.uniform(0, 1))
        samples.append(s)
    analytic = reinforce_grad(samples, phi, space)
    h = 1e-6
    numeric = np.zeros_like(phi)
    for i in range(phi.size):
        up, dn = phi.copy(), phi.copy()
        up[i] += h
        dn[i] -= h
        numeric[i] = (
            surrogate_objective(samples, up, space) - surrogate_objective(samples, dn, space)
        ) / (2 * h)
    assert np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12) < 1e-5


def test_score_function_zero_mean():
    space = SearchSpace(num_qubits=1, max_layers=2)
    rng = np.random.default_rng(6)
    phi = rng.normal(scale=0.5, size=space.num_logits)
    n = 10_000
    acc = np.zeros_like(phi)
    for _ in range(n):
        s = sample_architecture(space, phi, rng)
        acc += grad_log_prob(space, phi, s.arch)
    mean = acc / n
    # each coordinate is an average of bounded terms; SE <= 1/sqrt(n)
    assert np.max(np.abs(mean)) <= 3.5 / np.sqrt(n)


def test_ewc_penalty():
    phi = np.array([1.0, 2.0])
    old = np.array([0.0, 1.0])
    fisher = np.array([1.0, 1.0])
    value, grad = ewc_penalty(phi, old, fisher, 2.0)
    assert value == pytest.approx(2.0)
    assert np.allclose(grad, [2.0, 2.0])
    value, _ = ewc_penalty(phi, phi, fisher, 2.0)
    assert value == 0.0
    with pytest.raises(ValueError):
        ewc_penalty(phi, old, np.array([-1.0, 1.0]), 1.0)
    with pytest.raises(ValueError):
        ewc_penalty(phi, np.zeros(3), fisher, 1.0)


def test_ewc_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    phi = rng.normal(size=8)
    old = rng.normal(size=8)
    fisher = rng.uniform(0, 2, size=8)
    lam = 1.7
    _, grad = ewc_penalty(phi, old, fisher, lam)
    h = 1e-6
    for i in range(8):
        up, dn = phi.copy(), phi.copy()
        up[i] += h
        dn[i] -= h
        num = (ewc_penalty(up, old, fisher, lam)[0] - ewc_penalty(dn, old, fisher, lam)[0]) / (2 * h)
        assert abs(grad[i] - num) < 1e-8


def test_kl_hand_example():
    # probs (0.9, 0.1) against a uniform prior
    logits = np.array([np.log(9.0), 0.0])
    kl, _ = categorical_kl(logits, np.zeros(2))
    expected = 0.9 * np.log(1.8) + 0.1 * np.log(0.2)
    assert kl == pytest.approx(expected, abs=1e-12)


def test_kl_penalty_properties():
    space = small_space()
    rng = np.random.default_rng(8)
    phi = rng.normal(size=space.num_logits)
    value, _ = kl_penalty(phi, phi.copy(), space)
    assert value == pytest.approx(0.0, abs=1e-12)
    for _ in range(1000):
        a = rng.normal(size=space.num_logits)
        b = rng.normal(size=space.num_logits)
        value, _ = kl_penalty(a, b, space)
        assert value >= -1e-12
    with pytest.raises(ValueError):
        kl_penalty(phi, np.zeros(3), space)


def test_kl_gradient_matches_finite_differences():
    space = SearchSpace(num_qubits=1, max_layers=2)
    rng = np.random.default_rng(9)
    phi = rng.normal(size=space.num_logits)
    prior = rng.normal(size=space.num_logits)
    _, grad = kl_penalty(phi, prior, space)
    h = 1e-6
    numeric = np.zeros_like(phi)
    for i in range(phi.size):
        up, dn = phi.copy(), phi.copy()
        up[i] += h
        dn[i] -= h
        numeric[i] = (kl_penalty(up, prior, space)[0] - kl_penalty(dn, prior, space)[0]) / (2 * h)
    assert np.max(np.abs(grad - numeric)) < 1e-7


def test_fisher_saturated_policy_is_tiny():
    space = SearchSpace(num_qubits=1, max_layers=2)
    phi = np.zeros(space.num_logits)
    for _, off, size in space.positions:
        phi[off] = 30.0
    fisher = estimate_fisher(space, phi, 200, np.random.default_rng(10))
    assert np.max(fisher) < 1e-10


def test_fisher_matches_bernoulli_closed_form():
    # depth block has two options: exact Fisher of each logit is p(1-p)
    space = SearchSpace(num_qubits=1, max_layers=2)
    phi = np.zeros(space.num_logits)
    phi[0] = 0.8  # depth probs (p, 1-p) with p = sigmoid(0.8)
    probs = np.exp([0.8, 0.0])
    probs = probs / probs.sum()
    exact = probs * (1 - probs)
    n = 10_000
    fisher = estimate_fisher(space, phi, n, np.random.default_rng(11))
    for k in range(2):
        p = probs[k]
        # variance of (indicator - p)^2 across draws
        var = p * (1 - p) ** 4 + (1 - p) * p**4 - (p * (1 - p)) ** 2 + 1e-12
        se = np.sqrt(var / n)
        assert abs(fisher[k] - exact[k]) <= 3 * se


def test_fisher_position_relabeling_symmetry():
    space = SearchSpace(num_qubits=2, max_layers=1)
    rng = np.random.default_rng(12)
    phi = np.zeros(space.num_logits)
    block = rng.normal(scale=0.5, size=5)
    phi[space.rot_slice(0, 0)] = block
    phi[space.rot_slice(0, 1)] = block
    fisher = estimate_fisher(space, phi, 40_000, np.random.default_rng(13))
    f0 = fisher[space.rot_slice(0, 0)]
    f1 = fisher[space.rot_slice(0, 1)]
    assert np.max(np.abs(f0 - f1)) < 0.02


def test_policy_loss_composition():
    assert policy_loss(0.5, 2.0, 0.1, 0.1, 0.5) == pytest.approx(0.75)
    assert policy_loss(0.3, 5.0, 7.0, 0.0, 0.0) == pytest.approx(0.3)
    base = policy_loss(0.3, 0.0, 0.0, 0.2, 0.2)
    assert policy_loss(0.3, 1.0, 1.0, 0.2, 0.2) >= base


def test_policy_snapshot_fresh_and_copy():
    space = small_space()
    snap = PolicySnapshot.fresh(space)
    assert np.all(snap.fisher == 0.0)
    value, _ = ewc_penalty(snap.phi, snap.phi_old, snap.fisher, 1.0)
    assert value == 0.0
    dup = snap.copy()
    dup.phi[0] = 5.0
    assert snap.phi[0] == 0.0


def run_bandit(seed: int, steps: int = 500, lr: float = 0.2, batch: int = 8) -> float:
    """REINFORCE on a pure bandit: reward 1 for one fixed architecture, else 0.
    Returns the final probability of the rewarded architecture."""
    space = SearchSpace(num_qubits=1, max_layers=2)
    target = Architecture(1, (LayerSpec(("ry",), "none"),))
    phi = np.zeros(space.num_logits)
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        samples = []
        for _ in range(batch):
            s = sample_architecture(space, phi, rng)
            s.reward = 1.0 if s.arch == target else 0.0
            samples.append(s)
        phi = phi - lr * reinforce_grad(samples, phi, space)
    return float(np.exp(architecture_log_prob(space, phi, target)))


def test_reinforce_bandit_convergence():
    for seed in range(5):
        assert run_bandit(seed) > 0.9, f"seed {seed} failed to concentrate"


def test_ewc_anchoring_reduces_displacement():
    # with a large quadratic anchor the policy stays near phi_old
    space = SearchSpace(num_qubits=1, max_layers=2)
    target = Architecture(1, (LayerSpec(("ry",), "none"),))

    def run(mu: float, seed: int) -> float:
        # lr kept small enough that lr * mu < 2 (stability of the quadratic pull)
        lr = 1e-3
        phi = np.zeros(space.num_logits)
        phi_old = phi.copy()
        fisher = np.ones_like(phi)
        rng = np.random.default_rng(seed)
        for _ in range(100):
            samples = []
            for _ in range(8):
                s = sample_architecture(space, phi, rng)
                s.reward = 1.0 if s.arch == target else 0.0
                samples.append(s)
            grad = reinforce_grad(samples, phi, space)
            grad += mu * ewc_penalty(phi, phi_old, fisher, 1.0)[1]
            phi = phi - lr * grad
        return float(np.linalg.norm(phi - phi_old))

    for seed in range(3):
        assert run(1e3, seed) < run(0.0, seed)


def test_curvature_stability_diagnostic():
    # |J(phi_T) - J(phi_0)| <= C_hat * ||phi_T - phi_0||^2 along a descent path,
    # with C_hat the max per-step curvature ratio
    space = SearchSpace(num_qubits=1, max_layers=2)
    target = Architecture(1, (LayerSpec(("ry",), "none"),))
    phi = np.zeros(space.num_logits)
    rng = np.random.default_rng(14)
    samples = []
    for _ in range(16):
        s = sample_architecture(space, phi, rng)
        s.reward = 1.0 if s.arch == target else 0.25
        samples.append(s)
    phi0 = phi.copy()
    j_prev = surrogate_objective(samples, phi, space)
    j0 = j_prev
    c_hat = 0.0
    for _ in range(50):
        step = -0.1 * reinforce_grad(samples, phi, space)
        phi = phi + step
        j = surrogate_objective(samples, phi, space)
        c_hat = max(c_hat, abs(j - j_prev) / max(np.dot(step, step), 1e-18))
        j_prev = j
    lhs = abs(j_prev - j0)
    rhs = c_hat * float(np.linalg.norm(phi - phi0) ** 2)
    assert lhs <= rhs + 1e-12
