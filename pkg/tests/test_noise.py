"""Noise model tests: closed-form contraction factors vs Monte Carlo trajectories."""

import numpy as np
import pytest

from clqas.noise import (
    GateCensus,
    NoiseModel,
    apply_expectation_noise,
    contraction_alpha,
    depolarize_2q_rows,
    depolarize_rows,
    flip_bits,
    jitter_angles,
    readout_flip,
    stochastic_depolarize,
)
from clqas.qsim import Gate, expectations_z, prepare_angle_state


def test_noise_model_defaults_and_validation():
    nm = NoiseModel()
    assert nm.p1 == 0.001 and nm.p2 == 0.001 and nm.pr == 0.01
    assert nm.zeta1 == pytest.approx(1 - 4 * 0.001 / 3)
    assert nm.zeta2 == pytest.approx(1 - 16 * 0.001 / 15)
    linear = NoiseModel(p1=0.1, p2=0.2, pr=0.0, convention="linear")
    assert linear.zeta1 == pytest.approx(0.9)
    assert linear.zeta2 == pytest.approx(0.8)
    with pytest.raises(ValueError):
        NoiseModel(p1=1.5)
    with pytest.raises(ValueError):
        NoiseModel(pr=0.5)
    with pytest.raises(ValueError):
        NoiseModel(convention="other")


def test_contraction_alpha_values():
    zero = NoiseModel(p1=0, p2=0, pr=0)
    assert contraction_alpha(zero, GateCensus(10, 5)) == 1.0
    one_gate = NoiseModel(p1=0.001, p2=0, pr=0)
    assert contraction_alpha(one_gate, GateCensus(1, 0)) == pytest.approx(0.99866667, abs=1e-8)
    readout_only = NoiseModel(p1=0, p2=0, pr=0.01)
    assert contraction_alpha(readout_only, GateCensus(0, 0)) == pytest.approx(0.98)


def test_contraction_alpha_monotone():
    census = GateCensus(3, 2)
    base = contraction_alpha(NoiseModel(p1=0.001, p2=0.001, pr=0.01), census)
    for kwargs in ({"p1": 0.002}, {"p2": 0.002}, {"pr": 0.02}):
        worse = contraction_alpha(NoiseModel(**{"p1": 0.001, "p2": 0.001, "pr": 0.01, **kwargs}), census)
        assert worse < base
    more_gates = contraction_alpha(NoiseModel(p1=0.001, p2=0.001, pr=0.01), GateCensus(4, 3))
    assert more_gates < base


def test_gate_census_from_gates():
    gates = [Gate("rx", (0,), 0.1), Gate("ry", (1,), 0.2), Gate("cnot", (0, 1))]
    census = GateCensus.from_gates(gates)
    assert census.n1 == 2 and census.n2 == 1


def test_apply_expectation_noise():
    z = np.array([1.0, -1.0])
    assert np.allclose(apply_expectation_noise(z, 1.0), z)
    assert np.allclose(apply_expectation_noise(z, 0.5), [0.5, -0.5])
    rng = np.random.default_rng(0)
    for _ in range(20):
        zr = rng.uniform(-1, 1, size=4)
        alpha = rng.uniform(0, 1)
        delta = rng.normal(size=4) * 0.01
        bound = np.linalg.norm(delta)
        out = apply_expectation_noise(zr, alpha, delta, delta_bound=bound)
        assert np.linalg.norm(out - np.clip(alpha * zr, -1, 1)) <= bound + 1e-9
    with pytest.raises(ValueError):
        apply_expectation_noise(z, 1.0, np.array([1.0, 1.0]), delta_bound=0.1)


def test_depolarize_p0_is_identity():
    s = prepare_angle_state(np.array([0.3, -0.7]))
    out = stochastic_depolarize(s, [0, 1], 0.0, np.random.default_rng(0))
    assert np.allclose(out.amplitudes, s.amplitudes)


def test_single_qubit_depolarizing_matches_contraction():
    # |0>, p = 0.3: mean <Z> over trajectories -> 1 - 4p/3 = 0.6
    n_traj = 100_000
    rng = np.random.default_rng(1)
    amps = np.zeros((n_traj, 2), dtype=complex)
    amps[:, 0] = 1.0
    noisy = depolarize_rows(amps, [0], 0.3, rng, 1)
    z = expectations_z(noisy, 1)[:, 0]
    assert z.mean() == pytest.approx(0.6, abs=0.01)


def test_two_qubit_depolarizing_matches_contraction():
    # Bell pair, p2 = 0.15: mean <ZZ> -> 1 - 16p/15 = 0.84
    from clqas.qsim import apply_cnot, apply_rotation

    n_traj = 100_000
    rng = np.random.default_rng(2)
    amps = np.zeros((n_traj, 4), dtype=complex)
    amps[:, 0] = 1.0
    amps = apply_rotation(amps, "ry", 0, np.pi / 2, 2)
    amps = apply_cnot(amps, 0, 1, 2)
    noisy = depolarize_2q_rows(amps, [(0, 1)], 0.15, rng, 2)
    probs = np.abs(noisy) ** 2
    parity = np.array([1.0, -1.0, -1.0, 1.0])  # ZZ eigenvalues over |00>,|01>,|10>,|11>
    zz = probs @ parity
    assert zz.mean() == pytest.approx(0.84, abs=0.01)


def test_readout_flip_zero_and_determinism():
    assert readout_flip("0101", 0.0, np.random.default_rng(0)) == "0101"
    a = readout_flip("0000000000", 0.3, np.random.default_rng(7))
    b = readout_flip("0000000000", 0.3, np.random.default_rng(7))
    assert a == b
    with pytest.raises(ValueError):
        readout_flip("01", 0.5, np.random.default_rng(0))


def test_readout_flip_expectation():
    # all-zero source, pr = 0.01 -> empirical <Z> = 0.98 within 0.005
    rng = np.random.default_rng(3)
    bits = np.zeros(100_000, dtype=int)
    flipped = flip_bits(bits, 0.01, rng)
    z = 1.0 - 2.0 * flipped.mean()
    assert z == pytest.approx(0.98, abs=0.005)
    # near-symmetric limit drives <Z> toward 0
    flipped = flip_bits(bits, 0.499, np.random.default_rng(4))
    assert abs(1.0 - 2.0 * flipped.mean()) < 0.02


def test_jitter_angles():
    rng = np.random.default_rng(5)
    angles = rng.uniform(-1, 1, size=16)
    assert np.array_equal(jitter_angles(angles, 0.0, rng), angles)
    eps = 0.05
    out = jitter_angles(angles, eps, np.random.default_rng(6))
    assert np.max(np.abs(out - angles)) <= eps
    again = jitter_angles(angles, eps, np.random.default_rng(6))
    assert np.array_equal(out, again)


def test_trajectory_mean_matches_analytic_small_circuit():
    # one RY then one RX on a single qubit, both depolarized: contraction zeta1^2
    from clqas.qsim import apply_rotation

    p1 = 0.1
    n_traj = 50_000
    rng = np.random.default_rng(8)
    amps = np.zeros((n_traj, 2), dtype=complex)
    amps[:, 0] = 1.0
    amps = apply_rotation(amps, "ry", 0, 0.4, 1)
    amps = depolarize_rows(amps, [0], p1, rng, 1)
    amps = apply_rotation(amps, "rx", 0, 0.2, 1)
    amps = depolarize_rows(amps, [0], p1, rng, 1)
    z_mc = expectations_z(amps, 1)[:, 0].mean()

    exact = np.zeros(2, dtype=complex)
    exact[0] = 1.0
    exact = apply_rotation(exact, "ry", 0, 0.4, 1)
    exact = apply_rotation(exact, "rx", 0, 0.2, 1)
    z_exact = expectations_z(exact, 1)[0]
    zeta1 = 1 - 4 * p1 / 3
    se = 1.0 / np.sqrt(n_traj)
    assert abs(z_mc - zeta1**2 * z_exact) <= 3 * se
