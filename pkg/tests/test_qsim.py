"""Statevector simulator tests against brute-force enumeration oracles."""

import numpy as np
import pytest

from clqas.qsim import (
    Gate,
    QuantumState,
    angle_state_batch,
    apply_cnot,
    apply_gate,
    apply_pauli,
    apply_rotation,
    expect_z_all,
    expectations_z,
    prepare_amplitude_state,
    prepare_angle_state,
    sample_bitstrings,
)


def brute_force_z(amps: np.ndarray, num_qubits: int) -> np.ndarray:
    """Enumerate |amp_i|^2 weighted by the parity of each bit."""
    z = np.zeros(num_qubits)
    for i, amp in enumerate(amps):
        p = abs(amp) ** 2
        for u in range(num_qubits):
            bit = (i >> (num_qubits - 1 - u)) & 1
            z[u] += p * (1.0 if bit == 0 else -1.0)
    return z


def random_state(rng, num_qubits):
    amps = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    return amps / np.linalg.norm(amps)


def test_prepare_amplitude_state():
    s = prepare_amplitude_state(np.array([1.0, 0.0]))
    assert np.allclose(s.amplitudes, [1, 0])
    s = prepare_amplitude_state(np.array([3.0, 4.0]))
    assert np.allclose(s.amplitudes, [0.6, 0.8])
    with pytest.raises(ValueError):
        prepare_amplitude_state(np.ones(3))
    with pytest.raises(ValueError):
        prepare_amplitude_state(np.zeros(4))


def test_prepare_amplitude_state_matches_enumeration():
    rng = np.random.default_rng(0)
    x = rng.normal(size=8)
    s = prepare_amplitude_state(x)
    assert np.allclose(expect_z_all(s), brute_force_z(s.amplitudes, 3), atol=1e-12)


def test_prepare_angle_state():
    s = prepare_angle_state(np.zeros(3))
    assert np.allclose(expect_z_all(s), 1.0)
    s = prepare_angle_state(np.array([np.pi, 0.0]))
    assert np.allclose(expect_z_all(s), [-1.0, 1.0], atol=1e-12)
    s = prepare_angle_state(np.array([np.pi / 2]))
    assert abs(expect_z_all(s)[0]) < 1e-12


def test_rotation_identity_and_round_trip():
    rng = np.random.default_rng(1)
    amps = random_state(rng, 3)
    for axis in ("rx", "ry", "rz"):
        assert np.allclose(apply_rotation(amps, axis, 1, 0.0, 3), amps, atol=1e-12)
        phi = rng.uniform(-np.pi, np.pi)
        fwd = apply_rotation(amps, axis, 2, phi, 3)
        back = apply_rotation(fwd, axis, 2, -phi, 3)
        assert np.allclose(back, amps, atol=1e-12)
        assert abs(np.linalg.norm(fwd) - 1.0) < 1e-12


def test_cnot_basis_action():
    # |10> -> |11> with control 0, target 1 (qubit 0 is the MSB)
    amps = np.zeros(4, dtype=complex)
    amps[0b10] = 1.0
    out = apply_cnot(amps, 0, 1, 2)
    assert np.allclose(out[0b11], 1.0)
    # control in |0> leaves the target alone
    amps = np.zeros(4, dtype=complex)
    amps[0b01] = 1.0
    out = apply_cnot(amps, 0, 1, 2)
    assert np.allclose(out[0b01], 1.0)
    # reversed control/target
    amps = np.zeros(4, dtype=complex)
    amps[0b01] = 1.0
    out = apply_cnot(amps, 1, 0, 2)
    assert np.allclose(out[0b11], 1.0)


def test_rz_preserves_z_expectation():
    s = prepare_angle_state(np.zeros(2))
    for phi in (0.1, 1.0, -2.0):
        out = apply_gate(s, Gate("rz", (0,), phi))
        assert np.allclose(expect_z_all(out), [1.0, 1.0], atol=1e-12)


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("rx", (0, 1), 0.1)
    with pytest.raises(ValueError):
        Gate("rx", (0,))
    with pytest.raises(ValueError):
        Gate("cnot", (1, 1))
    with pytest.raises(ValueError):
        Gate("hadamard", (0,))
    s = prepare_angle_state(np.zeros(2))
    with pytest.raises(ValueError):
        apply_gate(s, Gate("rx", (5,), 0.1))


def test_bell_state_marginals():
    # (|00> + |11>)/sqrt(2) built from RY(pi/2) and CNOT
    s = prepare_angle_state(np.array([np.pi / 2, 0.0]))
    s = apply_gate(s, Gate("cnot", (0, 1)))
    assert np.allclose(expect_z_all(s), [0.0, 0.0], atol=1e-12)


def test_expect_z_matches_brute_force_random():
    rng = np.random.default_rng(2)
    for _ in range(10):
        amps = random_state(rng, 3)
        assert np.allclose(expectations_z(amps, 3), brute_force_z(amps, 3), atol=1e-12)


def test_norm_preserved_across_random_circuits():
    rng = np.random.default_rng(3)
    amps = random_state(rng, 4)
    for _ in range(50):
        kind = rng.choice(["rx", "ry", "rz", "cnot"])
        if kind == "cnot":
            c, t = rng.choice(4, size=2, replace=False)
            amps = apply_cnot(amps, int(c), int(t), 4)
        else:
            amps = apply_rotation(amps, kind, int(rng.integers(4)), rng.uniform(-3, 3), 4)
        assert abs(np.linalg.norm(amps) - 1.0) < 1e-12
    z = expectations_z(amps, 4)
    assert np.all(z >= -1.0 - 1e-12) and np.all(z <= 1.0 + 1e-12)


def test_pauli_actions():
    amps = np.zeros(2, dtype=complex)
    amps[0] = 1.0
    assert np.allclose(apply_pauli(amps, "x", 0, 1), [0, 1])
    assert np.allclose(apply_pauli(amps, "y", 0, 1), [0, 1j])
    assert np.allclose(apply_pauli(amps, "z", 0, 1), [1, 0])
    minus = apply_pauli(np.array([0, 1.0 + 0j]), "z", 0, 1)
    assert np.allclose(minus, [0, -1])


def test_sample_bitstrings_deterministic_state():
    s = prepare_angle_state(np.zeros(3))
    strings, z_hat = sample_bitstrings(s, 100, np.random.default_rng(0))
    assert set(strings) == {"000"}
    assert np.allclose(z_hat, 1.0)


def test_sample_bitstrings_plus_state_concentration():
    s = prepare_angle_state(np.array([np.pi / 2]))
    _, z_hat = sample_bitstrings(s, 100_000, np.random.default_rng(1))
    assert abs(z_hat[0]) <= 0.02


def test_sample_bitstrings_seed_determinism():
    rng = np.random.default_rng(4)
    s = QuantumState(random_state(rng, 3), 3)
    a, za = sample_bitstrings(s, 500, np.random.default_rng(42))
    b, zb = sample_bitstrings(s, 500, np.random.default_rng(42))
    assert a == b
    assert np.array_equal(za, zb)


def test_shot_error_shrinks_with_shots():
    rng = np.random.default_rng(5)
    s = QuantumState(random_state(rng, 3), 3)
    exact = expect_z_all(s)
    devs = []
    for shots in (200, 800, 3200, 12800):
        errs = []
        for rep in range(20):
            _, z_hat = sample_bitstrings(s, shots, np.random.default_rng(100 + rep))
            errs.append(np.abs(z_hat - exact).mean())
        devs.append(np.mean(errs))
    # mean absolute deviation should roughly halve per 4x shots
    assert devs[-1] < devs[0] / 4
    assert all(b < a for a, b in zip(devs, devs[1:]))


def test_angle_state_batch_matches_single():
    rng = np.random.default_rng(6)
    angles = rng.uniform(-np.pi, np.pi, size=(5, 4))
    batch = angle_state_batch(angles)
    for row, a in zip(batch, angles):
        assert np.allclose(row, prepare_angle_state(a).amplitudes, atol=1e-12)


def test_batched_ops_match_loop():
    rng = np.random.default_rng(7)
    amps = np.stack([random_state(rng, 3) for _ in range(4)])
    angles = rng.uniform(-2, 2, size=4)
    batched = apply_rotation(amps, "ry", 1, angles, 3)
    for row, orig, ang in zip(batched, amps, angles):
        assert np.allclose(row, apply_rotation(orig, "ry", 1, ang, 3), atol=1e-12)
    batched = apply_cnot(amps, 2, 0, 3)
    for row, orig in zip(batched, amps):
        assert np.allclose(row, apply_cnot(orig, 2, 0, 3), atol=1e-12)
