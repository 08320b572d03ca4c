"""Shared fixtures: synthetic ECG beat CSVs and small financial task sets."""

import numpy as np
import pytest


def make_ecg_csv(path, n_records=8, beats_per_record=60, seed=0, v_fraction=0.25):
    """Write a synthetic beat CSV following the `record,s0,...,s255,label` schema.

    Ventricular beats carry a wide bump so the classes are separable.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, 256)
    lines = ["record," + ",".join(f"s{i}" for i in range(256)) + ",label"]
    for r in range(n_records):
        record = f"rec{r:02d}"
        for _ in range(beats_per_record):
            label = int(rng.random() < v_fraction)
            if label == 0:
                beat = np.exp(-((t - 0.5) ** 2) / 0.001)  # narrow QRS-like spike
            else:
                beat = 1.4 * np.exp(-((t - 0.45) ** 2) / 0.02)  # broad ventricular bump
            beat = beat + 0.05 * rng.standard_normal(256) + 0.1 * r
            lines.append(record + "," + ",".join(f"{v:.6f}" for v in beat) + f",{label}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def ecg_csv(tmp_path):
    return make_ecg_csv(tmp_path / "beats.csv")


def make_blob_task(task_id, seed, n=64, dim=16, angle=0.0, sep=2.2):
    """Separable two-Gaussian task; `angle` rotates the separating direction
    in the first two feature coordinates so task optima shift across tasks."""
    from clqas.data import TaskDataset

    rng = np.random.default_rng(seed)
    direction = np.zeros(dim)
    direction[0], direction[1] = np.cos(angle), np.sin(angle)
    y = rng.integers(0, 2, size=n)
    x = rng.normal(scale=0.6, size=(n, dim)) + np.outer(2 * y - 1, sep / 2 * direction)
    n_train = int(0.7 * n)
    n_val = int(0.15 * n)
    return TaskDataset(
        task_id=task_id,
        x_train=x[:n_train],
        y_train=y[:n_train],
        x_val=x[n_train : n_train + n_val],
        y_val=y[n_train : n_train + n_val],
        x_test=x[n_train + n_val :],
        y_test=y[n_train + n_val :],
        source="synthetic",
        group=f"blob-{task_id}",
    )


def toy_config(**overrides):
    """Small 4-qubit configuration for 16-dimensional toy tasks."""
    from clqas.config import RunConfig

    flat = {
        "circuit.qubits": 4,
        "circuit.layers": 2,
        "circuit.max_layers": 2,
        "encoder.input_modes": [4, 4],
        "encoder.output_modes": [2, 2],
        "encoder.ranks": [1, 2, 1],
        "train.lr": 0.05,
        "train.batch": 16,
        "train.epochs": 4,
        "qas.candidates_per_round": 3,
        "qas.rounds": 2,
        "qas.fisher_samples": 16,
        "data.n_tasks": 3,
    }
    flat.update(overrides)
    return RunConfig.from_flat(flat)
