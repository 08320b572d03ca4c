"""Calibration harness for the desk-scale financial benchmark.

Times a candidate acceptance configuration and prints the comparative
quantities the acceptance gate asserts.
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from clqas.config import RunConfig
from clqas.data import gen_financial
from clqas.harness import run_sequence

BASE = {
    "dataset": "financial",
    "data.seed": 7,
    "data.n_tasks": 8,
    "data.max_samples_per_task": 160,
    "circuit.qubits": 8,
    "circuit.layers": 2,
    "circuit.max_layers": 2,
    "train.lr": 0.05,
    "train.batch": 32,
    "train.epochs": 8,
    "qas.candidates_per_round": 4,
    "qas.rounds": 2,
    "qas.baseline": "running_mean",
    "qas.mu": 0.5,
    "qas.beta": 0.1,
    "qas.policy_lr": 0.1,
    "qas.fisher_samples": 32,
}


def summarize(records):
    f1 = float(np.mean([np.mean([r["f1"] for r in rec.task_rows]) for rec in records]))
    acc = float(np.mean([np.mean([r["acc"] for r in rec.task_rows]) for rec in records]))
    bwt = float(np.mean([rec.diagnostics["bwt"] for rec in records]))
    return acc, f1, bwt


def main():
    overrides = {}
    for arg in sys.argv[1:]:
        key, _, value = arg.partition("=")
        try:
            overrides[key] = int(value)
        except ValueError:
            try:
                overrides[key] = float(value)
            except ValueError:
                overrides[key] = value
    seeds = list(range(1, 6))
    cfg = RunConfig.from_flat({**BASE, **overrides})
    tasks = gen_financial(
        cfg.data_seed,
        n_steps=cfg.data_n_steps,
        n_tasks=cfg.data_n_tasks,
        max_samples_per_task=cfg.data_max_samples_per_task,
    )
    print("task sizes:", tasks[0].sizes, "balance:", [round(t.flags["label_balance"], 2) for t in tasks])

    results = {}
    for method in ("naive_vqc", "qas_no_cl", "cl_qas"):
        t0 = time.time()
        recs = run_sequence(tasks, method, seeds, cfg)
        dt = time.time() - t0
        acc, f1, bwt = summarize(recs)
        results[method] = (acc, f1, bwt)
        print(f"{method:10s} acc={acc:.3f} f1={f1:.3f} bwt={bwt:+.4f}  ({dt:.1f}s)")

    noisy_flat = {**BASE, **overrides, "noise.p1": 0.001, "noise.p2": 0.001, "noise.pr": 0.01, "train.shots": 1024}
    cfg_noisy = RunConfig.from_flat(noisy_flat)
    t0 = time.time()
    recs = run_sequence(tasks, "cl_qas", seeds, cfg_noisy)
    dt = time.time() - t0
    acc_n, f1_n, bwt_n = summarize(recs)
    print(f"cl_qas+noise acc={acc_n:.3f} f1={f1_n:.3f} bwt={bwt_n:+.4f}  ({dt:.1f}s)")

    acc_c, f1_c, bwt_c = results["cl_qas"]
    print("\nchecks:")
    print(f"  f1 cl_qas {f1_c:.3f} >= qas_no_cl {results['qas_no_cl'][1]:.3f}: {f1_c >= results['qas_no_cl'][1]}")
    print(f"  f1 cl_qas {f1_c:.3f} >= naive {results['naive_vqc'][1]:.3f}: {f1_c >= results['naive_vqc'][1]}")
    print(f"  bwt cl_qas {bwt_c:+.4f} >= qas_no_cl {results['qas_no_cl'][2]:+.4f}: {bwt_c >= results['qas_no_cl'][2]}")
    print(f"  acc drop {acc_c - acc_n:+.4f} <= 0.05: {acc_c - acc_n <= 0.05}")


if __name__ == "__main__":
    main()
