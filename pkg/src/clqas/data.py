"""Task datasets: ECG beat-window ingestion and the synthetic financial generator.

ECG tasks come from a pre-extracted beat CSV (`record,s0,...,s255,label`, one
beat per row, label 0 = normal / 1 = ventricular), grouped by record into
eight tasks with a stratified 80/20 test split followed by an 85/15
train/validation split of the pool (68/12/20 overall) and per-task z-score
normalization fit on the training split only.

Financial tasks are generated from a regime-switching AR(1) log-price
process: eight technical-indicator channels per step, the most recent 32
steps stacked into a 256-feature vector, next-step direction as the label,
eight equal consecutive time segments as tasks, chronological 80/10/10
splits, and robust median/IQR scaling fit on train only.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TaskDataset",
    "load_ecg",
    "check_ecg",
    "gen_financial",
    "tasks_from_prices",
    "indicators",
    "save_tasks",
    "load_tasks",
    "WINDOW_STEPS",
    "INDICATOR_CHANNELS",
    "WARMUP",
]

WINDOW_STEPS = 32
INDICATOR_CHANNELS = 8
# longest rolling window (Bollinger 20) plus EMA-26 burn-in
WARMUP = 33

_ECG_DIM = 256


@dataclass
class TaskDataset:
    """One task's train/val/test splits with provenance metadata."""

    task_id: int
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    source: str = "synthetic"
    group: str = ""
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("train", "val", "test"):
            x = getattr(self, f"x_{name}")
            y = getattr(self, f"y_{name}")
            if x.shape[0] != y.shape[0]:
                raise ValueError(f"{name} split has {x.shape[0]} rows but {y.shape[0]} labels")
            if y.size and not np.all(np.isin(y, (0, 1))):
                raise ValueError(f"{name} labels must be binary")
            if x.size and not np.all(np.isfinite(x)):
                raise ValueError(f"{name} features contain non-finite values")

    @property
    def feature_dim(self) -> int:
        return self.x_train.shape[1]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.x_train.shape[0], self.x_val.shape[0], self.x_test.shape[0])


def _stratified_split(y: np.ndarray, fraction: float, rng: np.random.Generator):
    """Indices for a held-out set of about `fraction`, class proportions kept."""
    held, kept = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        n_held = int(round(fraction * idx.size))
        held.extend(idx[:n_held])
        kept.extend(idx[n_held:])
    return np.sort(np.array(kept, dtype=int)), np.sort(np.array(held, dtype=int))


def _zscore_fit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


def load_ecg(path, records: list[str] | None = None, seed: int = 0) -> list[TaskDataset]:
    """Read a beat CSV and build eight record-grouped tasks."""
    path = Path(path)
    by_record: dict[str, list[tuple[np.ndarray, int]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "record" or header[-1] != "label":
            raise ValueError(f"{path}: expected header 'record,s0,...,s255,label'")
        if len(header) != _ECG_DIM + 2:
            raise ValueError(f"{path}: header has {len(header)} columns, expected {_ECG_DIM + 2}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != _ECG_DIM + 2:
                raise ValueError(f"{path}:{lineno}: {len(row)} columns, expected {_ECG_DIM + 2}")
            try:
                window = np.array([float(v) for v in row[1:-1]])
                label = int(row[-1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparsable value ({exc})") from None
            if label not in (0, 1):
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            by_record.setdefault(row[0], []).append((window, label))

    if records is None:
        available = sorted(by_record)
        if len(available) < 8:
            raise ValueError(f"{path}: {len(available)} record groups present, need at least 8")
        records = available[:8]
    else:
        missing = [r for r in records if r not in by_record]
        if missing:
            raise ValueError(f"{path}: configured records not found: {missing}")

    tasks = []
    for task_id, record in enumerate(records):
        rows = by_record[record]
        x = np.stack([w for w, _ in rows])
        y = np.array([lab for _, lab in rows], dtype=int)
        if np.unique(y).size < 2:
            raise ValueError(
                f"record {record!r} holds a single class and cannot form a task"
            )
        rng = np.random.default_rng((seed, task_id))
        pool_idx, test_idx = _stratified_split(y, 0.20, rng)
        train_rel, val_rel = _stratified_split(y[pool_idx], 0.15, rng)
        train_idx = pool_idx[train_rel]
        val_idx = pool_idx[val_rel]
        mean, std = _zscore_fit(x[train_idx])
        scale = lambda a: (a - mean) / std
        tasks.append(
            TaskDataset(
                task_id=task_id,
                x_train=scale(x[train_idx]),
                y_train=y[train_idx],
                x_val=scale(x[val_idx]),
                y_val=y[val_idx],
                x_test=scale(x[test_idx]),
                y_test=y[test_idx],
                source="ecg",
                group=record,
            )
        )
    return tasks


def check_ecg(path) -> dict:
    """Validate the CSV schema and summarize record groups and class counts."""
    tasks_or_error = None
    path = Path(path)
    counts: dict[str, list[int]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != _ECG_DIM + 2 or header[0] != "record":
            raise ValueError(f"{path}: expected header 'record,s0,...,s255,label'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != _ECG_DIM + 2:
                raise ValueError(f"{path}:{lineno}: {len(row)} columns, expected {_ECG_DIM + 2}")
            label = int(row[-1])
            counts.setdefault(row[0], [0, 0])[label] += 1
    return {
        "records": len(counts),
        "beats": int(sum(sum(c) for c in counts.values())),
        "per_record": {r: {"normal": c[0], "ventricular": c[1]} for r, c in sorted(counts.items())},
    }


def _ema(x: np.ndarray, span: int) -> np.ndarray:
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(x)
    out[0] = x[0]
    for t in range(1, x.size):
        out[t] = alpha * x[t] + (1 - alpha) * out[t - 1]
    return out


def _rolling(x: np.ndarray, window: int, stat) -> np.ndarray:
    """stat over trailing windows; positions with incomplete windows are NaN."""
    out = np.full(x.size, np.nan)
    if x.size >= window:
        view = np.lib.stride_tricks.sliding_window_view(x, window)
        out[window - 1 :] = stat(view, axis=1)
    return out


def indicators(prices: np.ndarray) -> np.ndarray:
    """Eight indicator channels per step, warm-up rows dropped.

    Channels: 1-step return; 10-step rolling mean and std of returns;
    RSI(14) rescaled to [-1, 1]; MACD line (EMA12 - EMA26); MACD signal
    (EMA9 of the line); 10-step momentum; Bollinger z-score over 20 steps.
    Degenerate 0/0 windows follow the 0 convention.
    """
    prices = np.asarray(prices, dtype=float)
    if prices.size < 40:
        raise ValueError(f"need at least 40 prices, got {prices.size}")

    n = prices.size
    returns = np.full(n, np.nan)
    returns[1:] = prices[1:] / prices[:-1] - 1.0

    ret_mean = np.full(n, np.nan)
    ret_std = np.full(n, np.nan)
    ret_mean[1:] = _rolling(returns[1:], 10, np.mean)
    ret_std[1:] = _rolling(returns[1:], 10, np.std)

    delta = np.full(n, np.nan)
    delta[1:] = prices[1:] - prices[:-1]
    gains = np.where(delta > 0, delta, 0.0)
    losses = np.where(delta < 0, -delta, 0.0)
    avg_gain = np.full(n, np.nan)
    avg_loss = np.full(n, np.nan)
    avg_gain[1:] = _rolling(gains[1:], 14, np.mean)
    avg_loss[1:] = _rolling(losses[1:], 14, np.mean)
    with np.errstate(invalid="ignore"):
        denom = avg_gain + avg_loss
        rsi_scaled = np.where(denom > 0, (avg_gain - avg_loss) / np.where(denom > 0, denom, 1.0), 0.0)
    rsi_scaled[np.isnan(avg_gain)] = np.nan

    macd = _ema(prices, 12) - _ema(prices, 26)
    signal = _ema(macd, 9)

    momentum = np.full(n, np.nan)
    momentum[10:] = prices[10:] - prices[:-10]

    boll_mean = _rolling(prices, 20, np.mean)
    boll_std = _rolling(prices, 20, np.std)
    with np.errstate(invalid="ignore"):
        boll_z = np.where(boll_std > 0, (prices - boll_mean) / np.where(boll_std > 0, boll_std, 1.0), 0.0)
    boll_z[np.isnan(boll_mean)] = np.nan

    mat = np.column_stack(
        [returns, ret_mean, ret_std, rsi_scaled, macd, signal, momentum, boll_z]
    )[WARMUP:]
    if not np.all(np.isfinite(mat)):
        raise ValueError("indicator matrix still contains non-finite entries after warm-up")
    return mat


def _simulate_prices(
    seed: int, n_steps: int, n_regimes: int
) -> tuple[np.ndarray, np.ndarray]:
    """Regime-switching AR(1) log-price increments; returns (prices, regime ids)."""
    rng = np.random.default_rng(seed)
    drifts = (-0.001, 0.0, 0.001)
    vols = (0.005, 0.01, 0.02)
    bounds = np.linspace(0, n_steps, n_regimes + 1).astype(int)
    increments = np.empty(n_steps)
    regimes = np.empty(n_steps, dtype=int)
    prev = 0.0
    for i in range(n_regimes):
        mu = drifts[i % 3]
        sigma = vols[i % 3]
        for t in range(bounds[i], bounds[i + 1]):
            prev = mu + 0.2 * (prev - mu) + sigma * rng.standard_normal()
            increments[t] = prev
            regimes[t] = i
    prices = 100.0 * np.exp(np.cumsum(increments))
    return prices, regimes


def _robust_fit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    med = np.median(x, axis=0)
    iqr = np.percentile(x, 75, axis=0) - np.percentile(x, 25, axis=0)
    iqr = np.where(iqr == 0.0, 1.0, iqr)
    return med, iqr


def _subsample_indices(n: int, limit: int) -> np.ndarray:
    if limit <= 0 or limit >= n:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, limit)).astype(int))


def tasks_from_prices(
    prices: np.ndarray, n_tasks: int = 8, max_samples_per_task: int = 0
) -> list[TaskDataset]:
    """Windowed indicator features over a price series, split into time-segment tasks."""
    prices = np.asarray(prices, dtype=float)
    mat = indicators(prices)
    n_rows = mat.shape[0]
    # decision point t needs a full window behind it and a next-step label
    first = WINDOW_STEPS - 1
    last = n_rows - 2
    points = np.arange(first, last + 1)
    features = np.stack([mat[t - WINDOW_STEPS + 1 : t + 1].ravel() for t in points])
    orig = points + WARMUP
    labels = (prices[orig + 1] > prices[orig]).astype(int)

    tasks = []
    for task_id, seg in enumerate(np.array_split(np.arange(points.size), n_tasks)):
        seg = seg[_subsample_indices(seg.size, max_samples_per_task)]
        x = features[seg]
        y = labels[seg]
        times = orig[seg]
        n = x.shape[0]
        n_train = int(np.floor(0.8 * n))
        n_val = int(np.floor(0.1 * n))
        sl_train = slice(0, n_train)
        sl_val = slice(n_train, n_train + n_val)
        sl_test = slice(n_train + n_val, n)
        med, iqr = _robust_fit(x[sl_train])
        scale = lambda a: (a - med) / iqr
        balance = float(y.mean())
        tasks.append(
            TaskDataset(
                task_id=task_id,
                x_train=scale(x[sl_train]),
                y_train=y[sl_train],
                x_val=scale(x[sl_val]),
                y_val=y[sl_val],
                x_test=scale(x[sl_test]),
                y_test=y[sl_test],
                source="financial",
                group=f"segment-{task_id}",
                flags={
                    "label_balance": balance,
                    "balance_ok": bool(0.3 <= balance <= 0.7),
                    "train_span": [int(times[sl_train][0]), int(times[sl_train][-1])],
                    "val_span": [int(times[sl_val][0]), int(times[sl_val][-1])],
                    "test_span": [int(times[sl_test][0]), int(times[sl_test][-1])],
                },
            )
        )
    return tasks


def gen_financial(
    seed: int,
    n_steps: int = 6000,
    n_regimes: int = 6,
    n_tasks: int = 8,
    max_samples_per_task: int = 0,
) -> list[TaskDataset]:
    """Simulate a regime-switching price series and build its task sequence."""
    prices, _ = _simulate_prices(seed, n_steps, n_regimes)
    return tasks_from_prices(prices, n_tasks=n_tasks, max_samples_per_task=max_samples_per_task)


def save_tasks(tasks: list[TaskDataset], path, seed: int | None = None):
    """Serialize tasks to a JSON cache (deterministic byte layout)."""
    payload = {
        "seed": seed,
        "tasks": [
            {
                "task_id": t.task_id,
                "source": t.source,
                "group": t.group,
                "flags": t.flags,
                "x_train": t.x_train.tolist(),
                "y_train": t.y_train.tolist(),
                "x_val": t.x_val.tolist(),
                "y_val": t.y_val.tolist(),
                "x_test": t.x_test.tolist(),
                "y_test": t.y_test.tolist(),
            }
            for t in tasks
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_tasks(path) -> list[TaskDataset]:
    payload = json.loads(Path(path).read_text())
    tasks = []
    for entry in payload["tasks"]:
        tasks.append(
            TaskDataset(
                task_id=entry["task_id"],
                x_train=np.array(entry["x_train"], dtype=float).reshape(len(entry["y_train"]), -1),
                y_train=np.array(entry["y_train"], dtype=int),
                x_val=np.array(entry["x_val"], dtype=float).reshape(len(entry["y_val"]), -1),
                y_val=np.array(entry["y_val"], dtype=int),
                x_test=np.array(entry["x_test"], dtype=float).reshape(len(entry["y_test"]), -1),
                y_test=np.array(entry["y_test"], dtype=int),
                source=entry["source"],
                group=entry["group"],
                flags=entry["flags"],
            )
        )
    return tasks
