"""Windowed covert-channel detectors: KNN and a Gini decision tree.

Traces are cut into fixed 100-sample windows, each min-max normalized to
[0,1] (a constant window maps to all 0.5). Windows from channel-carrying
traces are labeled 1, background-only windows 0. Both classifiers are
implemented from scratch so their tie-breaking is pinned down: KNN breaks
distance ties by lower training index and even-vote ties toward 0; the
tree splits on midpoints between consecutive sorted feature values and
labels tied leaves 0. Models serialize to a versioned plain-text format.
"""

import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels

WINDOW = 100
MODEL_MAGIC = "memchan-model v1"


@dataclass(frozen=True)
class FeatureWindow:
    values: np.ndarray
    label: int

    def __post_init__(self):
        if len(self.values) != WINDOW:
            raise ValueError(f"feature windows hold {WINDOW} values")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


class Dataset:
    """Normalized windows as a matrix plus labels, in insertion order."""

    def __init__(self, x, y):
        self.x = np.ascontiguousarray(x, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.int64)
        if self.x.ndim != 2 or self.x.shape[1] != WINDOW:
            raise ValueError(f"dataset features must be (n, {WINDOW})")
        if len(self.x) != len(self.y):
            raise ValueError("feature/label length mismatch")

    def __len__(self):
        return len(self.y)

    def class_counts(self):
        return int(np.sum(self.y == 0)), int(np.sum(self.y == 1))


def normalize_window(values):
    """Min-max scale one raw window to [0,1]; constant windows become 0.5."""
    arr = np.asarray(values, dtype=np.float64).reshape(1, -1)
    return kernels.minmax_windows(arr)[0]


def _trace_windows(trace, window, stride):
    values = np.asarray(trace.used_bytes, dtype=np.float64)
    if len(values) < window:
        return np.empty((0, window))
    starts = np.arange(0, len(values) - window + 1, stride)
    return np.stack([values[s : s + window] for s in starts])


def build_dataset(attack_traces, benign_traces, window=WINDOW, stride=None,
                  seed=0) -> Dataset:
    """Slice, normalize and label windows, then balance classes.

    Windows are non-overlapping by default (stride=window). The majority
    class is down-sampled to the minority size with a seeded shuffle so the
    result is balanced and reproducible. Short traces are skipped.
    """
    stride = window if stride is None else stride
    if stride <= 0 or window <= 0:
        raise ValueError("window and stride must be positive")
    groups = {0: [], 1: []}
    for label, traces in ((1, attack_traces), (0, benign_traces)):
        for trace in traces:
            raw = _trace_windows(trace, window, stride)
            if len(raw) == 0:
                warnings.warn(f"trace of {len(trace)} samples shorter than one "
                              f"window, skipped", stacklevel=2)
                continue
            groups[label].append(raw)
    parts = {lab: (np.concatenate(g) if g else np.empty((0, window)))
             for lab, g in groups.items()}
    n_keep = min(len(parts[0]), len(parts[1]))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    xs, ys = [], []
    for label in (0, 1):
        raw = parts[label]
        if len(raw) > n_keep:
            keep = np.sort(rng.permutation(len(raw))[:n_keep])
            raw = raw[keep]
        xs.append(kernels.minmax_windows(np.ascontiguousarray(raw)))
        ys.append(np.full(len(raw), label, dtype=np.int64))
    return Dataset(np.concatenate(xs), np.concatenate(ys))


def split_dataset(dataset: Dataset, eval_frac=0.2, seed=0):
    """Seeded shuffle split into (train, eval), stratified per class."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    train_idx, eval_idx = [], []
    for label in (0, 1):
        idx = np.nonzero(dataset.y == label)[0]
        idx = idx[rng.permutation(len(idx))]
        n_eval = int(round(eval_frac * len(idx)))
        eval_idx.append(idx[:n_eval])
        train_idx.append(idx[n_eval:])
    train_idx = np.sort(np.concatenate(train_idx))
    eval_idx = np.sort(np.concatenate(eval_idx))
    return (Dataset(dataset.x[train_idx], dataset.y[train_idx]),
            Dataset(dataset.x[eval_idx], dataset.y[eval_idx]))


@dataclass
class KnnModel:
    k: int
    x: np.ndarray
    y: np.ndarray

    kind = "knn"


@dataclass
class DtreeModel:
    """Flat node table: feature < 0 marks a leaf carrying `label`."""

    max_depth: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray

    kind = "dtree"


def knn_train(dataset: Dataset, k: int) -> KnnModel:
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if not 1 <= k <= len(dataset):
        raise ValueError(f"k must be in [1, {len(dataset)}]")
    return KnnModel(k, dataset.x.copy(), dataset.y.copy())


def knn_predict_many(model: KnnModel, windows):
    windows = np.ascontiguousarray(windows, dtype=np.float64)
    if windows.ndim == 1:
        windows = windows.reshape(1, -1)
    return kernels.knn_predict(model.x, model.y, windows, model.k)


def knn_predict(model: KnnModel, window) -> int:
    return int(knn_predict_many(model, np.asarray(window))[0])


def _gini_best_split(x, y, min_leaf=1):
    """Best (feature, threshold) minimizing weighted Gini, or None if pure.

    Candidate thresholds are midpoints between consecutive distinct sorted
    values; splits leaving fewer than min_leaf rows on a side are skipped.
    Ties keep the first (lowest feature, lowest threshold), so training is
    deterministic.
    """
    n = len(y)
    total_ones = int(np.sum(y))
    best = (np.inf, -1, 0.0)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y[order]
        cuts = np.nonzero(np.diff(xs) > 0)[0]
        cuts = cuts[(cuts + 1 >= min_leaf) & (n - cuts - 1 >= min_leaf)]
        if len(cuts) == 0:
            continue
        left_n = cuts + 1.0
        right_n = n - left_n
        left_ones = np.cumsum(ys)[cuts]
        right_ones = total_ones - left_ones
        p_l = left_ones / left_n
        p_r = right_ones / right_n
        weighted = (left_n * 2 * p_l * (1 - p_l) + right_n * 2 * p_r * (1 - p_r)) / n
        i = int(np.argmin(weighted))
        if weighted[i] < best[0] - 1e-12:
            thr = (xs[cuts[i]] + xs[cuts[i] + 1]) / 2.0
            best = (float(weighted[i]), f, thr)
    if best[1] < 0:
        return None
    return best[1], best[2]


def _majority(y) -> int:
    ones = int(np.sum(y))
    return 1 if 2 * ones > len(y) else 0


def dtree_train(dataset: Dataset, max_depth: int, min_leaf=20) -> DtreeModel:
    """Grow a Gini tree breadth-agnostic to max_depth.

    min_leaf keeps single-window noise from minting its own leaf, which
    otherwise inflates false positives on held-out data.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    feature, threshold, left, right, label = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        label.append(0)
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        y = dataset.y[idx]
        if depth >= max_depth or len(idx) < 2 * min_leaf or len(np.unique(y)) == 1:
            label[node] = _majority(y)
            return node
        split = _gini_best_split(dataset.x[idx], y, min_leaf)
        if split is None:
            label[node] = _majority(y)
            return node
        f, thr = split
        mask = dataset.x[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(dataset)), 0)
    return DtreeModel(max_depth,
                      np.asarray(feature, dtype=np.int64),
                      np.asarray(threshold, dtype=np.float64),
                      np.asarray(left, dtype=np.int64),
                      np.asarray(right, dtype=np.int64),
                      np.asarray(label, dtype=np.int64))


def dtree_predict_many(model: DtreeModel, windows):
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 1:
        windows = windows.reshape(1, -1)
    out = np.empty(len(windows), dtype=np.int64)
    for i, w in enumerate(windows):
        node = 0
        while model.feature[node] >= 0:
            if w[model.feature[node]] <= model.threshold[node]:
                node = model.left[node]
            else:
                node = model.right[node]
        out[i] = model.label[node]
    return out


def dtree_predict(model: DtreeModel, window) -> int:
    return int(dtree_predict_many(model, np.asarray(window))[0])


def predict_many(model, windows):
    if model.kind == "knn":
        return knn_predict_many(model, windows)
    return dtree_predict_many(model, windows)


@dataclass(frozen=True)
class EvalReport:
    accuracy_pct: float
    fn_pct: float
    fp_pct: float
    inference_us: float
    n_windows: int

    def __str__(self):
        return (f"accuracy {self.accuracy_pct:.2f}%  FN {self.fn_pct:.2f}%  "
                f"FP {self.fp_pct:.2f}%  {self.inference_us:.1f} us/window  "
                f"({self.n_windows} windows)")


def evaluate(model, dataset: Dataset) -> EvalReport:
    """Accuracy plus per-class error rates on a held-out set.

    FN% is the fraction of attack (label 1) windows predicted benign; FP%
    the fraction of benign windows predicted attack.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    t0 = time.perf_counter()
    pred = predict_many(model, dataset.x)
    elapsed_us = (time.perf_counter() - t0) * 1e6 / len(dataset)
    correct = pred == dataset.y
    attacks = dataset.y == 1
    benign = ~attacks
    fn = float(np.sum(attacks & (pred == 0))) / max(1, np.sum(attacks)) * 100
    fp = float(np.sum(benign & (pred == 1))) / max(1, np.sum(benign)) * 100
    return EvalReport(float(np.mean(correct)) * 100, fn, fp, elapsed_us,
                      len(dataset))


def monitor(sampler, model, duration_us, period_us=1000, every_ms=100,
            consecutive=3):
    """Classify a window every `every_ms`; alert on M consecutive positives.

    Returns a list of events {t_us, prediction, alert, mean, spread}. Gaps
    in the sampled trace (missed deadlines) skip the affected windows and
    are reported in the trailing summary event.
    """
    trace = sampler.run(duration_us, period_us)
    values = np.asarray(trace.used_bytes, dtype=np.float64)
    t = trace.t_us
    step = max(1, int(round(every_ms * 1000 / period_us)))
    events = []
    streak = 0
    skipped = 0
    for start in range(0, len(values) - WINDOW + 1, step):
        span = t[start + WINDOW - 1] - t[start]
        if span > (WINDOW + 1) * period_us:
            skipped += 1
            continue
        w = normalize_window(values[start : start + WINDOW])
        pred = int(predict_many(model, w.reshape(1, -1))[0])
        streak = streak + 1 if pred == 1 else 0
        events.append({
            "t_us": int(t[start + WINDOW - 1]),
            "prediction": pred,
            "alert": streak >= consecutive,
            "mean": float(np.mean(values[start : start + WINDOW])),
            "spread": float(np.ptp(values[start : start + WINDOW])),
        })
    if skipped:
        warnings.warn(f"{skipped} monitor windows skipped over trace gaps",
                      stacklevel=2)
    return events


def _format_floats(row):
    return ",".join(repr(float(v)) for v in row)


def save_dataset(dataset: Dataset, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(f"f{i}" for i in range(WINDOW)) + ",label\n")
        for row, lab in zip(dataset.x, dataset.y):
            fh.write(_format_floats(row) + f",{int(lab)}\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header.startswith("f0,"):
            raise ValueError("not a dataset file")
        xs, ys = [], []
        for line in fh:
            parts = line.strip().split(",")
            xs.append([float(v) for v in parts[:-1]])
            ys.append(int(parts[-1]))
    return Dataset(np.asarray(xs), np.asarray(ys))


def save_model(model, path):
    """Versioned plain-text model file; floats stored with full precision."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(MODEL_MAGIC + "\n")
        fh.write(f"kind = {model.kind}\n")
        if model.kind == "knn":
            fh.write(f"k = {model.k}\n")
            fh.write(f"rows = {len(model.y)}\n")
            for row, lab in zip(model.x, model.y):
                fh.write(f"{int(lab)}," + _format_floats(row) + "\n")
        else:
            fh.write(f"max_depth = {model.max_depth}\n")
            fh.write(f"nodes = {len(model.feature)}\n")
            for i in range(len(model.feature)):
                fh.write(f"{model.feature[i]},{repr(float(model.threshold[i]))},"
                         f"{model.left[i]},{model.right[i]},{model.label[i]}\n")


def load_model(path):
    with open(path, "r", encoding="ascii") as fh:
        if fh.readline().strip() != MODEL_MAGIC:
            raise ValueError(f"{path} is not a model file")
        header = {}
        for _ in range(3):
            key, value = fh.readline().split("=", 1)
            header[key.strip()] = value.strip()
        if header["kind"] == "knn":
            xs, ys = [], []
            for line in fh:
                parts = line.strip().split(",")
                ys.append(int(parts[0]))
                xs.append([float(v) for v in parts[1:]])
            return KnnModel(int(header["k"]), np.asarray(xs),
                            np.asarray(ys, dtype=np.int64))
        if header["kind"] == "dtree":
            rows = [line.strip().split(",") for line in fh if line.strip()]
            return DtreeModel(
                int(header["max_depth"]),
                np.asarray([int(r[0]) for r in rows], dtype=np.int64),
                np.asarray([float(r[1]) for r in rows], dtype=np.float64),
                np.asarray([int(r[2]) for r in rows], dtype=np.int64),
                np.asarray([int(r[3]) for r in rows], dtype=np.int64),
                np.asarray([int(r[4]) for r in rows], dtype=np.int64),
            )
        raise ValueError(f"unknown model kind {header['kind']!r}")
