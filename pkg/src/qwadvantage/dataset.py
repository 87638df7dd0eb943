"""Labeled graph datasets: labeling by hitting-time comparison, balancing,
pruning, shuffle augmentation, stratified splitting and JSON-lines I/O."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import Graph, pad_adjacency, shuffle_labels
from .walksim import INF, SimConfig, walker_hitting_steps

__all__ = [
    "CLASS_PAIRS",
    "CLASS_NAMES",
    "DatasetError",
    "LabeledSample",
    "Dataset",
    "label_sample",
    "label_graphs",
    "balance",
    "augment_by_shuffle",
    "prune_by_diff",
    "split",
    "diff_histogram",
    "write_histogram_csv",
]

CLASS_PAIRS = {
    "classical-vs-quantum": ("ctrw", "ctqw"),
    "classical-vs-quantumT": ("ctrw", "ctqw_t"),
    "quantum-vs-quantumT": ("ctqw", "ctqw_t"),
}
CLASS_NAMES = {
    "classical-vs-quantum": ("ClassicalFaster", "QuantumFaster"),
    "classical-vs-quantumT": ("ClassicalFaster", "QuantumTFaster"),
    "quantum-vs-quantumT": ("QuantumFaster", "QuantumTFaster"),
}


class DatasetError(ValueError):
    pass


def _enc(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return int(x)


def _dec(x):
    if x == "inf":
        return INF
    if x == "-inf":
        return -INF
    return int(x)


@dataclass
class LabeledSample:
    adjacency: np.ndarray
    label: int
    tau_a: float
    tau_b: float
    step_diff: float
    meta: dict = field(default_factory=dict)

    def graph(self) -> Graph:
        n = self.meta.get("n", self.adjacency.shape[0])
        return Graph.from_adjacency(self.adjacency[:n, :n], self.meta.get("family", "random"))

    def to_dict(self) -> dict:
        return {
            "adj": self.adjacency.tolist(),
            "label": int(self.label),
            "tau_a_steps": _enc(self.tau_a),
            "tau_b_steps": _enc(self.tau_b),
            "step_diff": _enc(self.step_diff),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LabeledSample:
        tau_a, tau_b = _dec(d["tau_a_steps"]), _dec(d["tau_b_steps"])
        diff = _dec(d["step_diff"]) if "step_diff" in d else _step_diff(tau_a, tau_b)
        return cls(np.asarray(d["adj"], dtype=np.int64), int(d["label"]), tau_a, tau_b, diff, d.get("meta", {}))

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return (
            np.array_equal(self.adjacency, other.adjacency)
            and self.adjacency.shape == other.adjacency.shape
            and (self.label, self.tau_a, self.tau_b, self.step_diff, self.meta)
            == (other.label, other.tau_a, other.tau_b, other.step_diff, other.meta)
        )


@dataclass
class Dataset:
    samples: list[LabeledSample]
    class_pair: str = "classical-vs-quantum"
    train_idx: list[int] | None = None
    test_idx: list[int] | None = None
    header: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def class_counts(self) -> tuple[int, int]:
        y = self.labels
        return int((y == 0).sum()), int((y == 1).sum())

    def subset(self, idx) -> Dataset:
        return Dataset([self.samples[i] for i in idx], self.class_pair, header=dict(self.header))

    def train(self) -> Dataset:
        if self.train_idx is None:
            raise DatasetError("dataset has not been split")
        return self.subset(self.train_idx)

    def test(self) -> Dataset:
        if self.test_idx is None:
            raise DatasetError("dataset has not been split")
        return self.subset(self.test_idx)

    def arrays(self, pad_to: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Stacked float adjacency matrices (optionally zero-padded) and labels."""
        mats = [s.adjacency if pad_to is None else pad_adjacency(s.adjacency, pad_to) for s in self.samples]
        if not mats:
            size = pad_to or 0
            return np.zeros((0, size, size)), np.zeros(0, dtype=np.int64)
        return np.stack(mats).astype(float), self.labels

    # -- I/O ----------------------------------------------------------------

    def write_jsonl(self, path) -> None:
        header = {"class_pair": self.class_pair, **self.header}
        if self.train_idx is not None:
            header["train_idx"] = list(self.train_idx)
            header["test_idx"] = list(self.test_idx)
        with Path(path).open("w") as fh:
            fh.write(json.dumps({"header": header}) + "\n")
            for s in self.samples:
                fh.write(json.dumps(s.to_dict()) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> Dataset:
        header, samples = {}, []
        with Path(path).open() as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "header" in rec:
                    header = rec["header"]
                else:
                    samples.append(LabeledSample.from_dict(rec))
        pair = header.pop("class_pair", "classical-vs-quantum")
        train_idx, test_idx = header.pop("train_idx", None), header.pop("test_idx", None)
        return cls(samples, pair, train_idx, test_idx, header)

    def write_csv(self, path) -> None:
        """Flattened adjacency features followed by the label, one row per sample."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            if self.samples:
                dim = self.samples[0].adjacency.size
                w.writerow([f"a{k}" for k in range(dim)] + ["label"])
            for s in self.samples:
                w.writerow(s.adjacency.ravel().tolist() + [s.label])


# -- labeling -----------------------------------------------------------------


def _step_diff(tau_a: float, tau_b: float) -> float:
    """tau_a - tau_b; positive means walker a is slower. Two INF count as a tie."""
    if tau_a == INF and tau_b == INF:
        return 0
    if tau_a == INF:
        return INF
    if tau_b == INF:
        return -INF
    return int(tau_a) - int(tau_b)


def label_sample(
    g: Graph,
    walker_a: str,
    walker_b: str,
    cfg: SimConfig | None = None,
    meta: dict | None = None,
) -> LabeledSample | None:
    """Simulate both walkers and label by whichever hits strictly first.

    Label 0 means walker a is faster, 1 means walker b. Ties (including two
    INF) go to a when a is the classical walker; for two quantum walkers
    ties have no ground truth and the graph is dropped (``None``).
    """
    cfg = cfg or SimConfig()
    tau_a = walker_hitting_steps(g, walker_a, cfg)
    tau_b = walker_hitting_steps(g, walker_b, cfg)
    diff = _step_diff(tau_a, tau_b)
    if diff > 0:
        label = 1
    elif diff < 0:
        label = 0
    elif walker_a == "ctrw":
        label = 0
    else:
        return None
    info = {"family": g.family, "n": g.n, "p_th": cfg.threshold(g.n), "gamma": cfg.gamma, "dt": cfg.dt}
    info.update(meta or {})
    return LabeledSample(g.adjacency(), label, tau_a, tau_b, diff, info)


def _label_task(args):
    g, pair, cfg, meta = args
    a, b = CLASS_PAIRS[pair]
    try:
        return label_sample(g, a, b, cfg, meta), None
    except Exception as exc:  # noqa: BLE001 - one bad graph must not stop a batch
        return None, f"{type(exc).__name__}: {exc}"


def label_graphs(graphs, pair: str, cfg: SimConfig | None = None, metas=None, jobs: int = 1):
    """Label many graphs, optionally in a process pool.

    Returns ``(dataset, dropped, failures)`` where ``failures`` lists
    ``(index, message)`` for graphs whose simulation raised. Output order
    follows input order regardless of ``jobs``.
    """
    if pair not in CLASS_PAIRS:
        raise DatasetError(f"unknown class pair {pair!r}; expected one of {sorted(CLASS_PAIRS)}")
    cfg = cfg or SimConfig()
    graphs = list(graphs)
    metas = list(metas) if metas is not None else [{"graph_id": k} for k in range(len(graphs))]
    tasks = [(g, pair, cfg, m) for g, m in zip(graphs, metas)]
    if jobs == 1:
        results = [_label_task(t) for t in tasks]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(delayed(_label_task)(t) for t in tasks)
    samples, failures, dropped = [], [], 0
    for k, (sample, err) in enumerate(results):
        if err is not None:
            failures.append((k, err))
        elif sample is None:
            dropped += 1
        else:
            samples.append(sample)
    header = {"sim": cfg.to_dict()}
    return Dataset(samples, pair, header=header), dropped, failures


# -- balancing, augmentation, pruning, splitting ----------------------------------


def balance(ds: Dataset, rng_seed: int) -> Dataset:
    """Downsample the majority class to the minority count."""
    y = ds.labels
    idx0, idx1 = np.flatnonzero(y == 0), np.flatnonzero(y == 1)
    if idx0.size == 0 or idx1.size == 0:
        raise DatasetError(f"cannot balance: class counts are {idx0.size} and {idx1.size}")
    if idx0.size == idx1.size:
        return Dataset(list(ds.samples), ds.class_pair, header=dict(ds.header))
    rng = np.random.default_rng(rng_seed)
    m = min(idx0.size, idx1.size)
    keep = np.concatenate([rng.choice(idx0, m, replace=False), rng.choice(idx1, m, replace=False)])
    keep = rng.permutation(keep)
    return ds.subset(keep.tolist())


def augment_by_shuffle(ds: Dataset, copies: int, rng_seed: int) -> Dataset:
    """Append ``copies`` node-relabeled variants of every sample.

    Nodes 0 and 1 stay fixed, so hitting times and labels carry over.
    Copies share the source sample's ``graph_id``.
    """
    if copies < 0:
        raise DatasetError(f"copies must be >= 0, got {copies}")
    if copies == 0:
        return Dataset(list(ds.samples), ds.class_pair, header=dict(ds.header))
    seeds = np.random.SeedSequence(rng_seed).generate_state(len(ds) * copies)
    out = list(ds.samples)
    for i, s in enumerate(ds.samples):
        g = s.graph()
        size = s.adjacency.shape[0]
        for c in range(copies):
            a = shuffle_labels(g, int(seeds[i * copies + c])).adjacency()
            if size > g.n:
                a = pad_adjacency(a, size)
            meta = {**s.meta, "copy": c + 1}
            out.append(LabeledSample(a, s.label, s.tau_a, s.tau_b, s.step_diff, meta))
    return Dataset(out, ds.class_pair, header=dict(ds.header))


def prune_by_diff(ds: Dataset, mode: str, threshold_steps: int) -> Dataset:
    """Drop samples by hitting-step gap.

    ``"drop-minor"`` removes ``|diff| <= threshold``; ``"drop-major"``
    removes ``|diff| >= threshold`` (INF always counts as major).
    """
    if threshold_steps < 0:
        raise DatasetError(f"threshold_steps must be >= 0, got {threshold_steps}")
    mode = mode.lower().replace("_", "-")
    if mode in ("drop-minor", "dropminor"):
        keep = [k for k, s in enumerate(ds.samples) if abs(s.step_diff) > threshold_steps]
    elif mode in ("drop-major", "dropmajor"):
        keep = [k for k, s in enumerate(ds.samples) if abs(s.step_diff) < threshold_steps]
    else:
        raise DatasetError(f"unknown prune mode {mode!r}")
    return ds.subset(keep)


def split(ds: Dataset, train_frac: float, rng_seed: int) -> Dataset:
    """Stratified random train/test split.

    Samples sharing ``meta["graph_id"]`` (augmented copies) always land on
    the same side. Within each class, ``round(train_frac * groups)`` groups
    go to training.
    """
    if not 0.0 < train_frac < 1.0:
        raise DatasetError(f"train_frac must lie in (0, 1), got {train_frac}")
    rng = np.random.default_rng(rng_seed)
    train, test = [], []
    for cls in (0, 1):
        groups: dict = {}
        for k, s in enumerate(ds.samples):
            if s.label == cls:
                groups.setdefault(s.meta.get("graph_id", ("sample", k)), []).append(k)
        if len(groups) < 2:
            raise DatasetError(f"class {cls} has {len(groups)} distinct graph(s); need at least 2 to split")
        keys = list(groups)
        order = rng.permutation(len(keys))
        n_train = min(max(1, round(train_frac * len(keys))), len(keys) - 1)
        for rank, gi in enumerate(order):
            (train if rank < n_train else test).extend(groups[keys[gi]])
    return Dataset(list(ds.samples), ds.class_pair, sorted(train), sorted(test), dict(ds.header))


# -- histogram ----------------------------------------------------------------


def diff_histogram(ds: Dataset, bin_width: int) -> list[tuple[float, float, int]]:
    """Counts of ``step_diff`` in bins ``[lo, lo + bin_width)``.

    INF differences go to overflow rows ``(inf, inf, count)`` and
    ``(-inf, -inf, count)``. Only occupied bins are returned, sorted.
    """
    if bin_width < 1:
        raise DatasetError(f"bin_width must be >= 1, got {bin_width}")
    counts: dict[float, int] = {}
    for s in ds.samples:
        d = s.step_diff
        key = d if math.isinf(d) else (int(d) // bin_width) * bin_width
        counts[key] = counts.get(key, 0) + 1
    rows = []
    for lo in sorted(counts):
        hi = lo if math.isinf(lo) else lo + bin_width
        rows.append((lo, hi, counts[lo]))
    return rows


def write_histogram_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in rows:
            w.writerow([_enc(lo) if math.isinf(lo) else lo, _enc(hi) if math.isinf(hi) else hi, c])

