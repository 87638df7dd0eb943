"""End-to-end recipes: generate graphs, label them, prepare splits, train, sweep.

All randomness derives from one top-level seed that is fanned out with
``numpy.random.SeedSequence`` so results do not depend on worker layout.
"""

from __future__ import annotations

import numpy as np

from .dataset import (
    CLASS_PAIRS,
    Dataset,
    augment_by_shuffle,
    balance,
    label_graphs,
    prune_by_diff,
    split,
)
from .graphs import Graph, enumerate_cycle_graphs, enumerate_line_graphs, random_graph
from .neuralnet import TrainConfig, build_model, evaluate, train
from .neuralnet.training import pad_batch
from .walksim import SimConfig

__all__ = [
    "fan_out",
    "generate_graphs",
    "labeled_graphs",
    "prepare",
    "enumerated_arrays",
    "run_sweep",
]

DEFAULT_P_EDGE = 0.05


def fan_out(seed: int, count: int) -> list[int]:
    """``count`` independent child seeds of ``seed``."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def _random_task(args):
    n, p_edge, s = args
    return random_graph(n, p_edge, s)


def generate_graphs(family: str, n: int, count: int | None = None, seed: int = 0,
                    p_edge: float = DEFAULT_P_EDGE, jobs: int = 1) -> tuple[list[Graph], list[dict]]:
    """Graphs plus per-graph metadata (``graph_id`` and, for random graphs, ``seed``)."""
    if family == "line":
        graphs = enumerate_line_graphs(n)
        return graphs, [{"graph_id": k} for k in range(len(graphs))]
    if family == "cycle":
        graphs = enumerate_cycle_graphs(n)
        return graphs, [{"graph_id": k} for k in range(len(graphs))]
    if family != "random":
        raise ValueError(f"unknown family {family!r}")
    if count is None or count < 1:
        raise ValueError("random graphs need a positive count")
    seeds = fan_out(seed, count)
    tasks = [(n, p_edge, s) for s in seeds]
    if jobs == 1:
        graphs = [_random_task(t) for t in tasks]
    else:
        from joblib import Parallel, delayed

        graphs = Parallel(n_jobs=jobs)(delayed(_random_task)(t) for t in tasks)
    return graphs, [{"graph_id": k, "seed": s} for k, s in enumerate(seeds)]


def labeled_graphs(family: str, n: int, pair: str, count: int | None = None, seed: int = 0,
                   cfg: SimConfig | None = None, p_edge: float = DEFAULT_P_EDGE, jobs: int = 1):
    """Generate and label in one go; returns ``(dataset, dropped, failures)``."""
    graphs, metas = generate_graphs(family, n, count, seed, p_edge, jobs)
    ds, dropped, failures = label_graphs(graphs, pair, cfg, metas, jobs)
    ds.header.update({"family": family, "n": n, "seed": seed, "count": len(graphs), "p_edge": p_edge})
    return ds, dropped, failures


def prepare(ds: Dataset, seed: int = 0, train_frac: float = 0.8, prune: tuple[str, int] | None = None,
            augment: int = 0, prune_scope: str = "all") -> Dataset:
    """Balance, then prune / augment / split.

    With ``prune_scope="all"`` the order is balance, prune, augment, split.
    With ``"train"`` the balanced set is split first and only the training
    part is pruned and augmented, leaving the test set untouched.
    """
    s_bal, s_aug, s_split = fan_out(seed, 3)
    ds = balance(ds, s_bal)
    if prune_scope == "all":
        if prune is not None:
            ds = prune_by_diff(ds, *prune)
        ds = augment_by_shuffle(ds, augment, s_aug)
        return split(ds, train_frac, s_split)
    if prune_scope != "train":
        raise ValueError(f"prune_scope must be 'all' or 'train', got {prune_scope!r}")
    ds = split(ds, train_frac, s_split)
    tr, te = ds.train(), ds.test()
    if prune is not None:
        tr = prune_by_diff(tr, *prune)
    tr = augment_by_shuffle(tr, augment, s_aug)
    merged = Dataset(tr.samples + te.samples, ds.class_pair, header=dict(ds.header))
    merged.train_idx = list(range(len(tr)))
    merged.test_idx = list(range(len(tr), len(merged)))
    return merged


def enumerated_arrays(family: str, n: int, pair: str = "classical-vs-quantum", cfg: SimConfig | None = None,
                      copies: int = 0, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """All line/cycle placements at size n, labeled, plus ``copies`` shuffled variants each."""
    if pair not in CLASS_PAIRS:
        raise ValueError(f"unknown pair {pair!r}")
    ds, _, failures = labeled_graphs(family, n, pair, cfg=cfg)
    if failures:
        raise RuntimeError(f"simulation failed for {len(failures)} {family} graph(s): {failures[0][1]}")
    ds = augment_by_shuffle(ds, copies, seed)
    return ds.arrays()


def run_sweep(arch: str, train_xy, test_sets: dict, cfg: TrainConfig, input_dim: int | None = None) -> dict:
    """Train once on padded inputs and record per-epoch accuracy/loss on every test size.

    Returns ``{"curves": {size: {"test_acc": [...], "test_loss": [...]}}, "final": {size: EvalReport}}``.
    """
    big = input_dim or max(test_sets)
    if max(test_sets) > big:
        raise ValueError(f"largest test size {max(test_sets)} exceeds model input {big}")
    padded = {m: (pad_batch(x, big), y) for m, (x, y) in test_sets.items()}
    curves = {m: {"test_acc": [], "test_loss": []} for m in padded}

    def record(epoch, model):
        for m, (x, y) in padded.items():
            rep = evaluate(model, x, y)
            curves[m]["test_acc"].append(rep.accuracy)
            curves[m]["test_loss"].append(rep.loss)

    model = build_model(arch, big, cfg.rng_seed)
    train(model, *train_xy, cfg, callback=record)
    final = {m: evaluate(model, x, y) for m, (x, y) in padded.items()}
    return {"curves": curves, "final": final, "model": model}
