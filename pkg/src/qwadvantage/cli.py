"""Command-line front end: ``qwadv <command> [options]``.

Option values resolve as built-in defaults < ``--config FILE`` (key = value
lines) < command-line flags. Every command writes a run manifest next to its
outputs together with a ``.config`` file that re-runs it exactly. Relative
output paths are placed under ``$QWADV_OUTPUT_DIR`` when that is set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import export_projection, linear_separability, pca
from .dataset import CLASS_PAIRS, Dataset, DatasetError, diff_histogram, label_graphs, write_histogram_csv
from .experiments import fan_out, generate_graphs, labeled_graphs, prepare, run_sweep, enumerated_arrays
from .graphs import Graph, GraphError
from .neuralnet import (
    ARCHS,
    DivergenceError,
    ShapeError,
    TrainConfig,
    evaluate,
    load_model,
    save_model,
    summarize,
)
from .neuralnet.training import repeat_training
from .walksim import (
    InitialState,
    SimConfig,
    build_classical_operator,
    build_quantum_setup,
    evolve_classical,
    evolve_quantum,
)

log = logging.getLogger("qwadv")

OUTPUT_ENV = "QWADV_OUTPUT_DIR"

SIM_DEFAULTS = {"gamma": 1.0, "dt": 0.01, "t_max": 1000.0, "p_th": None, "method": "effective"}
TRAIN_DEFAULTS = {"lr": 0.001, "batch_size": 10, "epochs": 50, "optimizer": "adam", "repeats": 1}

DEFAULTS = {
    "generate": {"family": None, "nodes": None, "count": None, "seed": 0, "p_edge": 0.05, "jobs": 1,
                 "out": "graphs.txt"},
    "simulate": {"input": None, "pair": "classical-vs-quantum", "trajectories": None, "jobs": 1,
                 "out": "samples.jsonl", **SIM_DEFAULTS},
    "dataset": {"input": None, "seed": 0, "split": 0.8, "drop_minor": None, "drop_major": None,
                "augment": 0, "prune_scope": "all", "histogram_bin": 50, "out_dir": "dataset"},
    "train": {"train": None, "test": None, "arch": "fc", "nodes": None, "family": "random", "count": 5000,
              "pair": "classical-vs-quantum", "seed": 0, "p_edge": 0.05, "jobs": 1, "out_dir": "train",
              **TRAIN_DEFAULTS, **SIM_DEFAULTS},
    "evaluate": {"model": None, "test": None, "out": "report.json"},
    "sweep": {"arch": "cqcnn", "family": "cycle", "train_size": 6, "test_sizes": "6,7,8,9,10",
              "pair": "classical-vs-quantum", "augment": 20, "seed": 0, "jobs": 1, "out_dir": "sweep",
              **TRAIN_DEFAULTS, **SIM_DEFAULTS},
    "pca": {"input": None, "k": 2, "nodes": 20, "family": "random", "count": 5000,
            "pair": "classical-vs-quantum", "seed": 0, "p_edge": 0.05, "jobs": 1, "out_dir": "pca",
            **SIM_DEFAULTS},
}
REQUIRED = {
    "generate": ("family", "nodes"),
    "simulate": ("input",),
    "dataset": ("input",),
    "evaluate": ("model", "test"),
}


class UsageError(Exception):
    pass


# -- config handling --------------------------------------------------------------


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Values are JSON-decoded when possible."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def write_config(cfg: dict, path) -> None:
    lines = [f"{k} = {json.dumps(v)}" for k, v in sorted(cfg.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def resolve(command: str, ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    if getattr(ns, "config", None):
        from_file = read_config(ns.config)
        unknown = set(from_file) - set(cfg)
        if unknown:
            raise UsageError(f"unknown key(s) in config for {command}: {sorted(unknown)}")
        cfg.update(from_file)
    cfg.update(flags)
    for key in REQUIRED.get(command, ()):
        if cfg.get(key) is None:
            raise UsageError(f"{command}: --{key.replace('_', '-')} is required")
    return cfg


def out_path(p) -> Path:
    p = Path(p)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(command: str, cfg: dict, inputs, outputs, target: Path, extra: dict | None = None) -> None:
    """``<target>.manifest.json`` plus ``<target>.config`` for an exact re-run."""
    import scipy

    manifest = {
        "command": command,
        "config": cfg,
        "versions": {
            "qwadvantage": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).exists()},
        "outputs": [str(p) for p in outputs],
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **(extra or {}),
    }
    target = Path(target)
    stem = target / command if target.is_dir() else target
    Path(f"{stem}.manifest.json").write_text(json.dumps(manifest, indent=2))
    write_config(cfg, f"{stem}.config")


def _sim_config(cfg: dict) -> SimConfig:
    return SimConfig(cfg["gamma"], cfg["dt"], cfg["t_max"], cfg["p_th"], cfg["method"])


def _check_positive(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) is not None and cfg[k] <= 0:
            raise UsageError(f"--{k.replace('_', '-')} must be positive, got {cfg[k]}")


# -- commands -----------------------------------------------------------------


def cmd_generate(cfg: dict) -> int:
    family, n = cfg["family"], cfg["nodes"]
    if family not in ("line", "cycle", "random"):
        raise UsageError(f"--family must be line, cycle or random, got {family!r}")
    if n < 3:
        raise UsageError(f"--nodes must be at least 3, got {n}")
    if family == "random" and not cfg["count"]:
        raise UsageError("--family random needs --count")
    if family == "random" and not 0 < cfg["p_edge"] < 1:
        raise UsageError(f"--p-edge must lie in (0, 1), got {cfg['p_edge']}")
    graphs, _ = generate_graphs(family, n, cfg["count"], cfg["seed"], cfg["p_edge"], cfg["jobs"])
    out = out_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(g.to_record() + "\n" for g in graphs))
    write_manifest("generate", cfg, [], [out], out, {"records": len(graphs)})
    print(f"wrote {len(graphs)} {family} graph records to {out}")
    return 0


def _read_graphs(path) -> list[Graph]:
    graphs = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        graphs.append(Graph.from_json(line) if line.startswith("{") else Graph.from_record(line))
    return graphs


def cmd_simulate(cfg: dict) -> int:
    if cfg["pair"] not in CLASS_PAIRS:
        raise UsageError(f"--pair must be one of {sorted(CLASS_PAIRS)}")
    _check_positive(cfg, "dt", "t_max", "gamma")
    graphs = _read_graphs(cfg["input"])
    sim = _sim_config(cfg)
    metas = [{"graph_id": k} for k in range(len(graphs))]
    ds, dropped, failures = label_graphs(graphs, cfg["pair"], sim, metas, cfg["jobs"])
    for k, msg in failures:
        log.error("graph %d failed: %s", k, msg)
    ds.header.update({"source": str(cfg["input"])})
    out = out_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.write_jsonl(out)
    outputs = [out]
    if cfg["trajectories"]:
        outputs += _write_trajectories(graphs, cfg["pair"], sim, out_path(cfg["trajectories"]))
    summary = {"graphs": len(graphs), "labeled": len(ds), "dropped": dropped, "failed": len(failures),
               "class_counts": list(ds.class_counts())}
    write_manifest("simulate", cfg, [cfg["input"]], outputs, out, {"summary": summary})
    print(json.dumps(summary))
    return 0


def _write_trajectories(graphs, pair, sim: SimConfig, folder: Path) -> list[Path]:
    folder.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, g in enumerate(graphs):
        p_th = sim.threshold(g.n)
        for walker in CLASS_PAIRS[pair]:
            if walker == "ctrw":
                res = evolve_classical(build_classical_operator(g), sim.t_max, sim.dt, stop_at=p_th)
            else:
                setup = build_quantum_setup(g, sim.gamma, superposition=walker == "ctqw_t")
                init = InitialState("tstate" if walker == "ctqw_t" else "node0")
                res = evolve_quantum(setup, init, sim.t_max, sim.dt, sim.method, stop_at=p_th)
            path = folder / f"graph{k:05d}_{walker}.csv"
            res.with_threshold(p_th).write_csv(path)
            paths.append(path)
    return paths


def cmd_dataset(cfg: dict) -> int:
    ds = Dataset.read_jsonl(cfg["input"])
    if cfg["drop_minor"] is not None and cfg["drop_major"] is not None:
        raise UsageError("use at most one of --drop-minor and --drop-major")
    prune = None
    if cfg["drop_minor"] is not None:
        prune = ("drop-minor", int(cfg["drop_minor"]))
    elif cfg["drop_major"] is not None:
        prune = ("drop-major", int(cfg["drop_major"]))
    if not 0 < cfg["split"] < 1:
        raise UsageError(f"--split must lie in (0, 1), got {cfg['split']}")
    prepared = prepare(ds, cfg["seed"], cfg["split"], prune, cfg["augment"], cfg["prune_scope"])
    folder = out_path(cfg["out_dir"])
    folder.mkdir(parents=True, exist_ok=True)
    tr, te = prepared.train(), prepared.test()
    tr.write_jsonl(folder / "train.jsonl")
    te.write_jsonl(folder / "test.jsonl")
    hist_path = folder / "step_diff_histogram.csv"
    write_histogram_csv(diff_histogram(ds, cfg["histogram_bin"]), hist_path)
    counts = {
        "input": len(ds),
        "input_classes": list(ds.class_counts()),
        "train": len(tr),
        "test": len(te),
        "train_classes": list(tr.class_counts()),
        "test_classes": list(te.class_counts()),
    }
    (folder / "counts.json").write_text(json.dumps(counts, indent=2))
    outputs = [folder / "train.jsonl", folder / "test.jsonl", hist_path, folder / "counts.json"]
    write_manifest("dataset", cfg, [cfg["input"]], outputs, folder, {"counts": counts})
    print(json.dumps(counts))
    return 0


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(cfg["lr"], cfg["batch_size"], cfg["epochs"], cfg["optimizer"], seed)


def _write_summary(folder: Path, reports, name: str = "report") -> list[Path]:
    summary = summarize(reports)
    (folder / f"{name}.json").write_text(json.dumps({"summary": summary, "runs": [r.to_dict() for r in reports]},
                                                   indent=2))
    rows = ["epoch,test_acc,test_acc_std,test_loss,test_loss_std"]
    if "test_acc" in summary:
        acc, loss = summary["test_acc"], summary["test_loss"]
        for e in range(len(acc["mean"])):
            rows.append(f"{e + 1},{acc['mean'][e]},{acc['std'][e]},{loss['mean'][e]},{loss['std'][e]}")
    (folder / f"{name}_curves.csv").write_text("\n".join(rows) + "\n")
    return [folder / f"{name}.json", folder / f"{name}_curves.csv"]


def cmd_train(cfg: dict) -> int:
    if cfg["arch"] not in ARCHS:
        raise UsageError(f"--arch must be one of {ARCHS}")
    folder = out_path(cfg["out_dir"])
    folder.mkdir(parents=True, exist_ok=True)
    inputs = []
    if cfg["train"]:
        tr = Dataset.read_jsonl(cfg["train"])
        inputs.append(cfg["train"])
        if cfg["test"]:
            te = Dataset.read_jsonl(cfg["test"])
            inputs.append(cfg["test"])
        elif tr.test_idx is not None:
            tr, te = tr.train(), tr.test()
        else:
            raise UsageError("--train without --test needs a dataset file that carries a split")
    else:
        if cfg["nodes"] is None:
            raise UsageError("train needs --train FILE or --nodes N to build a dataset")
        s_data, _ = fan_out(cfg["seed"], 2)
        ds, _, failures = labeled_graphs(cfg["family"], cfg["nodes"], cfg["pair"], cfg["count"], s_data,
                                         _sim_config(cfg), cfg["p_edge"], cfg["jobs"])
        if failures:
            log.error("%d graph simulations failed", len(failures))
        prepared = prepare(ds, cfg["seed"])
        tr, te = prepared.train(), prepared.test()
        tr.write_jsonl(folder / "train.jsonl")
        te.write_jsonl(folder / "test.jsonl")
    size = max(s.adjacency.shape[0] for s in tr.samples + te.samples)
    size = max(size, cfg["nodes"] or 0)
    train_xy, test_xy = tr.arrays(size), te.arrays(size)
    base = _train_config(cfg, cfg["seed"])
    reports, models = repeat_training(cfg["arch"], size, train_xy, test_xy, base, cfg["repeats"], cfg["jobs"],
                                      return_models=True)
    outputs = _write_summary(folder, reports)
    # the first run's weights become the checkpoint
    model = models[0]
    model.meta.update({"train_config": vars(base), "class_pair": tr.class_pair})
    save_model(model, folder / "model.json")
    outputs.append(folder / "model.json")
    write_manifest("train", cfg, inputs, outputs, folder)
    acc = summarize(reports)["accuracy"]
    print(f"{cfg['arch']}: test accuracy {acc['mean']:.4f} +- {acc['std']:.4f} over {len(reports)} run(s)")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    model = load_model(cfg["model"])
    te = Dataset.read_jsonl(cfg["test"])
    if te.test_idx is not None:
        te = te.test()
    rep = evaluate(model, *te.arrays(model.input_dim))
    out = out_path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    rep.write_json(out)
    write_manifest("evaluate", cfg, [cfg["model"], cfg["test"]], [out], out)
    print(json.dumps({k: v for k, v in rep.to_dict().items() if k != "curves"}))
    return 0


def _sizes(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--test-sizes must be comma-separated integers, got {text!r}") from exc


def cmd_sweep(cfg: dict) -> int:
    if cfg["family"] not in ("line", "cycle"):
        raise UsageError("sweep supports --family line or cycle")
    if cfg["arch"] not in ARCHS:
        raise UsageError(f"--arch must be one of {ARCHS}")
    sizes = _sizes(cfg["test_sizes"])
    m = cfg["train_size"]
    if min(sizes + [m]) < 3:
        raise UsageError("graph sizes must be at least 3")
    sim = _sim_config(cfg)
    big = max(sizes + [m])
    s_aug, s_test = fan_out(cfg["seed"], 2)
    train_xy = enumerated_arrays(cfg["family"], m, cfg["pair"], sim, cfg["augment"], s_aug)
    tests = {s: enumerated_arrays(cfg["family"], s, cfg["pair"], sim, 0, s_test) for s in sizes}
    folder = out_path(cfg["out_dir"])
    folder.mkdir(parents=True, exist_ok=True)
    runs = [run_sweep(cfg["arch"], train_xy, tests, _train_config(cfg, cfg["seed"] + r), big)
            for r in range(cfg["repeats"])]
    result = {}
    rows = ["test_size,epoch,test_acc,test_acc_std,test_loss,test_loss_std"]
    for s in sizes:
        acc = np.array([r["curves"][s]["test_acc"] for r in runs])
        loss = np.array([r["curves"][s]["test_loss"] for r in runs])
        result[s] = {"final_accuracy": float(acc[:, -1].mean()), "final_loss": float(loss[:, -1].mean()),
                     "accuracy_std": float(acc[:, -1].std())}
        for e in range(acc.shape[1]):
            rows.append(f"{s},{e + 1},{acc[:, e].mean()},{acc[:, e].std()},{loss[:, e].mean()},{loss[:, e].std()}")
    (folder / "sweep.json").write_text(json.dumps({"train_size": m, "input_size": big, "sizes": result}, indent=2))
    (folder / "sweep_curves.csv").write_text("\n".join(rows) + "\n")
    write_manifest("sweep", cfg, [], [folder / "sweep.json", folder / "sweep_curves.csv"], folder)
    for s in sizes:
        print(f"test size {s}: accuracy {result[s]['final_accuracy']:.3f} loss {result[s]['final_loss']:.3f}")
    return 0


def cmd_pca(cfg: dict) -> int:
    inputs = []
    if cfg["input"]:
        ds = Dataset.read_jsonl(cfg["input"])
        inputs.append(cfg["input"])
    else:
        ds, _, _ = labeled_graphs(cfg["family"], cfg["nodes"], cfg["pair"], cfg["count"], cfg["seed"],
                                  _sim_config(cfg), cfg["p_edge"], cfg["jobs"])
    r = pca(ds, cfg["k"])
    folder = out_path(cfg["out_dir"])
    folder.mkdir(parents=True, exist_ok=True)
    export_projection(r, folder / "projection.csv")
    summary = r.summary()
    summary["linear_separator_accuracy"] = linear_separability(r)
    (folder / "pca_summary.json").write_text(json.dumps(summary, indent=2))
    write_manifest("pca", cfg, inputs, [folder / "projection.csv", folder / "pca_summary.json"], folder)
    print(json.dumps(summary))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "pca": cmd_pca,
}


# -- argument parsing ---------------------------------------------------------


def _opt(p, *names, **kw):
    p.add_argument(*names, default=argparse.SUPPRESS, **kw)


def _sim_opts(p):
    _opt(p, "--gamma", type=float, help="sink decay rate (default 1)")
    _opt(p, "--dt", type=float, help="time step (default 0.01)")
    _opt(p, "--t-max", type=float, help="simulation horizon (default 1000)")
    _opt(p, "--p-th", type=float, help="hitting threshold override (default 1/ln n)")
    _opt(p, "--method", choices=["effective", "lindblad"], help="quantum integrator")


def _train_opts(p):
    _opt(p, "--lr", type=float, help="learning rate (default 0.001)")
    _opt(p, "--batch-size", type=int)
    _opt(p, "--epochs", type=int)
    _opt(p, "--optimizer", choices=["adam", "sgd"])
    _opt(p, "--repeats", type=int, help="independent runs with seeds seed..seed+repeats-1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qwadv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = command("generate", "write line, cycle or random graph records")
    _opt(p, "--family", choices=["line", "cycle", "random"])
    _opt(p, "--nodes", type=int)
    _opt(p, "--count", type=int)
    _opt(p, "--seed", type=int)
    _opt(p, "--p-edge", type=float)
    _opt(p, "--jobs", type=int)
    _opt(p, "--out")

    p = command("simulate", "label graphs by comparing walker hitting times")
    _opt(p, "--input")
    _opt(p, "--pair", choices=sorted(CLASS_PAIRS))
    _opt(p, "--trajectories", help="folder for per-graph trajectory CSVs")
    _opt(p, "--jobs", type=int)
    _opt(p, "--out")
    _sim_opts(p)

    p = command("dataset", "balance, prune, augment and split labeled samples")
    _opt(p, "--input")
    _opt(p, "--seed", type=int)
    _opt(p, "--split", type=float, help="training fraction (default 0.8)")
    _opt(p, "--drop-minor", type=int, metavar="K", help="remove samples with |step diff| <= K")
    _opt(p, "--drop-major", type=int, metavar="K", help="remove samples with |step diff| >= K")
    _opt(p, "--augment", type=int, metavar="C", help="shuffled copies per sample")
    _opt(p, "--prune-scope", choices=["all", "train"])
    _opt(p, "--histogram-bin", type=int)
    _opt(p, "--out-dir")

    p = command("train", "train a classifier (optionally building the dataset first)")
    _opt(p, "--train", help="training dataset (JSON lines)")
    _opt(p, "--test", help="test dataset (JSON lines)")
    _opt(p, "--arch", choices=list(ARCHS))
    _opt(p, "--nodes", type=int, help="graph size to generate, or model input size to pad to")
    _opt(p, "--family", choices=["line", "cycle", "random"])
    _opt(p, "--count", type=int)
    _opt(p, "--pair", choices=sorted(CLASS_PAIRS))
    _opt(p, "--seed", type=int)
    _opt(p, "--p-edge", type=float)
    _opt(p, "--jobs", type=int)
    _opt(p, "--out-dir")
    _train_opts(p)
    _sim_opts(p)

    p = command("evaluate", "evaluate a checkpoint on a dataset")
    _opt(p, "--model")
    _opt(p, "--test")
    _opt(p, "--out")

    p = command("sweep", "train on one graph size, test on several")
    _opt(p, "--arch", choices=list(ARCHS))
    _opt(p, "--family", choices=["line", "cycle"])
    _opt(p, "--train-size", type=int)
    _opt(p, "--test-sizes", help="comma-separated sizes, e.g. 6,7,8,9,10")
    _opt(p, "--pair", choices=sorted(CLASS_PAIRS))
    _opt(p, "--augment", type=int, help="shuffled copies of each training graph")
    _opt(p, "--seed", type=int)
    _opt(p, "--jobs", type=int)
    _opt(p, "--out-dir")
    _train_opts(p)
    _sim_opts(p)

    p = command("pca", "principal components of flattened adjacency matrices")
    _opt(p, "--input")
    _opt(p, "--k", type=int)
    _opt(p, "--nodes", type=int)
    _opt(p, "--family", choices=["line", "cycle", "random"])
    _opt(p, "--count", type=int)
    _opt(p, "--pair", choices=sorted(CLASS_PAIRS))
    _opt(p, "--seed", type=int)
    _opt(p, "--p-edge", type=float)
    _opt(p, "--jobs", type=int)
    _opt(p, "--out-dir")
    _sim_opts(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qwadv {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, GraphError, ShapeError, DivergenceError, FileNotFoundError, ValueError) as exc:
        print(f"qwadv {ns.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
