"""Mini-batch training, evaluation, generalization sweeps and gradient checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..graphs import pad_adjacency
from .metrics import confusion
from .models import Network, ShapeError, build_model, cross_entropy

__all__ = [
    "TrainConfig",
    "DivergenceError",
    "EvalReport",
    "SGD",
    "Adam",
    "make_optimizer",
    "train",
    "evaluate",
    "generalization_sweep",
    "gradient_check",
    "repeat_training",
    "pad_batch",
]


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 10
    epochs: int = 50
    optimizer: str = "adam"
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError(f"learning rate, batch size and epochs must be positive: {self}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, model: Network):
        for _, name, layer in model.parameters(trainable_only=True):
            layer.params[name] -= self.lr * layer.grads[name]


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, model: Network):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for i, name, layer in model.parameters(trainable_only=True):
            g = layer.grads[name]
            key = (i, name)
            m = self.m.get(key)
            if m is None:
                m = self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            v = self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            layer.params[name] -= lr_t * m / (np.sqrt(v) + self.eps)


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)


def pad_batch(x: np.ndarray, size: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == size:
        return x
    return np.stack([pad_adjacency(a, size) for a in x]) if len(x) else np.zeros((0, size, size))


@dataclass
class EvalReport:
    accuracy: float
    loss: float
    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    confusion: dict
    n: int
    curves: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_curves_csv(self, path) -> None:
        """Rows ``epoch,test_acc,test_loss`` for plotting."""
        acc = self.curves.get("test_acc", [])
        loss = self.curves.get("test_loss", [])
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "test_acc", "test_loss"])
            for e, (a, l) in enumerate(zip(acc, loss), start=1):
                w.writerow([e, a, l])


def evaluate(model: Network, x, y) -> EvalReport:
    """Accuracy, cross-entropy and per-class precision/recall/F1.

    Entry k of each metric pair treats class k as positive. ``confusion``
    is reported with class 1 positive.
    """
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    probs = model.predict(x)
    pred = probs.argmax(axis=1)
    c1 = confusion(y, pred, positive=1)
    c0 = c1.flipped()
    return EvalReport(
        accuracy=c1.accuracy(),
        loss=cross_entropy(probs, y),
        precision=(c0.precision(), c1.precision()),
        recall=(c0.recall(), c1.recall()),
        f1=(c0.f1(), c1.f1()),
        confusion=c1.as_dict(),
        n=len(y),
    )


def train(model: Network, x, y, cfg: TrainConfig, test: tuple | None = None, verbose: bool = False,
          callback=None):
    """Minimize cross-entropy with shuffled mini-batches.

    Returns ``(model, curves)``; the model is updated in place. Curves hold
    per-epoch ``train_loss`` and ``train_acc`` and, when ``test=(x, y)`` is
    given, ``test_loss`` and ``test_acc``. ``callback(epoch, model)`` runs
    after every epoch.
    """
    x = pad_batch(x, model.input_dim)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("training set is empty")
    if test is not None:
        test = (pad_batch(test[0], model.input_dim), np.asarray(test[1], dtype=np.int64))
    rng = np.random.default_rng(cfg.rng_seed)
    for layer in model.layers:
        if hasattr(layer, "rng"):
            layer.rng = np.random.default_rng(rng.integers(2**63))
    opt = make_optimizer(cfg)
    curves: dict[str, list[float]] = {"train_loss": [], "train_acc": []}
    if test is not None:
        curves.update(test_loss=[], test_acc=[])
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(y))
        total, correct = 0.0, 0
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, probs = model.loss_and_grads(x[idx], y[idx], training=True)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, loss)
            opt.step(model)
            total += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
        curves["train_loss"].append(total / len(y))
        curves["train_acc"].append(correct / len(y))
        if test is not None:
            rep = evaluate(model, *test)
            curves["test_loss"].append(rep.loss)
            curves["test_acc"].append(rep.accuracy)
        if callback is not None:
            callback(epoch, model)
        if verbose:
            tail = f" test_acc={curves['test_acc'][-1]:.4f}" if test is not None else ""
            print(f"epoch {epoch:3d} loss={curves['train_loss'][-1]:.4f} acc={curves['train_acc'][-1]:.4f}{tail}")
    return model, curves


def generalization_sweep(model: Network, test_sets: dict) -> dict:
    """Evaluate on test sets keyed by graph size, zero-padding each to the model input."""
    out = {}
    for size in sorted(test_sets):
        x, y = test_sets[size]
        if size > model.input_dim:
            raise ShapeError(f"test size {size} exceeds model input size {model.input_dim}")
        out[size] = evaluate(model, pad_batch(x, model.input_dim), y)
    return out


def gradient_check(model: Network, x, y, n_params: int = 40, eps: float = 1e-5, seed: int = 0,
                   names: tuple[str, ...] | None = None) -> float:
    """Max relative deviation between backprop and central finite differences.

    Checks up to ``n_params`` randomly chosen entries per parameter array
    (restricted to arrays named in ``names`` when given). Dropout is
    inactive. Frozen arrays must report an all-zero analytic gradient;
    any nonzero value counts as deviation 1.
    """
    x = pad_batch(x, model.input_dim)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if x.ndim == 2:
        x = x[None]
    model.loss_and_grads(x, y, training=False)
    analytic = {(i, name): layer.grads[name].copy() for i, name, layer in model.parameters()}
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, name, layer in model.parameters():
        if names is not None and name not in names:
            continue
        if name in layer.frozen:
            if np.any(analytic[(i, name)] != 0):
                worst = max(worst, 1.0)
            continue
        p = layer.params[name]
        flat = p.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_params, flat.size), replace=False)
        for k in picks:
            old = flat[k]
            flat[k] = old + eps
            up = cross_entropy(model.forward(x), y)
            flat[k] = old - eps
            down = cross_entropy(model.forward(x), y)
            flat[k] = old
            numeric = (up - down) / (2 * eps)
            a = analytic[(i, name)].reshape(-1)[k]
            scale = max(abs(a) + abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / scale)
    return worst


def _one_run(arch, input_dim, train_xy, test_xy, cfg):
    model = build_model(arch, input_dim, cfg.rng_seed)
    model, curves = train(model, *train_xy, cfg, test=test_xy)
    rep = evaluate(model, *test_xy)
    rep.curves = curves
    return rep, model


def repeat_training(arch: str, input_dim: int, train_xy, test_xy, cfg: TrainConfig,
                    repeats: int = 10, jobs: int = 1, return_models: bool = False):
    """Independent runs with seeds ``cfg.rng_seed .. cfg.rng_seed + repeats - 1``.

    Returns the list of final EvalReports (curves attached), and the
    trained models as well when ``return_models`` is set.
    """
    cfgs = [TrainConfig(cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.optimizer, cfg.rng_seed + r)
            for r in range(repeats)]
    if jobs == 1:
        out = [_one_run(arch, input_dim, train_xy, test_xy, c) for c in cfgs]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=jobs)(delayed(_one_run)(arch, input_dim, train_xy, test_xy, c) for c in cfgs)
    reports = [r for r, _ in out]
    return (reports, [m for _, m in out]) if return_models else reports


def summarize(reports: list[EvalReport]) -> dict:
    """Mean and standard deviation of the final metrics and the per-epoch curves."""
    def ms(vals):
        vals = np.asarray(vals, dtype=float)
        return {"mean": vals.mean(axis=0).tolist(), "std": vals.std(axis=0).tolist()}

    out = {
        "runs": len(reports),
        "accuracy": ms([r.accuracy for r in reports]),
        "loss": ms([r.loss for r in reports]),
        "precision": ms([r.precision for r in reports]),
        "recall": ms([r.recall for r in reports]),
        "f1": ms([r.f1 for r in reports]),
    }
    for key in ("test_acc", "test_loss", "train_loss", "train_acc"):
        if reports and key in reports[0].curves:
            out[key] = ms([r.curves[key] for r in reports])
    return out
