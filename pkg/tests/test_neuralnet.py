import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_forward
from qwadvantage.graphs import random_graph
from qwadvantage.neuralnet import (
    ShapeError,
    TrainConfig,
    build_model,
    confusion,
    cross_entropy,
    evaluate,
    generalization_sweep,
    gradient_check,
    load_model,
    repeat_training,
    save_model,
    softmax,
    summarize,
    train,
)
from qwadvantage.neuralnet.layers import Conv2D, Dense, Dropout, GraphProbes
from qwadvantage.neuralnet.training import DivergenceError

ARCHS = ["fc", "cnn", "cqcnn"]


def _adjacencies(n, count, seed=0, p=0.3):
    return np.stack([random_graph(n, p, seed + k).adjacency() for k in range(count)]).astype(float)


def test_fc_param_count():
    # 36*10+10 + 10*10+10 + 10*10+10 + 10*2+2
    assert build_model("fc", 6).count_params() == 612


def test_cnn_spatial_sizes():
    for n, final in [(6, 1), (9, 1), (10, 2), (20, 12)]:
        model = build_model("cnn", n)
        h = model._check(np.zeros((1, n, n)))
        sizes = []
        for layer in model.layers:
            h = layer.forward(h)
            if isinstance(layer, Conv2D):
                sizes.append(h.shape[-1])
        start = max(n, 9)
        assert sizes == [start - 2, start - 4, start - 6, start - 8]
        assert sizes[-1] == final
        first = next(layer for layer in model.layers if isinstance(layer, Conv2D))
        assert (first.c_in, first.c_out) == (1, n)


def test_cqcnn_structure():
    model = build_model("cqcnn", 6)
    probes = next(layer for layer in model.layers if isinstance(layer, GraphProbes))
    assert probes.frozen and model.count_params(trainable_only=False) > model.count_params()


@pytest.mark.parametrize("arch", ARCHS)
def test_seeded_init_is_deterministic(arch):
    x = _adjacencies(7, 4)
    a, b = build_model(arch, 7, 3), build_model(arch, 7, 3)
    assert np.array_equal(a.forward(x), b.forward(x))
    assert not np.array_equal(a.forward(x), build_model(arch, 7, 4).forward(x))


@pytest.mark.parametrize("arch", ARCHS)
def test_zero_weights_give_half(arch):
    model = build_model(arch, 6)
    for _, name, layer in model.parameters(trainable_only=True):
        layer.params[name][...] = 0.0
    probs = model.forward(_adjacencies(6, 5))
    assert np.allclose(probs, 0.5, atol=1e-12)


@given(arrays(np.float64, (7, 2), elements=st.floats(-500, 500)))
@settings(max_examples=100, deadline=None)
def test_softmax_normalized(z):
    p = softmax(z)
    assert np.all(p >= 0)
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-7


def test_cross_entropy_uniform_is_ln2():
    p = np.full((8, 2), 0.5)
    assert cross_entropy(p, np.array([0, 1] * 4)) == pytest.approx(math.log(2), abs=1e-12)
    model = build_model("fc", 6)
    for _, name, layer in model.parameters():
        layer.params[name][...] = 0.0
    loss, _ = model.loss_and_grads(_adjacencies(6, 8), np.array([0, 1] * 4))
    assert loss == pytest.approx(math.log(2), abs=1e-12)


@pytest.mark.parametrize("arch,n", [("fc", 6), ("cnn", 6), ("cnn", 10), ("cqcnn", 4), ("cqcnn", 7)])
def test_matches_naive_forward(arch, n):
    model = build_model(arch, n, 1)
    for a in _adjacencies(n, 3, seed=11):
        fast = model.forward(a)[0]
        slow = naive_forward(model, a)
        assert np.max(np.abs(fast - slow)) < 1e-10


@pytest.mark.parametrize("arch,n", [("fc", 6), ("cnn", 6), ("cnn", 11), ("cqcnn", 6), ("cqcnn", 4)])
def test_gradient_check(arch, n):
    model = build_model(arch, n, 2)
    x = _adjacencies(n, 4, seed=5)
    y = np.array([0, 1, 1, 0])
    assert gradient_check(model, x, y, n_params=15) < 1e-4


def test_fc_zero_input_gives_bias_path():
    model = build_model("fc", 6, 0)
    h = np.zeros(36)
    dense = [layer for layer in model.layers if isinstance(layer, Dense)]
    for k, layer in enumerate(dense):
        h = h @ layer.params["w"] + layer.params["b"]
        if k < len(dense) - 1:
            h = np.maximum(h, 0.0)
    assert np.max(np.abs(model.logits(np.zeros((1, 6, 6)))[0] - h)) < 1e-6


def test_cqcnn_frozen_probes_get_zero_grads():
    model = build_model("cqcnn", 6)
    model.loss_and_grads(_adjacencies(6, 3), np.array([0, 1, 0]))
    probes = next(layer for layer in model.layers if isinstance(layer, GraphProbes))
    for name in probes.frozen:
        assert not probes.grads[name].any()
    before = probes.params["probes"].copy()
    train(model, _adjacencies(6, 20), np.arange(20) % 2, TrainConfig(epochs=2))
    assert np.array_equal(before, probes.params["probes"])


def test_dropout_inverted_scaling():
    d = Dropout(0.2, np.random.default_rng(0))
    x = np.ones((200, 50))
    assert np.array_equal(d.forward(x, training=False), x)
    out = d.forward(x, training=True)
    assert set(np.unique(out)) <= {0.0, 1.25}
    assert abs(out.mean() - 1.0) < 0.02


@pytest.mark.parametrize("arch", ARCHS)
def test_memorizes_small_set(arch):
    x = _adjacencies(6, 10, seed=40)
    y = np.array([0, 1] * 5)
    model = build_model(arch, 6, 0)
    train(model, x, y, TrainConfig(learning_rate=0.01, epochs=200, batch_size=10))
    assert evaluate(model, x, y).accuracy == 1.0


def test_separable_toy_problem():
    # label = whether nodes 0 and 1 are adjacent
    x = _adjacencies(6, 200, seed=100, p=0.4)
    y = x[:, 0, 1].astype(int)
    model = build_model("fc", 6, 0)
    _, curves = train(model, x[:150], y[:150], TrainConfig(learning_rate=0.005, epochs=40), test=(x[150:], y[150:]))
    assert curves["test_acc"][-1] >= 0.95
    assert curves["train_loss"][-1] < curves["train_loss"][0]


def test_sgd_optimizer_lowers_loss():
    x = _adjacencies(6, 40, seed=3)
    y = x[:, 0, 1].astype(int)
    model = build_model("fc", 6, 0)
    _, curves = train(model, x, y, TrainConfig(learning_rate=0.05, epochs=30, optimizer="sgd"))
    assert curves["train_loss"][-1] < curves["train_loss"][0]


def test_divergence_is_reported():
    model = build_model("fc", 6, 0)
    x = _adjacencies(6, 10)
    x[3, 0, 0] = np.nan
    with pytest.raises(DivergenceError):
        train(model, x, np.arange(10) % 2, TrainConfig(epochs=3))


def test_shape_errors():
    model = build_model("cnn", 6)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, 7, 7)))
    with pytest.raises(ValueError):
        build_model("rnn", 6)


def test_metric_example():
    c = confusion([1] * 12 + [0] * 8, [1] * 8 + [0] * 4 + [0] * 6 + [1] * 2)
    assert (c.tp, c.tn, c.fp, c.fn) == (8, 6, 2, 4)
    assert c.accuracy() == pytest.approx(0.70)
    assert c.precision() == pytest.approx(0.80)
    assert c.recall() == pytest.approx(0.6667, abs=1e-4)
    assert c.f1() == pytest.approx(0.7273, abs=1e-4)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
@settings(max_examples=100, deadline=None)
def test_f1_identity(pairs):
    y, p = zip(*pairs)
    c = confusion(y, p)
    den = 2 * c.tp + c.fp + c.fn
    assert c.f1() == (2 * c.tp / den if den else 0.0)
    assert c.f1() == pytest.approx(c.f1_harmonic(), abs=1e-12)
    assert c.flipped().flipped() == c


def test_evaluate_per_class_metrics():
    class Fixed:
        input_dim = 3

        def predict(self, x):
            return np.array([[0.1, 0.9]] * 10 + [[0.9, 0.1]] * 10)

    y = np.array([1] * 8 + [0] * 2 + [1] * 4 + [0] * 6)
    rep = evaluate(Fixed(), np.zeros((20, 3, 3)), y)
    assert rep.precision[1] == pytest.approx(0.8) and rep.recall[1] == pytest.approx(8 / 12)
    assert rep.precision[0] == pytest.approx(6 / 10) and rep.recall[0] == pytest.approx(6 / 8)
    assert rep.confusion == {"tp": 8, "tn": 6, "fp": 2, "fn": 4}


@pytest.mark.parametrize("arch", ARCHS)
def test_checkpoint_round_trip(tmp_path, arch):
    model = build_model(arch, 6, 9)
    train(model, _adjacencies(6, 20), np.arange(20) % 2, TrainConfig(epochs=1))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    x = _adjacencies(6, 5, seed=77)
    assert np.array_equal(model.forward(x), back.forward(x))
    assert back.layer_specs() == model.layer_specs()


def test_generalization_sweep_pads():
    model = build_model("fc", 10, 0)
    sets = {6: (_adjacencies(6, 6), np.arange(6) % 2), 10: (_adjacencies(10, 6), np.arange(6) % 2)}
    out = generalization_sweep(model, sets)
    assert sorted(out) == [6, 10] and all(r.n == 6 for r in out.values())
    with pytest.raises(ShapeError):
        generalization_sweep(model, {12: (_adjacencies(12, 2), np.array([0, 1]))})


def test_repeat_training_and_summary():
    x = _adjacencies(6, 30)
    y = x[:, 0, 1].astype(int)
    reps = repeat_training("fc", 6, (x[:20], y[:20]), (x[20:], y[20:]), TrainConfig(epochs=3), repeats=3)
    assert len(reps) == 3 and len(reps[0].curves["test_acc"]) == 3
    summ = summarize(reps)
    assert summ["runs"] == 3 and len(summ["test_acc"]["mean"]) == 3
    again = repeat_training("fc", 6, (x[:20], y[:20]), (x[20:], y[20:]), TrainConfig(epochs=3), repeats=3)
    assert [r.accuracy for r in reps] == [r.accuracy for r in again]
