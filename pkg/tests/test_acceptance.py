"""Desk-scale reproduction targets, one test per criterion.

Each test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts. Generated datasets are cached under
``.acceptance_cache/`` (override with ``QWADV_ACCEPTANCE_CACHE``); every
training run is recomputed. Run only this file with ``pytest -m acceptance``.
"""

import time
from functools import lru_cache

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from oracles import classical_oracle, lindblad_expm_oracle
from qwadvantage.dataset import Dataset, LabeledSample, label_graphs
from qwadvantage.experiments import enumerated_arrays, generate_graphs, labeled_graphs, prepare, run_sweep
from qwadvantage.graphs import enumerate_cycle_graphs, enumerate_line_graphs, random_graph
from qwadvantage.neuralnet import TrainConfig, build_model, confusion, evaluate, gradient_check, softmax, train
from qwadvantage.walksim import (
    InitialState,
    IntegrationError,
    SimConfig,
    build_classical_operator,
    build_quantum_setup,
    detection_bound,
    evolve_classical,
    evolve_quantum,
    walker_hitting_steps,
)

pytestmark = pytest.mark.acceptance

SEEDS = list(range(10))
RANDOM_COUNT = 5000


# -- cached data ------------------------------------------------------------------


def _cached(cache_dir, name, build) -> Dataset:
    path = cache_dir / f"{name}.jsonl"
    if path.exists():
        return Dataset.read_jsonl(path)
    ds = build()
    ds.write_jsonl(path)
    return ds


@lru_cache(maxsize=None)
def _random20_graphs():
    return generate_graphs("random", 20, RANDOM_COUNT, seed=20)


def _random20(cache_dir, pair):
    def build():
        graphs, metas = _random20_graphs()
        ds, _, failures = label_graphs(graphs, pair, SimConfig(), metas)
        assert not failures, failures[:3]
        ds.header.update({"family": "random", "n": 20, "seed": 20, "count": RANDOM_COUNT})
        return ds

    return _cached(cache_dir, f"random20_{pair}_seed20", build)


@pytest.fixture(scope="module")
def random6(cache_dir):
    def build():
        ds, _, failures = labeled_graphs("random", 6, "classical-vs-quantum", RANDOM_COUNT, seed=6)
        assert not failures, failures[:3]
        return ds

    return _cached(cache_dir, "random6_classical-vs-quantum_seed6", build)


@pytest.fixture(scope="module")
def random20_cq(cache_dir):
    return _random20(cache_dir, "classical-vs-quantum")


@pytest.fixture(scope="module")
def random20_qq(cache_dir):
    return _random20(cache_dir, "quantum-vs-quantumT")


# -- training helpers -------------------------------------------------------------


def _runs(ds, arch, seeds, curves=False, prune=None):
    """One run per seed; the seed drives balancing, the split and the weight init."""
    out = []
    for s in seeds:
        prepared = prepare(ds, seed=s, prune=prune, prune_scope="train")
        tr, te = prepared.train(), prepared.test()
        n = tr.samples[0].adjacency.shape[0]
        model = build_model(arch, n, s)
        _, c = train(model, *tr.arrays(), TrainConfig(rng_seed=s), test=te.arrays() if curves else None)
        rep = evaluate(model, *te.arrays())
        rep.curves = c
        out.append(rep)
    return out


@pytest.fixture(scope="module")
def random6_runs(random6):
    return {arch: _runs(random6, arch, SEEDS) for arch in ("fc", "cnn", "cqcnn")}


def _mean(vals):
    return float(np.mean(vals))


# -- 1. dark-state limit ----------------------------------------------------------


def test_criterion_01_dark_state_limit(verdict):
    square = enumerate_cycle_graphs(4)
    g = next(g for g in square if (0, 1) in g.edges)  # target adjacent to the start
    t0 = time.perf_counter()
    res = evolve_quantum(build_quantum_setup(g), InitialState(), 200.0, 0.01)
    elapsed = time.perf_counter() - t0
    final = res.target_prob[-1]
    ok = abs(final - 0.5) <= 0.02 and elapsed < 1.0
    verdict("criterion 1", ok, f"sink(t=200)={final:.4f} (target 0.50+-0.02), {elapsed:.2f}s (< 1 s)")
    assert ok


# -- 2. detection bounds ----------------------------------------------------------


def test_criterion_02_detection_bounds(verdict):
    t0 = time.perf_counter()
    worst, odd_bounds = -np.inf, set()
    for n in range(4, 11):
        for g in enumerate_cycle_graphs(n):
            bound = detection_bound(g)
            res = evolve_quantum(build_quantum_setup(g), InitialState(), 1000.0, 0.01)
            worst = max(worst, res.target_prob[-1] - bound)
            if n % 2:
                odd_bounds.add(bound)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and odd_bounds == {0.5} and elapsed < 60
    verdict("criterion 2", ok,
            f"max(final sink - bound)={worst:.2e} (<= 0.02), odd-n bounds {sorted(odd_bounds)}, {elapsed:.1f}s")
    assert ok


# -- 3. conservation and oracle agreement -------------------------------------------


def test_criterion_03_oracle_agreement(verdict):
    fixtures = enumerate_line_graphs(6) + enumerate_cycle_graphs(6)
    worst_c = worst_q = worst_sum = 0.0
    for g in fixtures:
        op = build_classical_operator(g)
        worst_sum = max(worst_sum, np.abs(expm(op.generator * 0.01).sum(axis=0) - 1).max())
        res = evolve_classical(op, 50.0, 0.01)
        idx = np.arange(0, len(res.target_prob), 100)
        worst_c = max(worst_c, np.abs(res.target_prob[idx] - classical_oracle(g.adjacency(), 1, res.times[idx])).max())
        for method in ("effective", "lindblad"):
            q = evolve_quantum(build_quantum_setup(g), InitialState(), 30.0, 0.01, method=method)
            qidx = np.arange(0, len(q.target_prob), 300)
            ref = lindblad_expm_oracle(g.adjacency(), np.eye(6)[0], 1.0, q.times[qidx])
            worst_q = max(worst_q, np.abs(q.target_prob[qidx] - ref).max())
    ok = max(worst_c, worst_q) <= 1e-8 and worst_sum <= 1e-12
    verdict("criterion 3", ok,
            f"{len(fixtures)} fixtures: classical dev {worst_c:.1e}, quantum dev {worst_q:.1e} (<= 1e-8), "
            f"column-sum drift {worst_sum:.1e}")
    assert ok


# -- 4. 6-node random accuracy ----------------------------------------------------


def test_criterion_04_random6_accuracy(verdict, random6, random6_runs):
    means = {a: _mean([r.accuracy for r in reps]) for a, reps in random6_runs.items()}
    ok = all(m >= 0.88 for m in means.values())
    counts = random6.class_counts()
    text = ", ".join(f"{a}={m:.3f}" for a, m in means.items())
    verdict("criterion 4", ok, f"mean test accuracy over {len(SEEDS)} seeds: {text} (>= 0.88); raw classes {counts}")
    assert ok


# -- 5. CQCNN metrics against the published table -------------------------------------


def test_criterion_05_cqcnn_metrics(verdict, random6_runs):
    reps = random6_runs["cqcnn"]
    got = {k: np.mean([getattr(r, k) for r in reps], axis=0) for k in ("precision", "recall", "f1")}
    table = {"precision": (0.96, 0.96), "recall": (0.99, 0.87), "f1": (0.98, 0.92)}
    devs = {k: np.abs(got[k] - np.array(table[k])).max() for k in table}
    ok = all(d <= 0.05 for d in devs.values())
    text = "; ".join(f"{k} {np.round(got[k], 3).tolist()} vs {list(table[k])}" for k in table)
    verdict("criterion 5", ok, f"{text} (tol 0.05, worst {max(devs.values()):.3f})")
    assert ok


# -- 6. 20-node random band -------------------------------------------------------


def test_criterion_06_random20_band(verdict, random20_cq):
    seeds = {"fc": SEEDS, "cnn": SEEDS[:3], "cqcnn": SEEDS[:3]}
    reps = {a: _runs(random20_cq, a, s, curves=True) for a, s in seeds.items()}
    acc = {a: _mean([r.accuracy for r in rs]) for a, rs in reps.items()}
    in_band = all(0.55 <= v <= 0.75 for v in acc.values())
    cq_vs_cnn = _mean([r.accuracy for r in reps["cqcnn"]]) >= _mean([r.accuracy for r in reps["cnn"][:3]])
    fc_loss = np.mean([r.curves["test_loss"] for r in reps["fc"]], axis=0)
    best = int(fc_loss.argmin())
    rising = best < len(fc_loss) - 10 and fc_loss[-1] > fc_loss[best] + 0.05
    ok = in_band and cq_vs_cnn and rising
    text = ", ".join(f"{a}={v:.3f}" for a, v in acc.items())
    verdict("criterion 6", ok,
            f"accuracy {text} (band 0.55-0.75), CQCNN>=CNN {cq_vs_cnn}, FC test loss min {fc_loss[best]:.3f} "
            f"at epoch {best + 1} then {fc_loss[-1]:.3f} at epoch {len(fc_loss)}")
    assert ok


# -- 7. quantum vs quantum-T at 20 nodes ----------------------------------------------


def test_criterion_07_quantum_vs_quantumT(verdict, random20_qq):
    acc = np.array([r.accuracy for r in _runs(random20_qq, "fc", SEEDS)])
    p = float(stats.ttest_1samp(acc, 0.5).pvalue)
    ok = p > 0.05
    verdict("criterion 7", ok,
            f"FC accuracy {acc.mean():.3f} +- {acc.std(ddof=1):.3f} over {len(acc)} seeds, "
            f"t-test vs 0.5 p={p:.2g} (indistinguishable needs p > 0.05)")
    assert ok


# -- 8. line / cycle 6-node training ---------------------------------------------------


def _enumeration_runs(family, arch, seeds, train_size, test_sizes, input_dim):
    train_xy = enumerated_arrays(family, train_size, copies=20, seed=100)
    # fresh relabelings of every test graph on top of the originals
    tests = {m: enumerated_arrays(family, m, copies=5, seed=200) for m in test_sizes}
    finals = []
    for s in seeds:
        out = run_sweep(arch, train_xy, tests, TrainConfig(rng_seed=s), input_dim)
        finals.append({m: rep.accuracy for m, rep in out["final"].items()})
    return {m: _mean([f[m] for f in finals]) for m in test_sizes}


def test_criterion_08_enumerated_six_nodes(verdict):
    results = {}
    for family in ("cycle", "line"):
        for arch in ("fc", "cqcnn"):
            results[(family, arch)] = _enumeration_runs(family, arch, SEEDS[:5], 6, [6], 6)[6]
    ok = all(v >= 0.95 for v in results.values())
    text = ", ".join(f"{f}/{a}={v:.3f}" for (f, a), v in results.items())
    verdict("criterion 8", ok, f"mean test accuracy over 5 seeds: {text} (>= 0.95)")
    assert ok


# -- 9. generalization gap ---------------------------------------------------------


def test_criterion_09_generalization_gap(verdict):
    gaps = {}
    for arch in ("fc", "cnn", "cqcnn"):
        acc = _enumeration_runs("cycle", arch, SEEDS[:5], 6, [6, 10], 10)
        gaps[arch] = (acc[6], acc[10])
    ok = all(a6 - a10 >= 0.15 for a6, a10 in gaps.values())
    text = ", ".join(f"{a}: {a6:.3f} -> {a10:.3f}" for a, (a6, a10) in gaps.items())
    verdict("criterion 9", ok, f"cycle train-6 accuracy test-6 -> test-10: {text} (drop >= 0.15)")
    assert ok


# -- 10. pruning variants ----------------------------------------------------------


def test_criterion_10_pruning_order(verdict, random20_cq):
    variants = {"full": None, "drop-major-200": ("drop-major", 200), "drop-minor-5": ("drop-minor", 5)}
    acc = {k: np.array([r.accuracy for r in _runs(random20_cq, "fc", SEEDS, prune=p)]) for k, p in variants.items()}

    def gap(a, b):
        diff = acc[a].mean() - acc[b].mean()
        noise = np.sqrt(acc[a].var(ddof=1) / len(acc[a]) + acc[b].var(ddof=1) / len(acc[b]))
        return diff, noise

    g1, n1 = gap("full", "drop-major-200")
    g2, n2 = gap("drop-major-200", "drop-minor-5")
    ok = g1 >= -n1 and g2 >= -n2
    text = ", ".join(f"{k}={v.mean():.3f}" for k, v in acc.items())
    verdict("criterion 10", ok,
            f"FC over {len(SEEDS)} seeds: {text}; gaps {g1:+.3f} (noise {n1:.3f}), {g2:+.3f} (noise {n2:.3f})")
    assert ok


# -- 11. property suite --------------------------------------------------------------


def test_criterion_11_properties(verdict, tmp_path):
    checks = {}
    rng = np.random.default_rng(0)
    z = rng.normal(scale=50, size=(1000, 2))
    checks["softmax"] = np.abs(softmax(z).sum(axis=1) - 1).max() <= 1e-7

    x = np.stack([random_graph(6, 0.3, k).adjacency() for k in range(4)]).astype(float)
    y = np.array([0, 1, 1, 0])
    grad = max(gradient_check(build_model(a, 6, 1), x, y, n_params=10) for a in ("fc", "cnn", "cqcnn"))
    checks["gradients"] = grad <= 1e-4

    trace_ok = lindblad_dev = 0.0
    for g in enumerate_cycle_graphs(6)[:5]:
        for kind in ("node0", "tstate"):
            setup = build_quantum_setup(g, superposition=kind == "tstate")
            try:
                lind = evolve_quantum(setup, InitialState(kind), 20.0, 0.01, method="lindblad").target_prob
            except IntegrationError:
                trace_ok = 1.0
                continue
            eff = evolve_quantum(setup, InitialState(kind), 20.0, 0.01).target_prob
            lindblad_dev = max(lindblad_dev, np.abs(lind - eff).max())
    checks["trace"] = trace_ok == 0.0
    checks["lindblad_vs_effective"] = lindblad_dev <= 1e-6

    f1_ok = True
    for _ in range(200):
        c = confusion(rng.integers(0, 2, 30), rng.integers(0, 2, 30))
        den = 2 * c.tp + c.fp + c.fn
        f1_ok &= c.f1() == (2 * c.tp / den if den else 0.0)
    checks["f1_identity"] = f1_ok

    samples = [LabeledSample(random_graph(7, 0.3, k).adjacency(), k % 2, 10 + k, np.inf if k == 3 else k, 10, {"graph_id": k})
               for k in range(6)]
    ds = Dataset(samples, header={"note": "round trip"})
    ds.write_jsonl(tmp_path / "a.jsonl")
    back = Dataset.read_jsonl(tmp_path / "a.jsonl")
    checks["dataset_round_trip"] = back.samples == ds.samples and back.header == ds.header

    dt_ok = True
    for g in enumerate_line_graphs(6)[::3] + enumerate_cycle_graphs(6)[::3]:
        for walker in ("ctrw", "ctqw", "ctqw_t"):
            a = walker_hitting_steps(g, walker, SimConfig(dt=0.01, t_max=200.0))
            b = walker_hitting_steps(g, walker, SimConfig(dt=0.005, t_max=200.0))
            dt_ok &= (a == b == np.inf) or abs(a * 0.01 - b * 0.005) <= 0.01 + 1e-12
    checks["dt_halving"] = dt_ok

    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict("criterion 11", ok,
            f"{len(checks)} properties, gradient dev {grad:.1e}, Lindblad dev {lindblad_dev:.1e}"
            + (f", failed: {failed}" if failed else ""))
    assert ok
