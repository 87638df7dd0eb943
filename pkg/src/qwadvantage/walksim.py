"""Classical and quantum continuous-time walks, hitting times and detection bounds.

Time is measured in units of the inverse edge coupling (hbar = 1, H = A).
Both walkers are propagated on a uniform grid ``t_k = k * dt``; the
hitting step is the first grid index whose target (classical) or sink
(quantum) probability reaches the threshold.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from networkx.algorithms.isomorphism import GraphMatcher
from scipy.linalg import expm

from .graphs import INITIAL, TARGET, Graph

__all__ = [
    "INF",
    "SimulationError",
    "IntegrationError",
    "ClassicalOperator",
    "QuantumSetup",
    "InitialState",
    "WalkResult",
    "SimConfig",
    "threshold_for",
    "build_classical_operator",
    "build_quantum_setup",
    "evolve_classical",
    "evolve_quantum",
    "hitting_time",
    "detection_bound",
    "asymptotic_detection",
    "walker_hitting_steps",
    "WALKERS",
]

INF = math.inf
WALKERS = ("ctrw", "ctqw", "ctqw_t")

# cos(2 beta) = 1/sqrt(3)
T_STATE_BETA = 0.5 * math.acos(1.0 / math.sqrt(3.0))

TRACE_TOL = 1e-6
# cap on elements held by the stacked matrix powers in _propagate
_POWER_BUDGET = 2_000_000


class SimulationError(RuntimeError):
    pass


class IntegrationError(SimulationError):
    """Trace of the density matrix drifted beyond tolerance."""


def threshold_for(n: int) -> float:
    """Hitting threshold 1/ln(n) for an n-node graph (sink and extra start excluded)."""
    if n <= 2:
        raise ValueError(f"threshold 1/ln({n}) >= 1 is unusable; need n >= 3")
    return 1.0 / math.log(n)


# -- classical walk -----------------------------------------------------------


@dataclass(frozen=True)
class ClassicalOperator:
    t_matrix: np.ndarray
    target: int = TARGET

    @property
    def generator(self) -> np.ndarray:
        return self.t_matrix - np.eye(self.t_matrix.shape[0])

    @property
    def n(self) -> int:
        return self.t_matrix.shape[0]


def build_classical_operator(g: Graph) -> ClassicalOperator:
    """Column-stochastic transition matrix with an absorbing target.

    ``T[i, j]`` is the rate of hopping to ``i`` from ``j``; the target's
    column is replaced by a unit diagonal so nothing leaves it.
    """
    a_c = g.adjacency().astype(float)
    a_c[:, g.target] = 0.0
    a_c[g.target, g.target] = 1.0
    deg = a_c.sum(axis=0)
    if (deg == 0).any():
        raise SimulationError(f"node(s) {np.flatnonzero(deg == 0).tolist()} have zero degree")
    return ClassicalOperator(a_c / deg, g.target)


# -- quantum walk -------------------------------------------------------------


@dataclass(frozen=True)
class QuantumSetup:
    """Adjacency with sink (index n) and optional extra start node (index n+1)."""

    a_q: np.ndarray
    n: int
    gamma: float = 1.0
    jump_target: int = TARGET
    extra_start: int | None = None

    @property
    def sink(self) -> int:
        return self.n

    @property
    def hamiltonian(self) -> np.ndarray:
        return self.a_q.astype(float)

    @property
    def dim(self) -> int:
        return self.a_q.shape[0]

    @property
    def system_nodes(self) -> list[int]:
        """Every index except the sink."""
        return [k for k in range(self.dim) if k != self.sink]


def build_quantum_setup(g: Graph, gamma: float = 1.0, superposition: bool = False) -> QuantumSetup:
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    n = g.n
    dim = n + 2 if superposition else n + 1
    a_q = np.zeros((dim, dim), dtype=np.int64)
    a_q[:n, :n] = g.adjacency()
    extra = None
    if superposition:
        extra = n + 1
        a_q[g.initial, extra] = a_q[extra, g.initial] = 1
    return QuantumSetup(a_q, n, float(gamma), g.target, extra)


@dataclass(frozen=True)
class InitialState:
    kind: str = "node0"
    beta: float = T_STATE_BETA

    def vector(self, setup: QuantumSetup) -> np.ndarray:
        psi = np.zeros(setup.dim, dtype=complex)
        if self.kind == "node0":
            psi[INITIAL] = 1.0
        elif self.kind == "tstate":
            if setup.extra_start is None:
                raise ValueError("T-state initialization needs a setup with an extra start node")
            psi[INITIAL] = math.cos(self.beta)
            psi[setup.extra_start] = np.exp(1j * math.pi / 4) * math.sin(self.beta)
        else:
            raise ValueError(f"unknown initial state kind {self.kind!r}")
        return psi


# -- results ------------------------------------------------------------------


@dataclass(frozen=True)
class WalkResult:
    kind: str
    dt: float
    target_prob: np.ndarray
    hitting_time: float = INF
    hitting_steps: float = INF
    p_th: float | None = None
    gamma: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.target_prob)) * self.dt

    @property
    def p_det_estimate(self) -> float:
        return float(self.target_prob[-1])

    def with_threshold(self, p_th: float) -> WalkResult:
        tau, steps = hitting_time(self, p_th)
        return WalkResult(self.kind, self.dt, self.target_prob, tau, steps, p_th, self.gamma, self.meta)

    def sidecar(self) -> dict:
        return {
            "kind": self.kind,
            "tau": _inf_json(self.hitting_time),
            "steps": _inf_json(self.hitting_steps),
            "p_det_estimate": self.p_det_estimate,
            "gamma": self.gamma,
            "dt": self.dt,
            "p_th": self.p_th,
            **self.meta,
        }

    def write_csv(self, path) -> None:
        """Trajectory as ``t,p_target`` (classical) or ``t,p_sink`` (quantum) plus a JSON sidecar."""
        path = Path(path)
        column = "p_target" if self.kind == "ctrw" else "p_sink"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", column])
            for t, p in zip(self.times, self.target_prob):
                w.writerow([f"{t:.10g}", repr(float(p))])
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=2))


def _inf_json(x):
    return "inf" if x == INF else x


def hitting_time(result: WalkResult, p_th: float) -> tuple[float, float]:
    """First grid time with probability >= p_th, as ``(time, steps)``; INF if never."""
    if not 0.0 < p_th < 1.0:
        raise ValueError(f"p_th must lie in (0, 1), got {p_th}")
    hits = np.flatnonzero(result.target_prob >= p_th)
    if hits.size == 0:
        return INF, INF
    k = int(hits[0])
    return k * result.dt, k


# -- propagation --------------------------------------------------------------


def _n_steps(t_max: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_max < dt:
        raise ValueError(f"t_max ({t_max}) must be at least dt ({dt})")
    return int(round(t_max / dt))


def _taylor4(m: np.ndarray) -> np.ndarray:
    """I + M + M^2/2 + M^3/6 + M^4/24: one classical RK4 step of a linear ODE."""
    eye = np.eye(m.shape[0], dtype=m.dtype)
    out = eye.copy()
    term = eye
    for k in range(1, 5):
        term = term @ m / k
        out = out + term
    return out


def _propagate(step, x0, n_steps, observe, stop_at=None, check=None):
    """Iterate ``x <- step @ x`` for ``n_steps`` and return ``observe`` on every grid point.

    States are advanced a block at a time with stacked powers of ``step``.
    With ``stop_at`` set, stops after the first block whose observable
    reaches it and truncates the trace just past the crossing.
    """
    dim = step.shape[0]
    block = int(max(1, min(1024, _POWER_BUDGET // (dim * dim))))
    powers = np.empty((block, dim, dim), dtype=step.dtype)
    powers[0] = np.eye(dim, dtype=step.dtype)
    for k in range(1, block):
        powers[k] = step @ powers[k - 1]
    jump = step @ powers[-1]

    out = np.empty(n_steps + 1)
    x = np.asarray(x0, dtype=step.dtype)
    done = 0
    while done <= n_steps:
        take = min(block, n_steps + 1 - done)
        states = powers[:take] @ x
        vals = observe(states)
        if check is not None:
            check(states, done)
        out[done : done + take] = vals
        if stop_at is not None:
            hit = np.flatnonzero(vals >= stop_at)
            if hit.size:
                return out[: done + hit[0] + 1]
        done += take
        x = jump @ x
    return out


def evolve_classical(
    op: ClassicalOperator,
    t_max: float,
    dt: float,
    method: str = "propagator",
    stop_at: float | None = None,
) -> WalkResult:
    """Target occupation p_1(t) of the classical walk started at node 0.

    ``method="propagator"`` steps with exp((T - I) dt); ``"rk4"`` takes
    classical Runge-Kutta steps of size dt.
    """
    steps = _n_steps(t_max, dt)
    g = op.generator
    if method == "propagator":
        step = expm(g * dt)
    elif method == "rk4":
        step = _taylor4(g * dt)
    else:
        raise ValueError(f"unknown classical method {method!r}")
    p0 = np.zeros(op.n)
    p0[INITIAL] = 1.0
    target = op.target
    traj = _propagate(step, p0, steps, lambda s: s[:, target], stop_at)
    return WalkResult("ctrw", dt, traj, meta={"method": method})


def _lindblad_superop(setup: QuantumSetup) -> np.ndarray:
    """Row-major vec(rho) generator for -i[H, rho] + gamma D[|sink><target|](rho)."""
    d = setup.dim
    h = setup.hamiltonian.astype(complex)
    jump = np.zeros((d, d), dtype=complex)
    jump[setup.sink, setup.jump_target] = 1.0
    ldl = jump.conj().T @ jump
    eye = np.eye(d)
    # row-major: vec(A X B) = kron(A, B.T) vec(X)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    sup += setup.gamma * (
        np.kron(jump, jump.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T)
    )
    return sup


def evolve_quantum(
    setup: QuantumSetup,
    init: InitialState,
    t_max: float,
    dt: float,
    method: str = "effective",
    stop_at: float | None = None,
) -> WalkResult:
    """Sink population of the quantum walk on the dt grid.

    ``method="lindblad"`` integrates the full master equation with RK4 steps
    and enforces trace preservation; ``"effective"`` propagates the pure
    state under H - i(gamma/2)|target><target| exactly and reads the sink
    population as the lost norm. The two coincide because the sink has no
    Hamiltonian coupling.
    """
    steps = _n_steps(t_max, dt)
    psi0 = init.vector(setup)
    if method == "effective":
        keep = setup.system_nodes
        h_eff = setup.hamiltonian[np.ix_(keep, keep)].astype(complex)
        h_eff[keep.index(setup.jump_target), keep.index(setup.jump_target)] -= 0.5j * setup.gamma
        step = expm(-1j * h_eff * dt)
        norm0 = float(np.vdot(psi0, psi0).real)
        traj = _propagate(
            step,
            psi0[keep],
            steps,
            lambda s: norm0 - np.einsum("ki,ki->k", s.conj(), s).real,
            stop_at,
        )
    elif method == "lindblad":
        d = setup.dim
        step = _taylor4(_lindblad_superop(setup) * dt)
        rho0 = np.outer(psi0, psi0.conj()).ravel()
        diag = np.arange(d) * (d + 1)
        sink = setup.sink * (d + 1)

        def check(states, offset):
            tr = states[:, diag].sum(axis=1)
            bad = np.flatnonzero(np.abs(tr - 1.0) > TRACE_TOL)
            if bad.size:
                k = offset + int(bad[0])
                raise IntegrationError(f"trace {tr[bad[0]].real:.9f} at step {k} (t={k * dt:g})")

        traj = _propagate(step, rho0, steps, lambda s: s[:, sink].real, stop_at, check)
    else:
        raise ValueError(f"unknown quantum method {method!r}")
    kind = "ctqw_t" if init.kind == "tstate" else "ctqw"
    return WalkResult(kind, dt, traj, gamma=setup.gamma, meta={"method": method})


# -- detection probability ----------------------------------------------------


def _bright_basis(h: np.ndarray, seed_index: int, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the smallest H-invariant subspace containing e_seed.

    Lanczos with full reorthogonalization; its complement is the dark
    subspace, which never feeds population into the target.
    """
    d = h.shape[0]
    q = np.zeros(d)
    q[seed_index] = 1.0
    basis = [q]
    for _ in range(d - 1):
        w = h @ basis[-1]
        for _ in range(2):
            for b in basis:
                w = w - (b @ w) * b
        norm = np.linalg.norm(w)
        if norm < tol:
            break
        basis.append(w / norm)
    return np.array(basis).T


def asymptotic_detection(setup: QuantumSetup, init: InitialState) -> float:
    """Exact t -> infinity sink population: weight of the initial state outside the dark subspace."""
    keep = setup.system_nodes
    h = setup.hamiltonian[np.ix_(keep, keep)]
    q = _bright_basis(h, keep.index(setup.jump_target))
    psi = init.vector(setup)[keep]
    return float(np.sum(np.abs(q.T @ psi) ** 2))


def _marked(g: Graph, source: int) -> nx.Graph:
    nxg = nx.Graph()
    nxg.add_nodes_from(range(g.n))
    nxg.add_edges_from(g.edges)
    for v in range(g.n):
        nxg.nodes[v]["mark"] = "target" if v == g.target else ("source" if v == source else "")
    return nxg


def detection_bound(g: Graph) -> float:
    """1 / n_init, where n_init is the orbit size of the initial node under
    graph automorphisms that fix the target."""
    ref = _marked(g, g.initial)
    same = lambda a, b: a["mark"] == b["mark"]  # noqa: E731
    orbit = 1
    for v in range(g.n):
        if v in (g.initial, g.target):
            continue
        if GraphMatcher(ref, _marked(g, v), node_match=same).is_isomorphic():
            orbit += 1
    return 1.0 / orbit


# -- per-walker hitting steps used for labeling ---------------------------------


@dataclass(frozen=True)
class SimConfig:
    gamma: float = 1.0
    dt: float = 0.01
    t_max: float = 1000.0
    p_th: float | None = None
    method: str = "effective"

    def threshold(self, n: int) -> float:
        return self.p_th if self.p_th is not None else threshold_for(n)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "dt": self.dt, "t_max": self.t_max, "p_th": self.p_th, "method": self.method}


def walker_hitting_steps(g: Graph, walker: str, cfg: SimConfig) -> float:
    """Hitting step of one walker on ``g`` (INF if not reached by t_max).

    Stops as soon as the threshold is crossed. Quantum walks whose
    asymptotic detection probability is below the threshold are reported
    INF without propagating.
    """
    p_th = cfg.threshold(g.n)
    if walker == "ctrw":
        res = evolve_classical(build_classical_operator(g), cfg.t_max, cfg.dt, stop_at=p_th)
    elif walker in ("ctqw", "ctqw_t"):
        setup = build_quantum_setup(g, cfg.gamma, superposition=walker == "ctqw_t")
        init = InitialState("tstate" if walker == "ctqw_t" else "node0")
        if asymptotic_detection(setup, init) < p_th - 1e-12:
            return INF
        res = evolve_quantum(setup, init, cfg.t_max, cfg.dt, method=cfg.method, stop_at=p_th)
    else:
        raise ValueError(f"unknown walker {walker!r}; expected one of {WALKERS}")
    return hitting_time(res, p_th)[1]
