"""Consensus dynamics on a clustered network and its two-time-scale split.

The state ``x`` is split into per-cluster means ``y`` (slow), deviations from
those means ``e_x`` (fast) and deviations of the means from their average
``e_y`` (inter-area).  :func:`integrate` runs fixed-step RK4 on
``dx/dt = -(L_I + L_E) x`` and attaches all derived traces.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import graph_core, spectral
from ._accel import HAS_NUMBA, njit
from .graph_core import ClusterGraph

ENVELOPE_RTOL = 1e-6
MONOTONE_RTOL = 1e-9
# V below n * (ROUNDOFF_ULPS * eps * max|x0|)^2 is float64 noise around consensus
ROUNDOFF_ULPS = 16.0


class IntegrationError(RuntimeError):
    """Step-size guard violated or the state blew up."""


@dataclass(frozen=True)
class Decomposition:
    U: np.ndarray
    P: np.ndarray
    W: np.ndarray
    W_r: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.diag(self.P)

    @property
    def P_inv(self) -> np.ndarray:
        return np.diag(1.0 / self.sizes)

    @property
    def n_nodes(self) -> int:
        return self.U.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.U.shape[1]


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def decomposition(graph: ClusterGraph | None = None, *, sizes=None) -> Decomposition:
    """Aggregation and centering matrices for a partition.

    Pass a graph, or just ``sizes=`` when no edges are involved.
    """
    if graph is not None:
        graph_core.check(graph)
        sizes = graph.cluster_sizes
    sizes = [int(n) for n in sizes]
    N, r = sum(sizes), len(sizes)
    U = np.zeros((N, r))
    W = np.zeros((N, N))
    start = 0
    for a, n in enumerate(sizes):
        U[start:start + n, a] = 1.0
        W[start:start + n, start:start + n] = centering_matrix(n)
        start += n
    return Decomposition(U=U, P=U.T @ U, W=W, W_r=centering_matrix(r))


def _check_len(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != n:
        raise ValueError(f"{what}: expected length {n}, got {v.shape[-1]}")
    return v


def slow_variable(x, d: Decomposition) -> np.ndarray:
    """Cluster means ``P^-1 U^T x``; accepts a single state or a (K, N) batch."""
    x = _check_len(x, d.n_nodes, "state")
    return (x @ d.U) / d.sizes


def fast_variable(x, d: Decomposition) -> np.ndarray:
    """Deviation of each node from its cluster mean, ``x - U y``."""
    x = _check_len(x, d.n_nodes, "state")
    return x - slow_variable(x, d) @ d.U.T


def inter_area_variable(y) -> np.ndarray:
    """Deviation of the cluster means from their plain average, ``W_r y``."""
    y = np.asarray(y, dtype=np.float64)
    return y - y.mean(axis=-1, keepdims=True)


def rhs_full(x, L_internal, L_external) -> np.ndarray:
    x = _check_len(x, L_internal.shape[0], "state")
    return -(L_internal @ x) - (L_external @ x)


def rhs_fast(e_x, y, d: Decomposition, L_internal, L_external) -> np.ndarray:
    e_x = _check_len(e_x, d.n_nodes, "fast variable")
    y = _check_len(y, d.n_clusters, "slow variable")
    W = d.W
    return -W @ (L_internal @ e_x) - W @ (L_external @ e_x) - W @ (L_external @ (d.U @ y))


def rhs_slow(e_x, y, d: Decomposition, L_external) -> np.ndarray:
    e_x = _check_len(e_x, d.n_nodes, "fast variable")
    y = _check_len(y, d.n_clusters, "slow variable")
    UtL = d.U.T @ L_external
    return -(UtL @ (d.U @ y)) / d.sizes - (UtL @ e_x) / d.sizes


def rhs_inter_area(e_y, e_x, d: Decomposition, L_external) -> np.ndarray:
    e_y = _check_len(e_y, d.n_clusters, "inter-area variable")
    e_x = _check_len(e_x, d.n_nodes, "fast variable")
    UtL = d.U.T @ L_external
    return -d.W_r @ ((UtL @ (d.U @ e_y)) / d.sizes) - d.W_r @ ((UtL @ e_x) / d.sizes)


# --- RK4 kernels ---------------------------------------------------------------


@njit(cache=True)
def _csr_neg_matvec(indptr, indices, data, x, out):
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = -acc


@njit(cache=True)
def _rk4_csr(indptr, indices, data, x0, dt, n_steps, every):
    n = x0.shape[0]
    n_out = n_steps // every + 1
    out = np.empty((n_out, n))
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    comp = np.zeros(n)
    out[0] = x
    row = 1
    for step in range(1, n_steps + 1):
        _csr_neg_matvec(indptr, indices, data, x, k1)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k1[i]
        _csr_neg_matvec(indptr, indices, data, tmp, k2)
        for i in range(n):
            tmp[i] = x[i] + 0.5 * dt * k2[i]
        _csr_neg_matvec(indptr, indices, data, tmp, k3)
        for i in range(n):
            tmp[i] = x[i] + dt * k3[i]
        _csr_neg_matvec(indptr, indices, data, tmp, k4)
        for i in range(n):
            inc = dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) - comp[i]
            t = x[i] + inc
            comp[i] = (t - x[i]) - inc
            x[i] = t
        if step % every == 0:
            out[row] = x
            row += 1
    return out


def _rk4_numpy(L: sp.csr_matrix, x0, dt, n_steps, every):
    n_out = n_steps // every + 1
    out = np.empty((n_out, x0.shape[0]))
    x = x0.copy()
    comp = np.zeros_like(x)
    out[0] = x
    row = 1
    for step in range(1, n_steps + 1):
        k1 = -(L @ x)
        k2 = -(L @ (x + 0.5 * dt * k1))
        k3 = -(L @ (x + 0.5 * dt * k2))
        k4 = -(L @ (x + dt * k3))
        inc = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4) - comp
        t = x + inc
        comp = (t - x) - inc
        x = t
        if step % every == 0:
            out[row] = x
            row += 1
    return out


def rk4_linear(L, x0, dt: float, n_steps: int, every: int = 1, *, use_numba: bool | None = None):
    """Fixed-step RK4 for ``dx/dt = -L x``; returns every ``every``-th state.

    The state update uses compensated (Kahan) summation so that accumulated
    round-off stays below the truncation error even for small steps.
    """
    L = sp.csr_matrix(np.asarray(L, dtype=np.float64))
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if use_numba is None:
        use_numba = HAS_NUMBA
    if use_numba:
        return _rk4_csr(
            L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data, x0, float(dt), int(n_steps), int(every)
        )
    return _rk4_numpy(L, x0, float(dt), int(n_steps), int(every))


# --- trajectories --------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    y: np.ndarray
    e_x: np.ndarray
    e_y: np.ndarray
    V_ey: np.ndarray
    V_ex: np.ndarray
    V: np.ndarray
    epsilon: float
    rate: float = 0.0
    dt: float = 0.0

    def __len__(self):
        return len(self.times)

    @property
    def ex_norm(self) -> np.ndarray:
        return np.linalg.norm(self.e_x, axis=1)

    @property
    def ey_norm(self) -> np.ndarray:
        return np.linalg.norm(self.e_y, axis=1)

    @property
    def envelope(self) -> np.ndarray:
        return np.exp(-self.rate * self.times) * self.V[0]

    def consensus_error(self) -> float:
        return float(np.linalg.norm(self.states[-1] - self.states[0].mean()))


def traces(states: np.ndarray, d: Decomposition, epsilon: float):
    y = slow_variable(states, d)
    e_x = states - y @ d.U.T
    e_y = inter_area_variable(y)
    V_ey = 0.5 * np.sum(e_y**2, axis=1)
    V_ex = 0.5 * np.sum(e_x**2, axis=1)
    return y, e_x, e_y, V_ey, V_ex, V_ey + epsilon * V_ex


def integrate(
    graph: ClusterGraph,
    x0,
    t_end: float,
    dt: float,
    epsilon: float | None = None,
    *,
    rate: float | None = None,
    report: spectral.RateReport | None = None,
    record_every: int = 1,
    use_numba: bool | None = None,
) -> Trajectory:
    """Integrate the consensus ODE and attach slow/fast/Lyapunov traces.

    ``epsilon`` and ``rate`` default to the values in ``report``, which in
    turn defaults to ``spectral.analyze(graph)``.
    """
    L, L_int, L_ext = graph_core.laplacian(graph)
    x0 = _check_len(x0, graph.n_nodes, "initial state")
    if not np.all(np.isfinite(x0)):
        raise IntegrationError("initial state has non-finite entries")
    if not dt > 0:
        raise IntegrationError(f"dt must be positive, got {dt}")
    norm = spectral.spectral_norm(L)
    if norm > 0 and dt > 1.0 / norm * (1 + 1e-12):
        raise IntegrationError(f"dt={dt} exceeds the stability guard 1/||L|| = {1.0 / norm:.6g}")
    if t_end < dt:
        raise IntegrationError(f"t_end={t_end} shorter than one step dt={dt}")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    if epsilon is None or rate is None:
        if report is None:
            report = spectral.analyze(graph)
        epsilon = report.epsilon if epsilon is None else epsilon
        rate = report.rate if rate is None else rate

    n_steps = int(round(t_end / dt))
    n_steps -= n_steps % record_every
    states = rk4_linear(L, x0, dt, n_steps, record_every, use_numba=use_numba)
    if not np.all(np.isfinite(states)):
        raise IntegrationError("non-finite state encountered")
    times = np.arange(states.shape[0]) * (dt * record_every)
    d = decomposition(graph)
    y, e_x, e_y, V_ey, V_ex, V = traces(states, d, float(epsilon))
    return Trajectory(
        times=times, states=states, y=y, e_x=e_x, e_y=e_y,
        V_ey=V_ey, V_ex=V_ex, V=V, epsilon=float(epsilon), rate=float(rate), dt=float(dt),
    )


@dataclass(frozen=True)
class EnvelopeVerdict:
    holds: bool
    worst_ratio: float
    first_violation_time: float | None
    monotone: bool
    rate: float = 0.0

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "worst_ratio": self.worst_ratio if math.isfinite(self.worst_ratio) else "inf",
            "first_violation_time": self.first_violation_time,
            "monotone": self.monotone,
            "rate": self.rate,
        }


def envelope_ratios(times, V, rate: float) -> np.ndarray:
    """``V(t) / (exp(-rate t) V(0))`` evaluated in log space."""
    V = np.asarray(V, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    V0 = V[0]
    ratios = np.zeros_like(V)
    pos = V > 0
    if V0 > 0:
        ratios[pos] = np.exp(np.log(V[pos]) - math.log(V0) + rate * times[pos])
    else:
        ratios[pos] = np.inf
    return ratios


def roundoff_floor(traj: Trajectory) -> float:
    """Smallest V the stored states can resolve.

    Node values are stored to relative precision eps, so deviations from the
    cluster and global means carry an absolute error of a few ulps of the
    largest initial value; V built from them is meaningless below this level.
    """
    if len(traj) == 0:
        return 0.0
    scale = float(np.max(np.abs(traj.states[0])))
    ulp = ROUNDOFF_ULPS * np.finfo(np.float64).eps * scale
    return traj.states.shape[1] * ulp * ulp * (1.0 + traj.epsilon)


def verify_envelope(traj: Trajectory, rate: float | None = None) -> EnvelopeVerdict:
    """Check ``V(t) <= exp(-rate t) V(0)`` on every sample, plus monotone decay.

    Samples where V has reached the roundoff floor count as converged for
    both checks.
    """
    rate = traj.rate if rate is None else float(rate)
    if rate < 0:
        raise ValueError("rate must be non-negative")
    V = traj.V
    floor = roundoff_floor(traj)
    resolved = V > floor
    ratios = np.where(resolved, envelope_ratios(traj.times, V, rate), 0.0)
    bad = np.flatnonzero(ratios > 1.0 + ENVELOPE_RTOL)
    monotone = bool(np.all((V[1:] <= V[:-1] * (1.0 + MONOTONE_RTOL)) | ~resolved[1:]))
    return EnvelopeVerdict(
        holds=bad.size == 0,
        worst_ratio=float(ratios.max()) if ratios.size else 0.0,
        first_violation_time=float(traj.times[bad[0]]) if bad.size else None,
        monotone=monotone,
        rate=rate,
    )


@dataclass(frozen=True)
class TimescaleMetrics:
    t_half_fast: float | None
    t_half_slow: float | None

    @property
    def two_time_scale(self) -> bool:
        if self.t_half_fast is None:
            return False
        return self.t_half_slow is None or self.t_half_fast < self.t_half_slow

    def to_dict(self) -> dict:
        return {
            "t_half_fast": self.t_half_fast if self.t_half_fast is not None else "not reached",
            "t_half_slow": self.t_half_slow if self.t_half_slow is not None else "not reached",
            "two_time_scale": self.two_time_scale,
        }


def _half_time(times, norms) -> float | None:
    hit = np.flatnonzero(norms <= 0.5 * norms[0])
    return float(times[hit[0]]) if hit.size else None


def timescale_metrics(traj: Trajectory) -> TimescaleMetrics:
    """First sample times at which ||e_x|| and ||e_y|| reach half their start."""
    ex, ey = traj.ex_norm, traj.ey_norm
    if ex[0] <= 0 or ey[0] <= 0:
        raise ValueError("half-life needs non-zero initial fast and inter-area norms")
    return TimescaleMetrics(_half_time(traj.times, ex), _half_time(traj.times, ey))


# --- Lyapunov bookkeeping ---------------------------------------------------------


@dataclass
class LyapunovMargins:
    """Derivative minus bound for the two Lyapunov inequalities, per sample."""

    inter_area: np.ndarray = field(default_factory=lambda: np.empty(0))
    fast: np.ndarray = field(default_factory=lambda: np.empty(0))


def lyapunov_margins(traj: Trajectory, graph: ClusterGraph) -> LyapunovMargins:
    """Evaluate, at every sample, derivative minus upper bound for

    dV_ey/dt <= -1/2 e_y' P^-1 A e_y + e_x' L_E e_x / (2 N_min)
    dV_ex/dt <= -e_x' W L_I e_x - 1/2 e_x' W L_E e_x + 1/2 e_y' A e_y

    with A = U' L_E U. A positive entry means the bound is violated there.
    """
    _, L_int, L_ext = graph_core.laplacian(graph)
    d = decomposition(graph)
    n_min = graph.n_min
    A = d.U.T @ L_ext @ d.U
    m3, m4 = [], []
    for ex, y, ey in zip(traj.e_x, traj.y, traj.e_y):
        dVey = ey @ rhs_inter_area(ey, ex, d, L_ext)
        bound3 = -0.5 * ey @ ((A @ ey) / d.sizes) + ex @ (L_ext @ ex) / (2.0 * n_min)
        dVex = ex @ rhs_fast(ex, y, d, L_int, L_ext)
        Wex = d.W @ ex
        bound4 = -Wex @ (L_int @ ex) - 0.5 * Wex @ (L_ext @ ex) + 0.5 * ey @ (A @ ey)
        m3.append(dVey - bound3)
        m4.append(dVex - bound4)
    return LyapunovMargins(np.array(m3), np.array(m4))


def derivative_residuals(traj: Trajectory, graph: ClusterGraph) -> dict[str, np.ndarray]:
    """Per interior sample, the max-abs gap between central differences of the
    recorded traces and the closed-form right-hand sides.

    Entry ``k`` belongs to ``traj.times[k + 1]``.
    """
    _, L_int, L_ext = graph_core.laplacian(graph)
    d = decomposition(graph)
    h = traj.times[1] - traj.times[0]
    out = {"e_x": [], "y": [], "e_y": []}
    for k in range(1, len(traj) - 1):
        ex, y, ey = traj.e_x[k], traj.y[k], traj.e_y[k]
        fd = {
            name: (series[k + 1] - series[k - 1]) / (2 * h)
            for name, series in (("e_x", traj.e_x), ("y", traj.y), ("e_y", traj.e_y))
        }
        out["e_x"].append(np.max(np.abs(fd["e_x"] - rhs_fast(ex, y, d, L_int, L_ext))))
        out["y"].append(np.max(np.abs(fd["y"] - rhs_slow(ex, y, d, L_ext))))
        out["e_y"].append(np.max(np.abs(fd["e_y"] - rhs_inter_area(ey, ex, d, L_ext))))
    return {k: np.array(v) for k, v in out.items()}


def derivative_errors(traj: Trajectory, graph: ClusterGraph) -> dict[str, float]:
    return {k: float(v.max()) if v.size else 0.0 for k, v in derivative_residuals(traj, graph).items()}


# --- CSV ------------------------------------------------------------------------


def csv_header(n_nodes: int, n_clusters: int) -> list[str]:
    return (
        ["t"]
        + [f"x_{i}" for i in range(n_nodes)]
        + [f"y_{a}" for a in range(n_clusters)]
        + ["ex_norm", "ey_norm", "V", "envelope"]
    )


def write_csv(traj: Trajectory, path: str | Path) -> None:
    n, r = traj.states.shape[1], traj.y.shape[1]
    cols = np.column_stack(
        [traj.times, traj.states, traj.y, traj.ex_norm, traj.ey_norm, traj.V, traj.envelope]
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(n, r))
        for row in cols:
            w.writerow([format(float(v), ".17g") for v in row])


@dataclass
class CsvTrace:
    times: np.ndarray
    states: np.ndarray
    y: np.ndarray
    ex_norm: np.ndarray
    ey_norm: np.ndarray
    V: np.ndarray
    envelope: np.ndarray


def read_csv(path: str | Path) -> CsvTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x_"))
    r = sum(1 for h in header if h.startswith("y_"))
    if header != csv_header(n, r):
        raise ValueError("unexpected trajectory CSV header")
    data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    return CsvTrace(
        times=data[:, 0],
        states=data[:, 1:1 + n],
        y=data[:, 1 + n:1 + n + r],
        ex_norm=data[:, -4],
        ey_norm=data[:, -3],
        V=data[:, -2],
        envelope=data[:, -1],
    )


def check_csv_trace(
    trace: CsvTrace, sizes, epsilon: float, rate: float, tol: float = 1e-10
) -> list[str]:
    """Re-derive every column from the parsed states; list all mismatches."""
    problems = []
    d = decomposition(sizes=sizes)
    if trace.states.shape[1] != d.n_nodes or trace.y.shape[1] != d.n_clusters:
        return ["CSV dimensions do not match the cluster sizes"]
    steps = np.diff(trace.times)
    if steps.size and (np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, trace.times[-1])):
        problems.append("time grid is not ascending and uniform")
    y, e_x, e_y, _, _, V = traces(trace.states, d, epsilon)
    scale = max(1.0, float(np.max(np.abs(trace.states))))
    checks = {
        "y": (y, trace.y),
        "ex_norm": (np.linalg.norm(e_x, axis=1), trace.ex_norm),
        "ey_norm": (np.linalg.norm(e_y, axis=1), trace.ey_norm),
        "V": (V, trace.V),
        "envelope": (np.exp(-rate * trace.times) * trace.V[0], trace.envelope),
    }
    for name, (want, got) in checks.items():
        gap = float(np.max(np.abs(want - got))) if want.size else 0.0
        if gap > tol * scale * scale:
            problems.append(f"{name}: max deviation {gap:.3g}")
    recon = float(np.max(np.abs(e_x + y @ d.U.T - trace.states)))
    if recon > tol * scale:
        problems.append(f"reconstruction x = U y + e_x off by {recon:.3g}")
    drift = float(np.max(np.abs(trace.states.mean(axis=1) - trace.states[0].mean())))
    if drift > 1e-9 * scale:
        problems.append(f"average drifted by {drift:.3g}")
    return problems
