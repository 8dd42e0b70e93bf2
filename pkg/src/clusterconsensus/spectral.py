"""Symmetric eigenanalysis and the convergence-rate certificate.

The eigensolver is a cyclic Jacobi rotation scheme.  With numba available
the classic row-cyclic ordering runs compiled; the numpy fallback applies
round-robin batches of disjoint rotations as vectorised row/column updates.
Both stop on the same off-diagonal Frobenius criterion.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import graph_core
from ._accel import HAS_NUMBA, njit
from .graph_core import ClusterGraph, GraphError

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
OFFDIAG_RTOL = 1e-12
ZERO_EIG_TOL = 1e-9

SIGMA2_CONVENTIONS = ("full", "nonzero", "aggregate")


class SpectralError(ValueError):
    """Bad input to a spectral routine (non-symmetric, not a Laplacian, ...)."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    matrix_dim: int
    sweeps: int = 0

    def __len__(self):
        return self.matrix_dim

    def __getitem__(self, i):
        return self.eigenvalues[i]


# --- Jacobi kernels ---------------------------------------------------------


@njit(cache=True)
def _jacobi_cyclic(a, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if math.sqrt(2.0 * off) <= tol:
            return sweep, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
    return max_sweeps, False


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Circle-method schedule: n-1 rounds (n padded to even) of disjoint pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            ps, qs = zip(*pairs)
            rounds.append((np.array(ps), np.array(qs)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _jacobi_batched(a: np.ndarray, tol: float, max_sweeps: int) -> tuple[int, bool]:
    n = a.shape[0]
    schedule = _round_robin(n)
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps):
        if math.sqrt(2.0 * np.sum(a[iu] ** 2)) <= tol:
            return sweep, True
        for p, q in schedule:
            apq = a[p, q]
            nz = apq != 0.0
            if not nz.any():
                continue
            p, q, apq = p[nz], q[nz], apq[nz]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
    return max_sweeps, False


def _as_square(m) -> np.ndarray:
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SpectralError("matrix has non-finite entries")
    return a


def eigenvalues_symmetric(m, *, use_numba: bool | None = None) -> Spectrum:
    """All eigenvalues of a symmetric matrix, ascending."""
    a = _as_square(m)
    n = a.shape[0]
    if n == 0:
        return Spectrum(np.empty(0), 0)
    asym = np.max(np.abs(a - a.T))
    if asym > SYMMETRY_TOL:
        raise SpectralError(f"matrix is not symmetric (max |a_ij - a_ji| = {asym:.3g})")
    a = 0.5 * (a + a.T)
    tol = OFFDIAG_RTOL * np.linalg.norm(a)
    max_sweeps = 100 * n * n
    if use_numba is None:
        use_numba = HAS_NUMBA
    kernel = _jacobi_cyclic if use_numba else _jacobi_batched
    sweeps, ok = kernel(a, tol, max_sweeps)
    if not ok:
        raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    return Spectrum(np.sort(np.diag(a).copy()), n, int(sweeps))


def spectral_norm(m) -> float:
    """Largest eigenvalue of a symmetric PSD matrix (its 2-norm)."""
    ev = eigenvalues_symmetric(m).eigenvalues
    if ev.size == 0:
        return 0.0
    return float(max(ev[-1], 0.0))


def _check_laplacian(L: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(L)))) if L.size else 1.0
    rows = np.max(np.abs(L.sum(axis=1))) if L.size else 0.0
    if rows > 1e-9 * scale * max(1, L.shape[0]):
        raise SpectralError(f"not a Laplacian: row sums up to {rows:.3g}")


def _snap_zero(ev: np.ndarray, scale: float) -> np.ndarray:
    ev = ev.copy()
    ev[np.abs(ev) <= ZERO_EIG_TOL * max(1.0, scale)] = 0.0
    return ev


def laplacian_spectrum(L) -> np.ndarray:
    """Ascending Laplacian eigenvalues with round-off zeros snapped to 0."""
    L = _as_square(L)
    _check_laplacian(L)
    ev = eigenvalues_symmetric(L).eigenvalues
    if ev.size and ev[0] < -ZERO_EIG_TOL * max(1.0, abs(ev[-1])):
        raise SpectralError(f"not a Laplacian: negative eigenvalue {ev[0]:.3g}")
    return _snap_zero(ev, abs(ev[-1]) if ev.size else 1.0)


def algebraic_connectivity(L) -> float:
    """Second-smallest Laplacian eigenvalue (0.0 for a single vertex)."""
    ev = laplacian_spectrum(L)
    return float(ev[1]) if ev.size > 1 else 0.0


def aggregate_laplacian(L_external: np.ndarray, U: np.ndarray) -> np.ndarray:
    """r-by-r matrix ``U^T L_E U``: Laplacian of the cluster-level multigraph."""
    return U.T @ L_external @ U


def sigma2_external_all(L_external: np.ndarray, U: np.ndarray) -> dict[str, float]:
    """σ₂ of the external Laplacian under each supported convention."""
    ev = laplacian_spectrum(L_external)
    nonzero = ev[ev > 0.0]
    agg = laplacian_spectrum(aggregate_laplacian(L_external, U))
    return {
        "full": float(ev[1]) if ev.size > 1 else 0.0,
        "nonzero": float(nonzero[0]) if nonzero.size else 0.0,
        "aggregate": float(agg[1]) if agg.size > 1 else 0.0,
    }


def membership_matrix(graph: ClusterGraph) -> np.ndarray:
    U = np.zeros((graph.n_nodes, graph.n_clusters))
    offsets = graph.offsets
    for a in range(graph.n_clusters):
        U[offsets[a]:offsets[a + 1], a] = 1.0
    return U


# --- rate certificate ---------------------------------------------------------


def assumption2_rhs(norm_external: float, sigma2_external: float, n_min: int, n_max: int) -> float:
    if sigma2_external <= 0.0:
        return math.inf
    return 2.0 * norm_external**2 * n_max**2 / (sigma2_external * n_min**2)


def epsilon_value(norm_external: float, sigma2_external: float, n_min: int, n_max: int) -> float:
    if sigma2_external <= 0.0 or norm_external <= 0.0:
        return 0.0
    return n_min * sigma2_external / (2.0 * n_max**2 * norm_external)


def rate_value(sigma2_external: float, n_min: int, n_max: int) -> float:
    return max(sigma2_external, 0.0) * n_min / (2.0 * n_max)


@dataclass
class RateReport:
    sigma2_external: float
    norm_external: float
    min_sigma2_internal: float
    assumption2_rhs: float
    assumption2_holds: bool
    epsilon: float
    rate: float
    n_min: int
    n_max: int
    convention: str = "full"
    rate_defined: bool = True
    sigma2_conventions: dict = field(default_factory=dict)
    sigma2_internal: list = field(default_factory=list)
    external_connected: bool = True
    connectivity_mode: str = "aggregate"
    n_nodes: int = 0
    n_clusters: int = 0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else "-inf"
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [clean(x) for x in v]
            return v

        return {k: clean(v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RateReport":
        def unclean(v):
            if v == "inf":
                return math.inf
            if v == "-inf":
                return -math.inf
            if isinstance(v, dict):
                return {k: unclean(x) for k, x in v.items()}
            if isinstance(v, list):
                return [unclean(x) for x in v]
            return v

        return cls(**{k: unclean(v) for k, v in d.items()})


def analyze(
    graph: ClusterGraph,
    convention: str = "full",
    *,
    sigma2_override: float | None = None,
    connectivity_mode: str = "aggregate",
) -> RateReport:
    """Evaluate the cluster-structure condition, ε and the decay rate for ``graph``.

    ``sigma2_override`` replaces σ₂(L_E) by a given value (convention is then
    reported as ``"override"``); all three computed conventions are still
    listed in ``sigma2_conventions``.
    """
    if convention not in SIGMA2_CONVENTIONS:
        raise ValueError(f"sigma2 convention must be one of {SIGMA2_CONVENTIONS}")
    graph_core.check(graph)
    disconnected = [a for a, ok in enumerate(graph_core.clusters_connected(graph)) if not ok]
    if disconnected:
        raise GraphError(f"clusters {disconnected} are not internally connected")

    _, _, L_ext = graph_core.laplacian(graph)
    U = membership_matrix(graph)
    warnings = []

    # singleton clusters have no fast subspace; they impose no internal constraint
    sigma2_int = [
        algebraic_connectivity(block) if block.shape[0] > 1 else math.inf
        for block in graph_core.internal_blocks(graph)
    ]
    min_int = min(sigma2_int)

    conventions = sigma2_external_all(L_ext, U)
    norm_ext = spectral_norm(L_ext)
    if sigma2_override is not None:
        sigma2 = float(sigma2_override)
        used = "override"
    else:
        sigma2 = conventions[convention]
        used = convention
    ext_ok = graph_core.external_connected(graph, connectivity_mode)
    if not ext_ok:
        warnings.append(f"external graph is not connected ({connectivity_mode} check)")

    n_min, n_max = graph.n_min, graph.n_max
    defined = sigma2 > 0.0
    if not defined:
        msg = f"rate undefined: sigma2(L_E) = 0 under the {used!r} convention; certification skipped"
        warnings.append(msg)
        log.warning(msg)
    rhs = assumption2_rhs(norm_ext, sigma2, n_min, n_max)
    return RateReport(
        sigma2_external=sigma2,
        norm_external=norm_ext,
        min_sigma2_internal=min_int,
        assumption2_rhs=rhs,
        assumption2_holds=bool(defined and min_int >= rhs),
        epsilon=epsilon_value(norm_ext, sigma2, n_min, n_max),
        rate=rate_value(sigma2, n_min, n_max),
        n_min=n_min,
        n_max=n_max,
        convention=used,
        rate_defined=defined,
        sigma2_conventions=conventions,
        sigma2_internal=sigma2_int,
        external_connected=ext_ok,
        connectivity_mode=connectivity_mode,
        n_nodes=graph.n_nodes,
        n_clusters=graph.n_clusters,
        warnings=warnings,
    )


def analyze_all(graph: ClusterGraph, **kwargs) -> dict[str, RateReport]:
    """One report per σ₂ convention."""
    return {c: analyze(graph, c, **kwargs) for c in SIGMA2_CONVENTIONS}
