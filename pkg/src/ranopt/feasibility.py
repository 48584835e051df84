"""Max-min link throughput and the minimum feasible delay bound.

The delay bound D_c admits a feasible operating point iff every link can
sustain throughput above 1/D_c, so the smallest workable bound is the
reciprocal of the max-min throughput.  The max-min program is solved in
log domain (maximize a floor variable under floor <= log x_ij), which is
convex; a brute-force grid search over the same objective serves as an
independent oracle on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TopologyError
from .interior import LinkStructure, barrier_minimize
from .topology import NetworkTopology

P_FLOOR = 1e-9
BRUTE_FORCE_MAX_VARS = 6
_CHUNK = 2_000_000


@dataclass
class FeasibilityReport:
    """Optimal probabilities and the throughput floor they certify."""

    p: np.ndarray
    x_star: float
    z_star: float
    min_dc: float
    iterations: int
    gap: float

    def min_throughput(self, topology: NetworkTopology) -> float:
        struct = LinkStructure(topology)
        return float(np.min(np.exp(_safe_log_throughput(struct, self.p))))


def maxmin_throughput(topology: NetworkTopology, tol: float = 1e-6) -> FeasibilityReport:
    """Maximize the minimum link throughput over persistence probabilities.

    Returns a report whose x_star is within tol (log scale) of the optimum.
    """
    if topology.num_links == 0:
        raise TopologyError("topology has no links")
    struct = LinkStructure(topology)
    m = struct.m
    caps = [struct.out_links[k] for k in struct.transmitters]

    def constraint_fn(v):
        t, p = v[0], v[1:]
        P = struct.node_totals(p)
        if np.any(p <= P_FLOOR) or np.any(P >= 1.0):
            return None
        logx = struct.log_throughput(p, P)
        rows_p = struct.neglogx_rows(p, P)
        K = m + m + len(caps)
        g = np.empty(K)
        rows = np.zeros((K, 1 + m))
        g[:m] = t - logx
        rows[:m, 0] = 1.0
        rows[:m, 1:] = rows_p
        g[m:2 * m] = P_FLOOR - p
        rows[np.arange(m, 2 * m), np.arange(1, 1 + m)] = -1.0
        for ci, idx in enumerate(caps):
            g[2 * m + ci] = P[struct.transmitters[ci]] - 1.0
            rows[2 * m + ci, 1 + idx] = 1.0
        return g, rows

    def hess_extra_fn(v, w):
        p = v[1:]
        P = struct.node_totals(p)
        H = np.zeros((1 + m, 1 + m))
        H[1:, 1:] = struct.weighted_neglogx_hess(p, P, w[:m])
        return H

    p0 = np.array([0.5 / len(struct.out_links[struct.tx[li]]) for li in range(m)])
    P0 = struct.node_totals(p0)
    t0_floor = float(np.min(struct.log_throughput(p0, P0))) - 1.0
    v0 = np.concatenate([[t0_floor], p0])
    objective = np.zeros(1 + m)
    objective[0] = -1.0

    num_constraints = 2 * m + len(caps)
    comp_tol = tol / num_constraints
    v, _, iters, t_final = barrier_minimize(
        v0, objective, constraint_fn, hess_extra_fn, comp_tol=comp_tol)

    p_star = _polish(struct, v[1:])
    x_star = float(np.min(np.exp(_safe_log_throughput(struct, p_star))))
    return FeasibilityReport(
        p=p_star,
        x_star=x_star,
        z_star=math.log(x_star),
        min_dc=1.0 / x_star,
        iterations=iters,
        gap=num_constraints / t_final,
    )


def _polish(struct: LinkStructure, p: np.ndarray) -> np.ndarray:
    """Snap near-saturated nodes to exact probability bounds when that helps.

    The barrier keeps iterates strictly interior; when a node's optimal total
    sits on P_i = 1 (a lone uncontended transmitter), scaling its links onto
    the bound recovers the exact corner value.
    """
    P = struct.node_totals(p)
    best = p
    best_val = np.min(struct.log_throughput(p, P))
    cand = p.copy()
    for k in struct.transmitters:
        if P[k] > 1.0 - 1e-5:
            cand[struct.out_links[k]] *= 1.0 / P[k]
    cand = np.minimum(cand, 1.0)
    Pc = struct.node_totals(cand)
    if np.all(Pc <= 1.0) and np.all(cand > 0):
        val = np.min(_safe_log_throughput(struct, cand))
        if val > best_val:
            best = cand
    return best


def _safe_log_throughput(struct: LinkStructure, p: np.ndarray) -> np.ndarray:
    """log x allowing exact 0/1 entries (yields -inf where throughput is zero)."""
    P = struct.node_totals(p)
    with np.errstate(divide="ignore"):
        log1mP = np.log1p(-np.minimum(P, 1.0))
        out = np.log(p) + struct.log_cap
    for li, nodes in enumerate(struct.coll_nodes):
        out[li] += log1mP[nodes].sum()
    return out


def min_delay_constraint(topology: NetworkTopology, tol: float = 1e-6) -> float:
    """Smallest delay bound for which the constrained problem stays feasible."""
    return maxmin_throughput(topology, tol).min_dc


def brute_force_maxmin(topology: NetworkTopology, grid_resolution: float,
                       refine_rounds: int = 0) -> FeasibilityReport:
    """Exhaustive grid search over link probabilities (testing oracle).

    Enumerates every combination of per-link probabilities on a uniform grid,
    discards combinations with a node total above one, and returns the best
    grid point.  Optional refine_rounds re-grids locally around the incumbent
    with a 4x finer step each round (still pure enumeration).
    """
    struct = LinkStructure(topology)
    m = struct.m
    if m > BRUTE_FORCE_MAX_VARS:
        raise ValueError(
            f"brute force supports at most {BRUTE_FORCE_MAX_VARS} links, got {m}")
    axes = [np.arange(0.0, 1.0 + grid_resolution / 2, grid_resolution)] * m
    best_p, best_val, evaluated = _grid_scan(struct, axes)
    res = grid_resolution
    for _ in range(refine_rounds):
        res /= 4.0
        axes = [np.clip(np.arange(c - 5 * res, c + 5 * res + res / 2, res), 0.0, 1.0)
                for c in best_p]
        p, val, n = _grid_scan(struct, axes)
        evaluated += n
        if val > best_val:
            best_p, best_val = p, val
    x_star = float(best_val)
    return FeasibilityReport(
        p=best_p,
        x_star=x_star,
        z_star=math.log(x_star) if x_star > 0 else -math.inf,
        min_dc=1.0 / x_star if x_star > 0 else math.inf,
        iterations=evaluated,
        gap=res,
    )


def _grid_scan(struct: LinkStructure, axes: list[np.ndarray]):
    sizes = np.array([len(a) for a in axes], dtype=np.int64)
    total = int(np.prod(sizes))
    strides = np.ones(len(axes), dtype=np.int64)
    for k in range(len(axes) - 2, -1, -1):
        strides[k] = strides[k + 1] * sizes[k + 1]
    best_val = -1.0
    best_p = None
    caps = np.exp(struct.log_cap)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        p = np.empty((len(idx), struct.m))
        for k in range(struct.m):
            p[:, k] = axes[k][(idx // strides[k]) % sizes[k]]
        P = np.zeros((len(idx), struct.n))
        for k in struct.transmitters:
            P[:, k] = p[:, struct.out_links[k]].sum(axis=1)
        feasible = np.all(P <= 1.0 + 1e-12, axis=1)
        if not feasible.any():
            continue
        p, P = p[feasible], np.minimum(P[feasible], 1.0)
        minx = np.full(len(p), np.inf)
        for li in range(struct.m):
            x = caps[li] * p[:, li] * np.prod(1.0 - P[:, struct.coll_nodes[li]], axis=1)
            np.minimum(minx, x, out=minx)
        k = int(np.argmax(minx))
        if minx[k] > best_val:
            best_val = float(minx[k])
            best_p = p[k].copy()
    return best_p, best_val, total
