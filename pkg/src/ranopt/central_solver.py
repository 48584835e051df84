"""Centralized solver for the scalarized energy/utility program.

In variables (z, p) with z = log r the program

    minimize    lam1 * sum_i e_i P_i  -  lam2 * sum_ij z_ij
    subject to  log(1/D_c + e^z (1 - 1/(2 D_c))) <= log x_ij(p)   per link
                p_floor <= p_ij,  P_i <= 1,  z in [z_floor, log c_max]

is convex; a log-barrier interior-point method with damped Newton inner
iterations drives it to a KKT-certified optimum.  Multiplier estimates come
from the barrier identity mu_k = 1/(t * slack_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, InfeasibleError
from .feasibility import FeasibilityReport, maxmin_throughput
from .interior import LinkStructure, barrier_minimize, refine_multipliers
from .perf_model import PrimalState, energy as total_energy, scalar_cost, utility as total_utility
from .topology import NetworkTopology


@dataclass
class SolverConfig:
    """Weights, delay bound, and solver knobs for one scalarized solve."""

    lam1: float
    lam2: float
    d_c: float
    margin: float = 1e-9          # delay constraints enforced as residual <= -margin
    kkt_tol: float = 1e-6
    max_iter: int = 100           # Newton iteration cap per barrier stage
    barrier_t0: float = 10.0
    barrier_mu: float = 30.0
    p_floor: float = 1e-9
    rate_floor: float = 1e-9

    def __post_init__(self):
        if self.lam1 < 0 or self.lam2 < 0 or (self.lam1 == 0 and self.lam2 == 0):
            raise ValueError("lam1, lam2 must be nonnegative and not both zero")
        if self.d_c <= 1:
            raise ValueError(f"delay bound must exceed one slot, got {self.d_c}")


@dataclass
class KKTResidual:
    stationarity: float
    feasibility: float
    complementarity: float

    def within(self, tol: float) -> bool:
        return max(self.stationarity, self.feasibility, self.complementarity) <= tol


@dataclass
class SolveReport:
    """Optimal point with its certificate and bookkeeping."""

    state: PrimalState
    energy: float
    utility: float
    cost: float
    residuals: np.ndarray          # per-link delay residuals (<= -margin at optimum)
    multipliers: np.ndarray        # per-link delay multipliers
    node_multipliers: dict[int, float]  # multipliers of the P_i <= 1 caps
    kkt: KKTResidual
    iterations: int
    status: str = "optimal"
    min_dc: float = math.nan
    config: SolverConfig | None = field(default=None, repr=False)


@dataclass
class TradeoffPoint:
    dc: float
    lam1: float
    lam2: float
    energy: float
    utility: float
    cost: float
    iterations: int
    status: str


def solve(topology: NetworkTopology, config: SolverConfig,
          feasibility: FeasibilityReport | None = None) -> SolveReport:
    """Solve the scalarized program to KKT-certified optimality.

    Args:
        topology: validated network
        config: weights, delay bound, tolerances
        feasibility: optional precomputed max-min report (skips recomputation)

    Raises:
        InfeasibleError: the delay bound is at or below the minimum feasible one.
        ConvergenceError: the barrier finished without meeting the KKT tolerance.
    """
    struct = LinkStructure(topology)
    m = struct.m
    if feasibility is None:
        feasibility = maxmin_throughput(topology)
    if config.d_c <= feasibility.min_dc * (1 + 1e-9):
        raise InfeasibleError(
            f"delay bound {config.d_c} is not above the minimum feasible "
            f"{feasibility.min_dc:.6g}")

    a_coef = 1.0 - 1.0 / (2.0 * config.d_c)
    b_coef = 1.0 / config.d_c
    z_lo = math.log(config.rate_floor)
    z_hi = math.log(float(np.max(topology.capacities())))
    caps = [struct.out_links[k] for k in struct.transmitters]

    def split(v):
        return v[:m], v[m:]

    def constraint_fn(v):
        z, p = split(v)
        P = struct.node_totals(p)
        if (np.any(p <= config.p_floor) or np.any(P >= 1.0)
                or np.any(z <= z_lo) or np.any(z >= z_hi)):
            return None
        logx = struct.log_throughput(p, P)
        lhs = b_coef + a_coef * np.exp(z)
        sigma = a_coef * np.exp(z) / lhs
        K = m + 3 * m + len(caps)
        g = np.empty(K)
        rows = np.zeros((K, 2 * m))
        g[:m] = np.log(lhs) - logx + config.margin
        rows[np.arange(m), np.arange(m)] = sigma
        rows[:m, m:] = struct.neglogx_rows(p, P)
        g[m:2 * m] = z_lo - z
        rows[np.arange(m, 2 * m), np.arange(m)] = -1.0
        g[2 * m:3 * m] = z - z_hi
        rows[np.arange(2 * m, 3 * m), np.arange(m)] = 1.0
        g[3 * m:4 * m] = config.p_floor - p
        rows[np.arange(3 * m, 4 * m), np.arange(m, 2 * m)] = -1.0
        for ci, idx in enumerate(caps):
            g[4 * m + ci] = P[struct.transmitters[ci]] - 1.0
            rows[4 * m + ci, m + idx] = 1.0
        return g, rows

    def hess_extra_fn(v, w):
        z, p = split(v)
        P = struct.node_totals(p)
        lhs = b_coef + a_coef * np.exp(z)
        sigma = a_coef * np.exp(z) / lhs
        H = np.zeros((2 * m, 2 * m))
        H[np.arange(m), np.arange(m)] = w[:m] * sigma * (1.0 - sigma)
        H[m:, m:] = struct.weighted_neglogx_hess(p, P, w[:m])
        return H

    v0 = _initial_point(struct, config, feasibility, a_coef, b_coef, z_lo, z_hi)
    objective = np.concatenate([np.full(m, -config.lam2), config.lam1 * struct.link_energy])

    v, _, iters, _ = barrier_minimize(
        v0, objective, constraint_fn, hess_extra_fn,
        t0=config.barrier_t0, mu=config.barrier_mu,
        comp_tol=0.1 * config.kkt_tol, max_stage_iter=config.max_iter)

    z, p = split(v)
    state = PrimalState(topology, p, z)
    g, rows = constraint_fn(v)
    atol = 1e-5
    interior_cols = np.concatenate([
        (z > z_lo + atol) & (z < z_hi - atol),
        p > config.p_floor + atol,
    ])
    unknown = list(range(m)) + list(range(4 * m, 4 * m + len(caps)))
    refined = refine_multipliers(objective, g, rows, unknown, interior_cols)
    mu = refined[:m]
    node_mults = {topology.node_ids[struct.transmitters[ci]]: float(refined[m + ci])
                  for ci in range(len(caps))}
    P = struct.node_totals(p)
    residuals = (np.log(b_coef + a_coef * np.exp(z))
                 - struct.log_throughput(p, P))
    e_val = total_energy(topology, state)
    u_val = total_utility(state)
    report = SolveReport(
        state=state,
        energy=e_val,
        utility=u_val,
        cost=scalar_cost(config.lam1, config.lam2, e_val, u_val),
        residuals=residuals,
        multipliers=mu,
        node_multipliers=node_mults,
        kkt=kkt_residual(topology, state, mu, config, node_multipliers=node_mults),
        iterations=iters,
        min_dc=feasibility.min_dc,
        config=config,
    )
    if not report.kkt.within(config.kkt_tol):
        raise ConvergenceError(
            f"barrier finished with KKT residuals {report.kkt} above {config.kkt_tol}")
    return report


def _initial_point(struct, config, feasibility, a_coef, b_coef, z_lo, z_hi):
    """Strictly feasible interior start: moderate probabilities, half-slack rates."""
    m = struct.m
    p0 = np.array([0.5 / len(struct.out_links[struct.tx[li]]) for li in range(m)])
    P0 = struct.node_totals(p0)
    x0 = np.exp(struct.log_throughput(p0, P0))
    if np.min(x0) <= b_coef * (1 + 1e-6):
        # default start violates some delay constraint; fall back to the
        # max-min probabilities, nudged off their bounds
        p0 = np.clip(feasibility.p, 10 * config.p_floor, 1.0 - 1e-6)
        for k in struct.transmitters:
            idx = struct.out_links[k]
            total = p0[idx].sum()
            if total >= 1.0 - 1e-6:
                p0[idx] *= (1.0 - 1e-6) / total
        P0 = struct.node_totals(p0)
        x0 = np.exp(struct.log_throughput(p0, P0))
        if np.min(x0) <= b_coef:
            raise ConvergenceError(
                "could not construct a strictly feasible starting point; "
                "the delay bound is too close to the minimum feasible one")
    r0 = (x0 - b_coef) / (2.0 * a_coef)
    z0 = np.clip(np.log(np.maximum(r0, 1e-300)), z_lo + 1e-3, z_hi - 1e-3)
    return np.concatenate([z0, p0])


def kkt_residual(topology: NetworkTopology, state: PrimalState, multipliers,
                 config: SolverConfig, node_multipliers: dict[int, float] | None = None,
                 bound_atol: float = 1e-5) -> KKTResidual:
    """KKT residual norms of a candidate point with delay multipliers.

    Stationarity is the infinity norm of the Lagrangian gradient over interior
    variables only: coordinates within bound_atol of a box bound (or belonging
    to a node at its probability cap, when no cap multiplier is supplied) carry
    implicit bound multipliers and are excluded.
    """
    struct = LinkStructure(topology)
    m = struct.m
    mu = np.asarray(multipliers, dtype=float)
    if mu.shape != (m,):
        raise ValueError(f"expected {m} multipliers, got shape {mu.shape}")
    z, p = state.z, state.p
    P = struct.node_totals(p)
    a_coef = 1.0 - 1.0 / (2.0 * config.d_c)
    b_coef = 1.0 / config.d_c
    z_lo = math.log(config.rate_floor)
    z_hi = math.log(float(np.max(topology.capacities())))

    with np.errstate(divide="ignore"):
        logx = struct.log_throughput(p, np.minimum(P, 1 - 1e-300))
        lhs = b_coef + a_coef * np.exp(z)
        residuals = np.log(lhs) - logx
        sigma = a_coef * np.exp(z) / lhs
        grad_z = -config.lam2 + mu * sigma
        grad_p = config.lam1 * struct.link_energy + struct.neglogx_rows(p, P).T @ mu
    if node_multipliers:
        for i, nu in node_multipliers.items():
            k = struct.node_pos[i]
            grad_p[struct.out_links[k]] += nu

    interior_z = (z > z_lo + bound_atol) & (z < z_hi - bound_atol)
    interior_p = p > config.p_floor + bound_atol
    if not node_multipliers:
        at_cap = P > 1.0 - bound_atol
        for k in struct.transmitters:
            if at_cap[k]:
                interior_p[struct.out_links[k]] = False

    stat_terms = np.concatenate([
        np.abs(grad_z[interior_z]) if interior_z.any() else np.zeros(1),
        np.abs(grad_p[interior_p]) if interior_p.any() else np.zeros(1),
    ])
    stationarity = float(np.max(stat_terms))
    feasibility = float(max(
        np.max(residuals, initial=0.0),
        np.max(config.p_floor - p, initial=0.0),
        np.max(P - 1.0, initial=0.0),
        np.max(z_lo - z, initial=0.0),
        np.max(z - z_hi, initial=0.0),
        0.0,
    ))
    complementarity = float(np.max(np.abs(mu * residuals)))
    return KKTResidual(stationarity, feasibility, complementarity)


def sweep(topology: NetworkTopology, dc_values, lambda_pairs,
          base_config: SolverConfig | None = None) -> list[TradeoffPoint]:
    """Trace tradeoff curves: one solve per (D_c, lam1, lam2) combination.

    Points on each D_c curve come back sorted by lam1/lam2.  Individual solve
    failures are recorded in the point's status and do not stop the sweep.
    """
    feas = maxmin_throughput(topology)
    points = []
    for dc in dc_values:
        curve = []
        for lam1, lam2 in lambda_pairs:
            if base_config is not None:
                cfg = replace(base_config, lam1=lam1, lam2=lam2, d_c=dc)
            else:
                cfg = SolverConfig(lam1=lam1, lam2=lam2, d_c=dc)
            try:
                rep = solve(topology, cfg, feasibility=feas)
                curve.append(TradeoffPoint(dc, lam1, lam2, rep.energy, rep.utility,
                                           rep.cost, rep.iterations, rep.status))
            except (InfeasibleError, ConvergenceError, ValueError) as exc:
                status = "infeasible" if isinstance(exc, InfeasibleError) else "failed"
                curve.append(TradeoffPoint(dc, lam1, lam2, math.nan, math.nan,
                                           math.nan, 0, status))
        curve.sort(key=lambda tp: tp.lam1 / tp.lam2 if tp.lam2 > 0 else math.inf)
        points.extend(curve)
    return points
