"""Distributed dual-decomposition solver.

Each link carries a nonnegative price on its delay constraint.  In
synchronous rounds, every node learns the prices of links that require its
silence (one hop of message exchange), picks rates and transmission
probabilities that minimize the Lagrangian locally, and then every link
takes a subgradient step on its price.  The fixed point of these updates
satisfies the KKT conditions of the centralized program.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .central_solver import SolveReport
from .errors import ConvergenceError
from .interior import LinkStructure
from .perf_model import RATE_FLOOR
from .topology import NetworkTopology

EPS_P = 1e-6
#: stand-in for log(lhs) - log(0) when a link's throughput collapses to zero
ZERO_THROUGHPUT_RESIDUAL = 100.0


@dataclass
class DistConfig:
    """Step size, starting point, and stopping rules for the distributed run."""

    lam1: float
    lam2: float
    d_c: float
    alpha: float = 0.01
    p_init: float = 0.1
    mu_init: float | None = None    # defaults to 2 * lam2
    max_iters: int = 500
    threshold: float = 0.01         # relative cost error vs reference
    eps_p: float = EPS_P

    def __post_init__(self):
        if self.lam1 < 0 or self.lam2 < 0 or (self.lam1 == 0 and self.lam2 == 0):
            raise ValueError("lam1, lam2 must be nonnegative and not both zero")
        if self.d_c <= 1:
            raise ValueError(f"delay bound must exceed one slot, got {self.d_c}")
        if self.alpha < 0:
            raise ValueError(f"step size must be nonnegative, got {self.alpha}")
        if self.mu_init is None:
            self.mu_init = 2.0 * self.lam2
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")


@dataclass
class Trace:
    """Per-round history of a distributed run.

    Row 0 is the initial state; row k the state after round k.  cost_err_pct
    is NaN when no reference was supplied.
    """

    topology: NetworkTopology = field(repr=False)
    config: DistConfig
    cost: np.ndarray
    p: np.ndarray
    r: np.ndarray
    mu: np.ndarray
    residual: np.ndarray
    max_violation: np.ndarray
    cost_err_pct: np.ndarray
    converged_iteration: int | None
    reference_cost: float | None

    @property
    def rounds(self) -> int:
        return len(self.cost) - 1

    def final(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(p, r, mu) after the last completed round."""
        return self.p[-1], self.r[-1], self.mu[-1]


def rate_update(mu, lam2: float, d_c: float, capacity):
    """Rate from the link's own price: lam2 / ((mu - lam2)(D_c - 0.5)).

    Prices at or below lam2 cannot bound the rate (the formula has a pole
    there), so the rate is capped at the link capacity; values are clamped
    into [RATE_FLOOR, capacity].  Accepts scalars or arrays.
    """
    if d_c <= 0.5:
        raise ValueError(f"delay bound must exceed 0.5 slots, got {d_c}")
    mu_arr = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = lam2 / ((mu_arr - lam2) * (d_c - 0.5))
    r = np.where(mu_arr > lam2, value, capacity)
    r = np.clip(r, RATE_FLOOR, capacity)
    return float(r) if np.isscalar(mu) else r


def node_prob_update(m_out: float, s_interfering: float, lam1: float,
                     energy: float, eps_p: float = EPS_P) -> float:
    """Total transmission probability of a node from aggregated prices.

    Solves a*P^2 - b*P + c = 0 with a = lam1*e_i, b = a + S_i + M_i, c = M_i,
    taking the root in [0, 1): the polynomial is c >= 0 at P=0 and -S_i <= 0
    at P=1, so the smaller root is the valid one.  Degenerates to the linear
    solution c/b when lam1*e_i = 0, and to 0 when all prices vanish.
    """
    a = lam1 * energy
    b = a + s_interfering + m_out
    c = m_out
    if b <= 0.0:
        return 0.0
    disc = max(b * b - 4.0 * a * c, 0.0)
    root = 2.0 * c / (b + math.sqrt(disc))
    return min(max(root, 0.0), 1.0 - eps_p)


def link_prob_update(mu: float, lam1: float, energy: float, s_interfering: float,
                     p_total: float, eps_p: float = EPS_P) -> float:
    """Per-link probability mu / (lam1*e_i + S_i/(1-P_i)), clamped to (0, 1).

    Before clamping, these values sum over a node's links to exactly the
    node total produced by node_prob_update.
    """
    denom = lam1 * energy + s_interfering / (1.0 - p_total)
    if denom <= 0.0:
        return 1.0 - eps_p
    return min(max(mu / denom, eps_p), 1.0 - eps_p)


def dual_update(mu: float, r: float, x: float, d_c: float, alpha: float) -> float:
    """Projected subgradient step on a link price.

    The step direction is the log-domain constraint residual
    log((1 - 1/(2 D_c)) r + 1/D_c) - log(x): positive (price rises) when the
    delay constraint is violated, negative when slack.
    """
    residual = _dual_residual(r, x, d_c)
    return max(mu + alpha * residual, 0.0)


def _dual_residual(r, x, d_c):
    lhs = (1.0 - 1.0 / (2.0 * d_c)) * np.asarray(r) + 1.0 / d_c
    with np.errstate(divide="ignore"):
        res = np.where(np.asarray(x) > 0.0,
                       np.log(lhs) - np.log(np.maximum(x, 1e-300)),
                       ZERO_THROUGHPUT_RESIDUAL)
    return float(res) if np.isscalar(r) else res


def run(topology: NetworkTopology, config: DistConfig,
        reference: SolveReport | float | None = None) -> Trace:
    """Execute synchronous rounds until convergence or the iteration cap.

    Round k: every node gathers the previous round's prices for the links it
    silences, rates are refreshed from those prices, each node solves its
    probability quadratic and splits the total over its links, and finally
    every price takes a subgradient step evaluated at the new (r, x).

    With a reference solution, the run stops at the first round whose cost
    is within config.threshold relative error of the reference cost.

    Raises:
        ConvergenceError: the cost magnitude exceeded 10x its initial value.
    """
    struct = LinkStructure(topology)
    m = struct.m
    caps = topology.capacities()
    energies = np.array([topology.energy[i] for i in topology.node_ids])
    ref_cost = None
    if reference is not None:
        ref_cost = reference.cost if isinstance(reference, SolveReport) else float(reference)

    mu = np.full(m, float(config.mu_init))
    p = np.full(m, float(config.p_init))
    r = rate_update(mu, config.lam2, config.d_c, caps)

    def throughput(pvec, Pvec):
        x = caps * pvec
        for li, nodes in enumerate(struct.coll_nodes):
            x[li] *= np.prod(1.0 - Pvec[nodes])
        return x

    def cost_of(pvec, rvec):
        return float(config.lam1 * (energies[struct.tx] * pvec).sum()
                     - config.lam2 * np.log(rvec).sum())

    P = struct.node_totals(p)
    x = throughput(p, P)
    res = _dual_residual(r, x, config.d_c)

    hist_cost = [cost_of(p, r)]
    hist_p, hist_r, hist_mu, hist_res = [p.copy()], [r.copy()], [mu.copy()], [res.copy()]
    baseline = abs(hist_cost[0]) if hist_cost[0] != 0.0 else 1.0
    converged = None

    for it in range(1, config.max_iters + 1):
        prices = mu  # published prices from the previous round
        r = rate_update(prices, config.lam2, config.d_c, caps)
        P = np.zeros(struct.n)
        p = np.empty(m)
        for k in struct.transmitters:
            out = struct.out_links[k]
            m_out = float(prices[out].sum())
            s_int = float(prices[struct.silenced_by[k]].sum())
            e_k = energies[k]
            P[k] = node_prob_update(m_out, s_int, config.lam1, e_k, config.eps_p)
            for li in out:
                p[li] = link_prob_update(prices[li], config.lam1, e_k, s_int,
                                         P[k], config.eps_p)
        x = throughput(p, P)
        res = _dual_residual(r, x, config.d_c)
        mu = np.maximum(prices + config.alpha * res, 0.0)

        c = cost_of(p, r)
        hist_cost.append(c)
        hist_p.append(p.copy())
        hist_r.append(r.copy())
        hist_mu.append(mu.copy())
        hist_res.append(res.copy())
        if abs(c) > 10.0 * baseline:
            raise ConvergenceError(
                f"distributed run diverged at round {it}: |cost| {abs(c):.3g} "
                f"exceeds 10x the initial {baseline:.3g}; reduce the step size")
        if ref_cost is not None and abs(c - ref_cost) / abs(ref_cost) < config.threshold:
            converged = it
            break

    cost = np.array(hist_cost)
    err = np.full_like(cost, np.nan)
    if ref_cost is not None:
        err = np.abs(cost - ref_cost) / abs(ref_cost) * 100.0
    residual = np.array(hist_res)
    return Trace(
        topology=topology,
        config=config,
        cost=cost,
        p=np.array(hist_p),
        r=np.array(hist_r),
        mu=np.array(hist_mu),
        residual=residual,
        max_violation=np.maximum(residual, 0.0).max(axis=1),
        cost_err_pct=err,
        converged_iteration=converged,
        reference_cost=ref_cost,
    )


def message_stats(trace: Trace) -> np.ndarray:
    """Price messages sent per round: each node i forwards its |I_i| in-link
    prices to all |N_i| neighbors, so the count is topology-determined."""
    topo = trace.topology
    per_round = sum(len(topo.in_neighbors(i)) * len(topo.neighbors(i))
                    for i in topo.node_ids)
    return np.full(trace.rounds, per_round, dtype=int)
