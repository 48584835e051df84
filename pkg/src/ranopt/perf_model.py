"""Analytic performance model for slotted random access.

Service on a link succeeds in a slot with probability x (the saturation
throughput), so the service time is geometric.  Each link queue is treated
as M/G/1: packets arrive at rate r per slot and the mean sojourn time
follows from the first two service moments.  The closed form
(1 - r/2) / (x - r) is algebraically identical to that composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .topology import NetworkTopology

#: rates below this are treated as zero utility contributors; keeps log finite
RATE_FLOOR = 1e-9


class PrimalState:
    """Per-link persistence probabilities and rates over a fixed topology.

    Rates are carried in log form (z = log r); node totals P_i are derived
    from the out-link probabilities on construction and never stored apart.
    """

    def __init__(self, topology: NetworkTopology, p, z):
        p = np.asarray(p, dtype=float)
        z = np.asarray(z, dtype=float)
        m = topology.num_links
        if p.shape != (m,) or z.shape != (m,):
            raise ValueError(f"expected {m} per-link values, got p{p.shape} z{z.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("link probabilities must lie in [0, 1]")
        if not np.all(np.isfinite(z)):
            raise ValueError("log-rates must be finite")
        self.topology = topology
        self.p = p
        self.z = z
        self._node_total = {}
        for i in topology.node_ids:
            total = float(sum(p[li] for li in topology.out_link_indices(i)))
            if total > 1 + 1e-9:
                raise ValueError(f"node {i}: total transmission probability {total} > 1")
            self._node_total[i] = min(total, 1.0)

    @classmethod
    def from_rates(cls, topology: NetworkTopology, p, r) -> "PrimalState":
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("rates must be positive; use RATE_FLOOR for idle links")
        return cls(topology, p, np.log(r))

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.z)

    def node_total(self, i: int) -> float:
        """P_i, the probability node i transmits in a slot."""
        return self._node_total[i]

    def node_totals(self) -> np.ndarray:
        return np.array([self._node_total[i] for i in self.topology.node_ids])


@dataclass
class LinkMetrics:
    """Per-link throughput, analytic delay (NaN where r >= x), and residual."""

    throughput: np.ndarray
    delay: np.ndarray
    residual: np.ndarray


def service_moments(x: float) -> tuple[float, float, float]:
    """Mean, variance, and second moment of the geometric service time.

    x is the per-slot success probability; the service time counts slots
    until the first success, so mean = 1/x and variance = (1-x)/x^2.
    """
    if not (0 < x <= 1):
        raise ValueError(f"success probability must be in (0, 1], got {x}")
    mean = 1.0 / x
    variance = (1.0 - x) / x**2
    return mean, variance, variance + mean**2


def pk_delay(r: float, s_mean: float, s_second_moment: float) -> float:
    """Mean M/G/1 sojourn time: service plus Pollaczek-Khinchin waiting time."""
    if r < 0:
        raise ValueError(f"arrival rate must be nonnegative, got {r}")
    rho = r * s_mean
    if rho >= 1:
        raise ValueError(f"unstable queue: utilization {rho} >= 1")
    return s_mean + r * s_second_moment / (2.0 * (1.0 - rho))


def link_delay(r: float, x: float) -> float:
    """Closed-form mean link delay (1 - r/2) / (x - r), in slots."""
    if not (0 < x <= 1):
        raise ValueError(f"success probability must be in (0, 1], got {x}")
    if not (0 <= r < x):
        raise ValueError(f"arrival rate {r} must satisfy 0 <= r < x = {x}")
    return (1.0 - r / 2.0) / (x - r)


def link_throughput(topology: NetworkTopology, state: PrimalState) -> np.ndarray:
    """Per-link throughput x_ij = c_ij p_ij (1-P_j) prod_{l in N_j, l != i} (1-P_l).

    A packet on (i,j) gets through a slot exactly when j and every neighbor
    of j other than i stay silent.
    """
    x = np.empty(topology.num_links)
    for li, ln in enumerate(topology.links):
        v = ln.capacity * state.p[li] * (1.0 - state.node_total(ln.rx))
        for l in topology.neighbors(ln.rx):
            if l != ln.tx:
                v *= 1.0 - state.node_total(l)
        x[li] = v
    return x


def delay_residual(z_ij: float, state: PrimalState, d_c: float, link) -> float:
    """Log-domain delay-constraint residual for one link; feasible iff <= 0.

    Equals log(1/D_c + e^z (1 - 1/(2 D_c))) - log(x_ij), which is jointly
    convex in (z, p).  Returns +inf when the link throughput is zero.
    """
    if d_c <= 1:
        raise ValueError(f"delay bound must exceed one slot, got {d_c}")
    li = link if isinstance(link, int) else state.topology.link_index(*link)
    x = float(link_throughput(state.topology, state)[li])
    if x <= 0.0:
        return math.inf
    lhs = 1.0 / d_c + math.exp(z_ij) * (1.0 - 1.0 / (2.0 * d_c))
    return math.log(lhs) - math.log(x)


def utility(state: PrimalState) -> float:
    """Sum of log link rates (proportional fairness)."""
    return float(np.sum(state.z))


def energy(topology: NetworkTopology, state: PrimalState) -> float:
    """Expected energy spent per slot: sum over nodes of e_i * P_i."""
    return float(sum(topology.energy[i] * state.node_total(i) for i in topology.node_ids))


def scalar_cost(lam1: float, lam2: float, e: float, u: float) -> float:
    """Scalarized objective lam1 * E - lam2 * U."""
    if lam1 < 0 or lam2 < 0 or (lam1 == 0 and lam2 == 0):
        raise ValueError("weights must be nonnegative and not both zero")
    return lam1 * e - lam2 * u


def link_metrics(topology: NetworkTopology, state: PrimalState, d_c: float) -> LinkMetrics:
    """Throughput, analytic delay, and constraint residual for every link."""
    x = link_throughput(topology, state)
    r = state.r
    delay = np.full_like(x, np.nan)
    ok = r < x
    delay[ok] = (1.0 - r[ok] / 2.0) / (x[ok] - r[ok])
    residual = np.array([
        delay_residual(state.z[li], state, d_c, li) for li in range(topology.num_links)
    ])
    return LinkMetrics(throughput=x, delay=delay, residual=residual)
