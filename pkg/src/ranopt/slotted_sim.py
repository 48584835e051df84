"""Packet-level slotted Monte Carlo simulator.

Per slot: Poisson arrivals join each link's queue; every node independently
samples one action (one of its links, or idle); a sampled link transmits
only if its queue is nonempty; the transmission succeeds exactly when the
receiver and all of the receiver's other neighbors stayed silent.  Failed
head packets retry in later slots without re-queueing.  Delay counts
inclusive slots (a packet served in its arrival slot has delay 1), matching
the analytic one-slot minimum service time.

Each node draws from its own seeded substream, so a run is reproducible
regardless of how nodes would be scheduled.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .perf_model import PrimalState
from .topology import NetworkTopology

_BLOCK = 200_000  # slots sampled per RNG batch; bounds memory on long runs


@dataclass
class SimConfig:
    """Inputs of one replication.

    In saturated mode queues never empty: arrivals are ignored and delay
    statistics are not produced (throughput equals the product-form exactly
    in expectation, which is what saturated runs are for).
    """

    slots: int
    seed: int
    arrival_rates: np.ndarray      # per link, packets per slot
    probabilities: np.ndarray      # per link
    warmup: int = 0
    saturated: bool = False

    @classmethod
    def from_state(cls, state: PrimalState, slots: int, seed: int,
                   warmup: int = 0, saturated: bool = False) -> "SimConfig":
        return cls(slots=slots, seed=seed, arrival_rates=state.r.copy(),
                   probabilities=state.p.copy(), warmup=warmup, saturated=saturated)

    def __post_init__(self):
        self.arrival_rates = np.asarray(self.arrival_rates, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        if self.slots <= self.warmup or self.warmup < 0:
            raise ValueError("need slots > warmup >= 0")
        if np.any(self.probabilities < 0) or np.any(self.probabilities > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any(self.arrival_rates < 0):
            raise ValueError("arrival rates must be nonnegative")


@dataclass
class SimReport:
    """Per-link empirical statistics over the measured window."""

    mean_delay: np.ndarray
    delay_se: np.ndarray
    throughput: np.ndarray
    attempts: np.ndarray
    successes: np.ndarray
    collisions: np.ndarray
    mean_queue_len: np.ndarray
    arrivals: np.ndarray           # packets that arrived, full run
    departures: np.ndarray        # packets that departed, full run
    final_queue: np.ndarray
    measured_slots: int


@dataclass
class DeviationRow:
    """Relative deviation of one link's empirical stats from the model."""

    link: tuple[int, int]
    throughput_emp: float
    throughput_model: float
    throughput_dev: float
    throughput_ci: float
    delay_emp: float
    delay_model: float
    delay_dev: float
    delay_ci: float
    delay_defined: bool


def simulate(topology: NetworkTopology, config: SimConfig) -> SimReport:
    """Run one seeded replication and collect per-link statistics."""
    if len(config.arrival_rates) != topology.num_links or \
            len(config.probabilities) != topology.num_links:
        raise ValueError("per-link arrays must match the topology's link count")
    for i in topology.node_ids:
        total = sum(config.probabilities[li] for li in topology.out_link_indices(i))
        if total > 1 + 1e-9:
            raise ValueError(f"node {i}: total transmission probability {total} > 1")
    if config.saturated:
        return _simulate_saturated(topology, config)
    return _simulate_queued(topology, config)


def _node_streams(topology: NetworkTopology, seed: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(topology.num_nodes)
    return [np.random.default_rng(c) for c in children]


def _simulate_queued(topology: NetworkTopology, config: SimConfig) -> SimReport:
    n, m = topology.num_nodes, topology.num_links
    ids = list(topology.node_ids)
    pos = {i: k for k, i in enumerate(ids)}
    out_idx = [np.array(topology.out_link_indices(i), dtype=int) for i in ids]
    cum = [np.cumsum(config.probabilities[idx]) if len(idx) else np.empty(0)
           for idx in out_idx]
    rx_pos = np.array([pos[ln.rx] for ln in topology.links], dtype=int)
    # nodes that must stay silent for the link to succeed
    silencers = [np.array(sorted({pos[ln.rx]} |
                                 {pos[l] for l in topology.neighbors(ln.rx) if l != ln.tx}),
                          dtype=int)
                 for ln in topology.links]
    rngs = _node_streams(topology, config.seed)

    queues = [deque() for _ in range(m)]
    arrivals_total = np.zeros(m, dtype=np.int64)
    departures = np.zeros(m, dtype=np.int64)
    attempts = np.zeros(m, dtype=np.int64)
    successes = np.zeros(m, dtype=np.int64)
    delay_sum = np.zeros(m)
    delay_sq_sum = np.zeros(m)
    delay_count = np.zeros(m, dtype=np.int64)
    qlen_sum = np.zeros(m, dtype=np.int64)
    measured = 0

    transmitting = np.zeros(n, dtype=bool)
    tx_link = np.full(n, -1, dtype=int)

    for block_start in range(0, config.slots, _BLOCK):
        block = min(_BLOCK, config.slots - block_start)
        # pre-draw each node's randomness for the block in a fixed order
        actions = []
        arrivals = [None] * m
        for k in range(n):
            u = rngs[k].random(block)
            if len(out_idx[k]):
                act = np.searchsorted(cum[k], u, side="right")
            else:
                act = np.full(block, 0, dtype=int)
            actions.append(act)
            for li in out_idx[k]:
                arrivals[li] = rngs[k].poisson(config.arrival_rates[li], block)

        for s in range(block):
            t = block_start + s
            in_window = t >= config.warmup
            for li in range(m):
                k = arrivals[li][s] if arrivals[li] is not None else 0
                if k:
                    arrivals_total[li] += k
                    q = queues[li]
                    for _ in range(k):
                        q.append(t)
            if in_window:
                measured += 1
                for li in range(m):
                    qlen_sum[li] += len(queues[li])
            # sample actions; an empty queue suppresses the transmission
            active = []
            for k in range(n):
                idx = out_idx[k]
                if not len(idx):
                    continue
                a = actions[k][s]
                if a < len(idx) and queues[idx[a]]:
                    li = idx[a]
                    transmitting[k] = True
                    tx_link[k] = li
                    active.append(k)
                    if in_window:
                        attempts[li] += 1
            for k in active:
                li = tx_link[k]
                ok = True
                for silencer in silencers[li]:
                    if transmitting[silencer]:
                        ok = False
                        break
                if ok:
                    born = queues[li].popleft()
                    departures[li] += 1
                    if in_window:
                        successes[li] += 1
                        if born >= config.warmup:
                            d = t - born + 1
                            delay_sum[li] += d
                            delay_sq_sum[li] += d * d
                            delay_count[li] += 1
            for k in active:
                transmitting[k] = False
                tx_link[k] = -1

    return _finish_report(arrivals_total, departures, attempts, successes,
                          delay_sum, delay_sq_sum, delay_count, qlen_sum,
                          [len(q) for q in queues], measured)


def _simulate_saturated(topology: NetworkTopology, config: SimConfig) -> SimReport:
    n, m = topology.num_nodes, topology.num_links
    ids = list(topology.node_ids)
    pos = {i: k for k, i in enumerate(ids)}
    out_idx = [np.array(topology.out_link_indices(i), dtype=int) for i in ids]
    cum = [np.cumsum(config.probabilities[idx]) if len(idx) else np.empty(0)
           for idx in out_idx]
    silencers = [np.array(sorted({pos[ln.rx]} |
                                 {pos[l] for l in topology.neighbors(ln.rx) if l != ln.tx}),
                          dtype=int)
                 for ln in topology.links]
    rngs = _node_streams(topology, config.seed)

    attempts = np.zeros(m, dtype=np.int64)
    successes = np.zeros(m, dtype=np.int64)
    measured = 0
    for block_start in range(0, config.slots, _BLOCK):
        block = min(_BLOCK, config.slots - block_start)
        lo = max(config.warmup - block_start, 0)
        if lo >= block:
            # draw and discard to keep streams aligned across warmup choices
            for k in range(n):
                rngs[k].random(block)
            continue
        link_of = np.full((n, block), -1, dtype=int)
        silent = np.ones((n, block), dtype=bool)
        for k in range(n):
            u = rngs[k].random(block)
            idx = out_idx[k]
            if not len(idx):
                continue
            act = np.searchsorted(cum[k], u, side="right")
            tx = act < len(idx)
            link_of[k, tx] = idx[act[tx]]
            silent[k] = ~tx
        window = slice(lo, block)
        measured += block - lo
        for li in range(m):
            k = pos[topology.links[li].tx]
            mine = link_of[k, window] == li
            clear = np.all(silent[np.ix_(silencers[li], np.arange(lo, block))], axis=0)
            attempts[li] += int(mine.sum())
            successes[li] += int((mine & clear).sum())

    zeros = np.zeros(m)
    nz = np.zeros(m, dtype=np.int64)
    return _finish_report(nz, successes.copy(), attempts, successes,
                          zeros, zeros, nz, nz, [0] * m, measured)


def _finish_report(arrivals, departures, attempts, successes, delay_sum,
                   delay_sq_sum, delay_count, qlen_sum, final_queue, measured):
    m = len(attempts)
    mean_delay = np.full(m, np.nan)
    delay_se = np.full(m, np.nan)
    for li in range(m):
        c = delay_count[li]
        if c > 0:
            mean = delay_sum[li] / c
            mean_delay[li] = mean
            if c > 1:
                var = max(delay_sq_sum[li] / c - mean**2, 0.0) * c / (c - 1)
                delay_se[li] = np.sqrt(var / c)
    return SimReport(
        mean_delay=mean_delay,
        delay_se=delay_se,
        throughput=successes / measured if measured else np.full(m, np.nan),
        attempts=attempts,
        successes=successes,
        collisions=attempts - successes,
        mean_queue_len=qlen_sum / measured if measured else np.full(m, np.nan),
        arrivals=arrivals,
        departures=departures,
        final_queue=np.asarray(final_queue, dtype=np.int64),
        measured_slots=measured,
    )


def compare_to_model(report: SimReport, topology: NetworkTopology,
                     state: PrimalState) -> list[DeviationRow]:
    """Relative deviations of empirical throughput and delay from the model.

    Throughput compares against the product-form value (exact in saturation);
    delay against the closed form, flagged undefined where r >= x.  CI columns
    are 1.96-sigma half-widths (binomial for throughput, t-free normal for
    delay), informational rather than pass/fail.
    """
    from .perf_model import link_throughput

    x_model = link_throughput(topology, state)
    r = state.r
    rows = []
    for li, ln in enumerate(topology.links):
        xm = x_model[li]
        emp = report.throughput[li]
        n_slots = report.measured_slots
        thr_ci = 1.96 * np.sqrt(max(emp * (1 - emp), 0.0) / n_slots) if n_slots else np.nan
        defined = r[li] < xm
        if defined:
            dm = (1.0 - r[li] / 2.0) / (xm - r[li])
            de = report.mean_delay[li]
            ddev = (de - dm) / dm if np.isfinite(de) else np.nan
            dci = 1.96 * report.delay_se[li] / dm if np.isfinite(report.delay_se[li]) else np.nan
        else:
            dm, de, ddev, dci = np.nan, report.mean_delay[li], np.nan, np.nan
        rows.append(DeviationRow(
            link=(ln.tx, ln.rx),
            throughput_emp=float(emp),
            throughput_model=float(xm),
            throughput_dev=float((emp - xm) / xm) if xm > 0 else np.nan,
            throughput_ci=float(thr_ci),
            delay_emp=float(de) if np.isfinite(de) else float("nan"),
            delay_model=float(dm) if np.isfinite(dm) else float("nan"),
            delay_dev=float(ddev) if np.isfinite(ddev) else float("nan"),
            delay_ci=float(dci) if np.isfinite(dci) else float("nan"),
            delay_defined=bool(defined),
        ))
    return rows
