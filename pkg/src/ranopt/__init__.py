"""Optimal persistence probabilities and rates for slotted random-access networks.

Computes energy/utility tradeoffs under per-link queueing-delay constraints:
a feasibility solver for the smallest workable delay bound, a centralized
convex solver with KKT certificates, a distributed price-based algorithm,
and a packet-level simulator that validates the analytic delay model.
"""

__version__ = "0.1.0"

from .central_solver import (KKTResidual, SolveReport, SolverConfig, TradeoffPoint,
                             kkt_residual, solve, sweep)
from .dist_solver import (DistConfig, Trace, dual_update, link_prob_update,
                          message_stats, node_prob_update, rate_update)
from .dist_solver import run as run_distributed
from .errors import ConvergenceError, InfeasibleError, TopologyError
from .feasibility import (FeasibilityReport, brute_force_maxmin, maxmin_throughput,
                          min_delay_constraint)
from .perf_model import (LinkMetrics, PrimalState, delay_residual, energy,
                         link_delay, link_metrics, link_throughput, pk_delay,
                         scalar_cost, service_moments, utility)
from .slotted_sim import SimConfig, SimReport, compare_to_model, simulate
from .topology import (Link, NetworkTopology, build, gen_geometric, gen_linear,
                       gen_star, load, save)

__all__ = [
    "ConvergenceError", "DistConfig", "FeasibilityReport", "InfeasibleError",
    "KKTResidual", "Link", "LinkMetrics", "NetworkTopology", "PrimalState",
    "SimConfig", "SimReport", "SolveReport", "SolverConfig", "TopologyError",
    "Trace", "TradeoffPoint", "brute_force_maxmin", "build", "compare_to_model",
    "delay_residual", "dual_update", "energy", "gen_geometric", "gen_linear",
    "gen_star", "kkt_residual", "link_delay", "link_metrics", "link_prob_update",
    "link_throughput", "load", "maxmin_throughput", "message_stats",
    "min_delay_constraint", "node_prob_update", "pk_delay", "rate_update",
    "run_distributed", "save", "scalar_cost", "service_moments", "simulate",
    "solve", "sweep", "utility",
]
