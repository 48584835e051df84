"""Shared interior-point machinery for the convex solvers.

Both the max-min feasibility program and the scalarized energy/utility
program minimize a linear objective over constraints whose only nonlinear
ingredient is -log(x_ij) as a function of the link probabilities.  This
module holds the index structures and derivative assembly for that term,
plus a damped-Newton log-barrier driver.

Barrier identity used throughout: at the minimizer of
t*f0(v) - sum_k log(-g_k(v)), the implied multipliers are
mu_k = 1/(t*(-g_k)) and satisfy mu_k * (-g_k) = 1/t exactly.
"""

from __future__ import annotations

import numpy as np

from .topology import NetworkTopology


class LinkStructure:
    """Per-link and per-node index arrays over a topology.

    Attributes:
        tx, rx: transmitter/receiver node positions per link
        coll_nodes: per link, positions of nodes whose silence the link needs
            (receiver plus the receiver's neighbors minus the transmitter)
        out_links: per node position, indices of its outgoing links
        silenced_by: per node position, indices of links silenced by that node
        link_energy: per link, the transmitter's energy per packet
    """

    def __init__(self, topology: NetworkTopology):
        ids = topology.node_ids
        pos = {i: k for k, i in enumerate(ids)}
        self.topology = topology
        self.node_pos = pos
        self.n = len(ids)
        self.m = topology.num_links
        self.tx = np.array([pos[ln.tx] for ln in topology.links], dtype=int)
        self.rx = np.array([pos[ln.rx] for ln in topology.links], dtype=int)
        self.log_cap = np.log(topology.capacities())
        self.coll_nodes = []
        for ln in topology.links:
            nodes = [pos[ln.rx]]
            nodes += [pos[l] for l in topology.neighbors(ln.rx) if l != ln.tx]
            self.coll_nodes.append(np.array(sorted(nodes), dtype=int))
        self.out_links = [np.array(topology.out_link_indices(i), dtype=int) for i in ids]
        silenced = [[] for _ in ids]
        for li, nodes in enumerate(self.coll_nodes):
            for k in nodes:
                silenced[k].append(li)
        self.silenced_by = [np.array(v, dtype=int) for v in silenced]
        self.transmitters = [k for k in range(self.n) if len(self.out_links[k])]
        self.link_energy = np.array([topology.energy[ln.tx] for ln in topology.links])

    def node_totals(self, p: np.ndarray) -> np.ndarray:
        P = np.zeros(self.n)
        np.add.at(P, self.tx, p)
        return P

    def log_throughput(self, p: np.ndarray, P: np.ndarray) -> np.ndarray:
        """log x per link; requires p > 0 and P < 1 elementwise."""
        log1mP = np.log1p(-P)
        out = np.log(p) + self.log_cap
        for li, nodes in enumerate(self.coll_nodes):
            out[li] += log1mP[nodes].sum()
        return out

    def neglogx_rows(self, p: np.ndarray, P: np.ndarray) -> np.ndarray:
        """Dense (m, m) matrix of gradients of -log(x_li) w.r.t. p."""
        rows = np.zeros((self.m, self.m))
        inv1mP = 1.0 / (1.0 - P)
        for li, nodes in enumerate(self.coll_nodes):
            for k in nodes:
                rows[li, self.out_links[k]] += inv1mP[k]
        rows[np.arange(self.m), np.arange(self.m)] -= 1.0 / p
        return rows

    def weighted_neglogx_hess(self, p: np.ndarray, P: np.ndarray,
                              w: np.ndarray) -> np.ndarray:
        """sum_li w_li * hess(-log x_li) over the p variables, dense (m, m)."""
        H = np.diag(w / p**2)
        wnode = np.zeros(self.n)
        for k in range(self.n):
            sl = self.silenced_by[k]
            if len(sl):
                wnode[k] = w[sl].sum()
        for k in self.transmitters:
            if wnode[k] == 0.0:
                continue
            idx = self.out_links[k]
            H[np.ix_(idx, idx)] += wnode[k] / (1.0 - P[k]) ** 2
        return H


def solve_newton_step(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Newton direction with a ridge fallback for near-singular Hessians."""
    try:
        return np.linalg.solve(H, -grad)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(float(np.max(np.diag(H))), 1.0)
        return np.linalg.solve(H + ridge * np.eye(H.shape[0]), -grad)


def newton_minimize(v0, value_fn, full_fn, *, decrement_tol=1e-12,
                    grad_inf_tol=None, max_iter=200):
    """Damped Newton minimization of a convex function with +inf outside domain.

    Args:
        v0: strictly feasible start
        value_fn: v -> float (inf when out of domain)
        full_fn: v -> (value, gradient, hessian)
        decrement_tol: stop when squared Newton decrement / 2 falls below this
        grad_inf_tol: optional additional stop requirement on the gradient

    Returns:
        (v, newton_iterations)
    """
    v = np.array(v0, dtype=float)
    val, grad, H = full_fn(v)
    if not np.isfinite(val):
        raise ValueError("Newton start point is outside the barrier domain")
    iters = 0
    for _ in range(max_iter):
        dv = solve_newton_step(H, grad)
        slope = float(grad @ dv)
        if slope > 0:  # numerical loss of descent, retry with ridge
            dv = solve_newton_step(H + np.eye(len(v)) * max(np.max(np.diag(H)), 1.0)
                                   * 1e-9, grad)
            slope = float(grad @ dv)
            if slope > 0:
                break
        decrement = -slope / 2.0
        if decrement <= decrement_tol and (
                grad_inf_tol is None or np.max(np.abs(grad)) <= grad_inf_tol):
            break
        step = 1.0
        accepted = False
        while step > 1e-14:
            cand = v + step * dv
            cval = value_fn(cand)
            if np.isfinite(cval) and cval <= val + 0.25 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        v = cand
        val, grad, H = full_fn(v)
        iters += 1
    return v, iters


def barrier_minimize(v0, objective_grad, constraint_fn, hess_extra_fn, *,
                     t0=10.0, mu=30.0, comp_tol=1e-7, max_stage_iter=100):
    """Log-barrier minimization of a linear objective under convex constraints.

    Args:
        v0: strictly feasible start
        objective_grad: constant gradient of the linear objective
        constraint_fn: v -> (g, rows) with g_k < 0 required in-domain and
            rows[k] = grad g_k; may return None when v is out of domain
        hess_extra_fn: (v, w) -> sum_k w_k * hess(g_k), the curvature part
        t0, mu: initial barrier weight and geometric growth factor
        comp_tol: target complementarity 1/t; the final stage has 1/t <= comp_tol

    Returns:
        (v, multipliers, total_newton_iterations, final_t)
    """
    c = np.asarray(objective_grad, dtype=float)

    def make_phi(t):
        def value_fn(v):
            res = constraint_fn(v)
            if res is None:
                return np.inf
            g, _ = res
            if np.any(g >= 0):
                return np.inf
            return t * float(c @ v) - float(np.sum(np.log(-g)))

        def full_fn(v):
            res = constraint_fn(v)
            if res is None:
                return np.inf, None, None
            g, rows = res
            if np.any(g >= 0):
                return np.inf, None, None
            w = 1.0 / (-g)
            val = t * float(c @ v) - float(np.sum(np.log(-g)))
            grad = t * c + rows.T @ w
            H = (rows.T * w**2) @ rows + hess_extra_fn(v, w)
            return val, grad, H

        return value_fn, full_fn

    t_final = 1.0 / comp_tol
    schedule = []
    t = t0
    while t < t_final:
        schedule.append(t)
        t *= mu
    schedule.append(t_final)

    v = np.array(v0, dtype=float)
    total = 0
    for t in schedule:
        value_fn, full_fn = make_phi(t)
        v, iters = newton_minimize(
            v, value_fn, full_fn,
            decrement_tol=1e-13 if t == t_final else 1e-10,
            max_iter=max_stage_iter)
        total += iters
    g, _ = constraint_fn(v)
    multipliers = 1.0 / (t_final * (-g))
    return v, multipliers, total, t_final


def refine_multipliers(objective_grad, g, rows, unknown_idx, interior_cols,
                       active_slack=1e-4):
    """Least-squares KKT multipliers over the near-active constraint set.

    The barrier's 1/(t*slack) estimates carry O(1/t) noise; re-fitting the
    stationarity system at the converged primal point tightens the
    certificate to the accuracy of that point.  Constraints with slack above
    active_slack get multiplier zero (complementary slackness), and variables
    sitting on their box bounds are excluded from the fit since their
    stationarity is carried by implicit bound multipliers.

    Args:
        objective_grad: gradient of the linear objective
        g, rows: constraint values and gradient rows at the candidate point
        unknown_idx: constraint indices whose multipliers are being estimated
        interior_cols: boolean mask of variables away from their box bounds

    Returns:
        Array of multipliers aligned with unknown_idx.
    """
    mu = np.zeros(len(unknown_idx))
    active = [k for k, ci in enumerate(unknown_idx) if -g[ci] <= active_slack]
    if not active or not np.any(interior_cols):
        return mu
    A = rows[np.asarray(unknown_idx)[active]][:, interior_cols].T
    b = -np.asarray(objective_grad, dtype=float)[interior_cols]
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.any(sol < 0):
        keep = sol > 0
        sol = np.zeros_like(sol)
        if keep.any():
            sub, *_ = np.linalg.lstsq(A[:, keep], b, rcond=None)
            sol[keep] = sub
    mu[active] = np.maximum(sol, 0.0)
    return mu
