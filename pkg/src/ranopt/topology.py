"""Network topology: nodes, interference neighborhoods, and directed traffic links.

A topology is immutable after construction.  The neighbor relation models
interference (two neighbors transmitting in the same slot collide at a common
receiver); the directed link list models traffic.  Every link must connect a
neighbor pair, but a neighbor pair need not carry traffic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyError

GEOMETRIC_RETRY_BUDGET = 100


@dataclass(frozen=True)
class Link:
    tx: int
    rx: int
    capacity: float = 1.0


@dataclass(frozen=True)
class NetworkTopology:
    """Validated network with derived neighbor/out/in sets.

    Attributes:
        node_ids: node identifiers, in construction order
        energy: per-node energy cost of one packet transmission
        neighbor_pairs: unordered interference pairs, as sorted tuples
        links: directed traffic links, in construction order
    """

    node_ids: tuple[int, ...]
    energy: dict[int, float]
    neighbor_pairs: frozenset[tuple[int, int]]
    links: tuple[Link, ...]
    _adjacency: dict[int, frozenset[int]] = field(repr=False, default_factory=dict)
    _out: dict[int, tuple[int, ...]] = field(repr=False, default_factory=dict)
    _in: dict[int, tuple[int, ...]] = field(repr=False, default_factory=dict)
    _link_index: dict[tuple[int, int], int] = field(repr=False, default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def neighbors(self, i: int) -> frozenset[int]:
        """N_i: nodes whose transmissions collide with receptions at i."""
        self._check_node(i)
        return self._adjacency[i]

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        """O_i: receivers of i's links, in link order."""
        self._check_node(i)
        return self._out[i]

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        """I_i: transmitters of links into i, in link order."""
        self._check_node(i)
        return self._in[i]

    def out_link_indices(self, i: int) -> tuple[int, ...]:
        self._check_node(i)
        return tuple(self._link_index[(i, j)] for j in self._out[i])

    def link_index(self, tx: int, rx: int) -> int:
        try:
            return self._link_index[(tx, rx)]
        except KeyError:
            raise TopologyError(f"no link ({tx},{rx})") from None

    def has_link(self, tx: int, rx: int) -> bool:
        return (tx, rx) in self._link_index

    def interfering_links(self, i: int) -> set[tuple[int, int]]:
        """Links whose success requires node i's silence.

        These are the links (k,l) with l in N_i or l == i, excluding links
        transmitted by i itself: the receiver, or one of its neighbors other
        than the transmitter, is i, so the factor (1 - P_i) enters that
        link's throughput.
        """
        self._check_node(i)
        targets = set(self._adjacency[i]) | {i}
        return {(ln.tx, ln.rx) for ln in self.links if ln.rx in targets and ln.tx != i}

    def capacities(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.links])

    def _check_node(self, i: int) -> None:
        if i not in self._adjacency:
            raise TopologyError(f"unknown node {i}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkTopology):
            return NotImplemented
        return (self.node_ids == other.node_ids
                and self.energy == other.energy
                and self.neighbor_pairs == other.neighbor_pairs
                and self.links == other.links)


def build(nodes, neighbor_pairs, links) -> NetworkTopology:
    """Validate and assemble a topology.

    Args:
        nodes: iterable of node ids, of (id, energy) pairs, or a dict id -> energy
        neighbor_pairs: iterable of unordered node id pairs
        links: iterable of (tx, rx) or (tx, rx, capacity) tuples, or Link objects

    Raises:
        TopologyError: duplicate id, self-pair, link between non-neighbors,
            self-link, duplicate link, nonpositive capacity or energy.
    """
    if isinstance(nodes, dict):
        node_items = list(nodes.items())
    else:
        node_items = []
        for entry in nodes:
            if isinstance(entry, tuple):
                node_items.append((int(entry[0]), float(entry[1])))
            else:
                node_items.append((int(entry), 1.0))

    ids = [i for i, _ in node_items]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise TopologyError(f"duplicate node ids {dup}")
    id_set = set(ids)
    energy = {}
    for i, e in node_items:
        if not (e > 0) or not math.isfinite(e):
            raise TopologyError(f"node {i}: energy must be positive, got {e}")
        energy[i] = float(e)

    pairs = set()
    for a, b in neighbor_pairs:
        a, b = int(a), int(b)
        if a == b:
            raise TopologyError(f"node {a} cannot neighbor itself")
        if a not in id_set or b not in id_set:
            raise TopologyError(f"neighbor pair ({a},{b}) references unknown node")
        pairs.add((min(a, b), max(a, b)))

    link_objs = []
    seen = set()
    for entry in links:
        if isinstance(entry, Link):
            tx, rx, cap = entry.tx, entry.rx, entry.capacity
        elif len(entry) == 3:
            tx, rx, cap = int(entry[0]), int(entry[1]), float(entry[2])
        else:
            tx, rx, cap = int(entry[0]), int(entry[1]), 1.0
        if tx == rx:
            raise TopologyError(f"self-link ({tx},{rx})")
        if tx not in id_set or rx not in id_set:
            raise TopologyError(f"link ({tx},{rx}) references unknown node")
        if (min(tx, rx), max(tx, rx)) not in pairs:
            raise TopologyError(f"link ({tx},{rx}) between non-neighbors")
        if (tx, rx) in seen:
            raise TopologyError(f"duplicate link ({tx},{rx})")
        if not (cap > 0) or not math.isfinite(cap):
            raise TopologyError(f"link ({tx},{rx}): capacity must be positive, got {cap}")
        seen.add((tx, rx))
        link_objs.append(Link(tx, rx, cap))

    adjacency = {i: set() for i in ids}
    for a, b in pairs:
        adjacency[a].add(b)
        adjacency[b].add(a)

    out = {i: [] for i in ids}
    inn = {i: [] for i in ids}
    link_index = {}
    for idx, ln in enumerate(link_objs):
        out[ln.tx].append(ln.rx)
        inn[ln.rx].append(ln.tx)
        link_index[(ln.tx, ln.rx)] = idx

    return NetworkTopology(
        node_ids=tuple(ids),
        energy=energy,
        neighbor_pairs=frozenset(pairs),
        links=tuple(link_objs),
        _adjacency={i: frozenset(s) for i, s in adjacency.items()},
        _out={i: tuple(v) for i, v in out.items()},
        _in={i: tuple(v) for i, v in inn.items()},
        _link_index=link_index,
    )


def gen_linear(n: int) -> NetworkTopology:
    """Chain 1-2-...-n; adjacent nodes are neighbors and exchange traffic both ways."""
    if n < 2:
        raise TopologyError(f"linear network needs n >= 2, got {n}")
    pairs = [(k, k + 1) for k in range(1, n)]
    links = []
    for k in range(1, n):
        links.append((k, k + 1))
        links.append((k + 1, k))
    return build(range(1, n + 1), pairs, links)


def gen_star(n: int) -> NetworkTopology:
    """Hub node 1 with leaves 2..n; traffic flows leaf -> hub only.

    Every leaf neighbors the hub, its adjacent leaves, and leaf 2 neighbors
    leaf n, closing a ring around the hub.
    """
    if n < 3:
        raise TopologyError(f"star network needs n >= 3, got {n}")
    pairs = [(1, k) for k in range(2, n + 1)]
    leaves = list(range(2, n + 1))
    for idx, a in enumerate(leaves):
        b = leaves[(idx + 1) % len(leaves)]
        if a != b:
            pairs.append((min(a, b), max(a, b)))
    links = [(k, 1) for k in range(2, n + 1)]
    return build(range(1, n + 1), pairs, links)


def gen_geometric(n: int, connectivity_factor: float, seed: int) -> NetworkTopology:
    """Random geometric network on the unit square.

    Nodes are placed uniformly at random; pairs within `connectivity_factor`
    of each other become neighbors and exchange traffic both ways.  Placement
    is retried (same seeded stream) until the neighbor graph is connected.
    """
    if n < 2:
        raise TopologyError(f"geometric network needs n >= 2, got {n}")
    if not (0 < connectivity_factor <= math.sqrt(2)):
        raise TopologyError(
            f"connectivity factor must be in (0, sqrt(2)], got {connectivity_factor}")
    rng = np.random.default_rng(seed)
    for _ in range(GEOMETRIC_RETRY_BUDGET):
        pos = rng.random((n, 2))
        pairs = []
        for a in range(n):
            for b in range(a + 1, n):
                if math.dist(pos[a], pos[b]) <= connectivity_factor:
                    pairs.append((a + 1, b + 1))
        if _connected(n, pairs):
            links = [(a, b) for a, b in pairs] + [(b, a) for a, b in pairs]
            return build(range(1, n + 1), pairs, links)
    raise TopologyError(
        f"no connected placement of {n} nodes at factor {connectivity_factor} "
        f"within {GEOMETRIC_RETRY_BUDGET} retries")


def _connected(n: int, pairs: list[tuple[int, int]]) -> bool:
    adj = {i: set() for i in range(1, n + 1)}
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)
    seen = {1}
    stack = [1]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def save(topology: NetworkTopology, path) -> None:
    """Write a topology as JSON (see load for the schema)."""
    doc = {
        "nodes": [{"id": i, "energy": topology.energy[i]} for i in topology.node_ids],
        "neighbors": [[a, b] for a, b in sorted(topology.neighbor_pairs)],
        "links": [{"from": ln.tx, "to": ln.rx, "capacity": ln.capacity}
                  for ln in topology.links],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load(path) -> NetworkTopology:
    """Read a topology JSON file.

    Schema: {"nodes": [{"id", "energy"?}], "neighbors": [[a,b],...],
    "links": [{"from", "to", "capacity"?}]}.  Energy defaults to 1.0 and
    capacity to 1.0.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TopologyError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("nodes", "neighbors", "links"):
        if key not in doc:
            raise TopologyError(f"{path}: missing '{key}' key")
    try:
        nodes = [(nd["id"], nd.get("energy", 1.0)) for nd in doc["nodes"]]
        links = [(ln["from"], ln["to"], ln.get("capacity", 1.0)) for ln in doc["links"]]
    except (TypeError, KeyError) as exc:
        raise TopologyError(f"{path}: malformed node or link entry ({exc})") from exc
    return build(nodes, doc["neighbors"], links)
