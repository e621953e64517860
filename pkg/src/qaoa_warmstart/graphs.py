"""Weighted Ising graphs: parsing, validation, and canonical keys.

A problem instance is a weighted graph whose edges carry the pairwise
couplings of the cost Hamiltonian H_C = sum_e c_e Z_u Z_v.  The wire format
is a JSON object with a key ``"J"`` (list of ``[u, v]`` node pairs) and a
key ``"c"`` (list of edge weights of the same length).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field


class GraphValidationError(ValueError):
    """Raised when graph data violates the input contract."""


@dataclass(frozen=True)
class IsingGraph:
    """A validated weighted graph with pairwise interactions only.

    ``nodes`` is the node count n; node ids run over ``0 .. n-1``.
    ``edges`` holds unordered pairs and ``weights`` the matching couplings.
    """

    nodes: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    order: int = 2

    def __post_init__(self):
        if self.nodes < 2:
            raise GraphValidationError(f"need at least 2 nodes, got {self.nodes}")
        if len(self.edges) != len(self.weights):
            raise GraphValidationError(
                f"edge/weight length mismatch: {len(self.edges)} edges, "
                f"{len(self.weights)} weights"
            )
        if not self.edges:
            raise GraphValidationError("empty edge set")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphValidationError(f"self-loop on node {u}")
            if not (0 <= u < self.nodes and 0 <= v < self.nodes):
                raise GraphValidationError(
                    f"edge ({u},{v}) out of range for {self.nodes} nodes"
                )
            pair = (u, v) if u < v else (v, u)
            if pair in seen:
                raise GraphValidationError(f"duplicate edge {pair}")
            seen.add(pair)
        for w in self.weights:
            if not math.isfinite(w):
                raise GraphValidationError(f"non-finite weight {w!r}")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def mean_degree(self) -> float:
        """Mean degree 2|E|/n, the degree argument of the scaling formula."""
        return 2.0 * len(self.edges) / self.nodes

    def to_json_obj(self) -> dict:
        """The wire representation: ``{"J": [[u, v], ...], "c": [w, ...]}``."""
        return {"J": [[u, v] for u, v in self.edges], "c": list(self.weights)}


@dataclass(frozen=True)
class CanonicalGraph:
    """An IsingGraph in normal form plus a stable content key.

    Normal form stores each edge as (min, max) and sorts edges
    lexicographically with weights permuted in lockstep.  The key is a
    digest of the normalized edge/weight lists, so two parse orders of the
    same graph share a key.  Node labels are *not* relabeled: key equality
    means edge/weight multiset equality, not isomorphism.
    """

    key: str
    graph: IsingGraph = field(compare=False)


def parse_graph(graph_json: dict, *, nodes: int | None = None) -> IsingGraph:
    """Validate a ``{"J": ..., "c": ...}`` object into an IsingGraph.

    The node count is inferred as ``max node id + 1`` unless ``nodes`` is
    given (profiles for fixed-size instance sets pass it explicitly).
    """
    if not isinstance(graph_json, dict):
        raise GraphValidationError("graph data must be an object with 'J' and 'c'")
    if "J" not in graph_json:
        raise GraphValidationError("graph data missing key 'J'")
    if "c" not in graph_json:
        raise GraphValidationError("graph data missing key 'c'")
    raw_edges = graph_json["J"]
    raw_weights = graph_json["c"]
    if not isinstance(raw_edges, (list, tuple)) or not isinstance(
        raw_weights, (list, tuple)
    ):
        raise GraphValidationError("'J' and 'c' must be sequences")
    if len(raw_edges) != len(raw_weights):
        raise GraphValidationError(
            f"'J' has {len(raw_edges)} entries but 'c' has {len(raw_weights)}"
        )
    if len(raw_edges) == 0:
        raise GraphValidationError("empty edge set")

    edges = []
    for e in raw_edges:
        if (
            not isinstance(e, (list, tuple))
            or len(e) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in e)
        ):
            raise GraphValidationError(f"edge {e!r} is not a 2-element integer pair")
        edges.append((int(e[0]), int(e[1])))
    weights = []
    for w in raw_weights:
        if isinstance(w, bool) or not isinstance(w, (int, float)):
            raise GraphValidationError(f"weight {w!r} is not a number")
        weights.append(float(w))

    if nodes is None:
        nodes = max(max(u, v) for u, v in edges) + 1
    return IsingGraph(nodes=nodes, edges=tuple(edges), weights=tuple(weights))


def canonicalize(g: IsingGraph) -> CanonicalGraph:
    """Normalize edge order and derive the content key.

    Idempotent: canonicalizing an already-canonical graph returns an equal
    result, and the key is invariant under edge input order.
    """
    pairs = sorted(
        (((u, v) if u < v else (v, u)), w) for (u, v), w in zip(g.edges, g.weights)
    )
    edges = tuple(p for p, _ in pairs)
    weights = tuple(w for _, w in pairs)
    normalized = IsingGraph(nodes=g.nodes, edges=edges, weights=weights, order=g.order)
    payload = json.dumps(
        {"n": normalized.nodes, "J": edges, "c": weights}, separators=(",", ":")
    )
    key = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:24]
    return CanonicalGraph(key=key, graph=normalized)
