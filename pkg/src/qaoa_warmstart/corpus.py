"""Seeded synthetic graph instances for experiments and daemon seeding.

Instances mirror the service's target workload: fixed node count, a
random edge set of a requested size, and weights drawn from a configured
family.  Everything is driven by an explicit Generator so corpora are
reproducible.
"""

from __future__ import annotations

import itertools

import numpy as np

from .graphs import IsingGraph
from .sources import WeightFamily


def random_graph(
    n: int, edge_count: int, family: WeightFamily, rng: np.random.Generator
) -> IsingGraph:
    """A graph on n nodes with edge_count uniformly chosen edges."""
    pairs = list(itertools.combinations(range(n), 2))
    if not 1 <= edge_count <= len(pairs):
        raise ValueError(f"edge_count {edge_count} out of range for n={n}")
    chosen = rng.choice(len(pairs), size=edge_count, replace=False)
    edges = tuple(pairs[i] for i in sorted(chosen))
    weights = tuple(float(w) for w in family.sample(rng, edge_count))
    return IsingGraph(nodes=n, edges=edges, weights=weights)


def random_corpus(
    n: int,
    size: int,
    families: tuple[WeightFamily, ...],
    edge_count_range: tuple[int, int],
    rng: np.random.Generator,
) -> list[IsingGraph]:
    """size independent instances; family and edge count drawn per graph."""
    lo, hi = edge_count_range
    graphs = []
    for _ in range(size):
        family = families[int(rng.integers(len(families)))]
        edge_count = int(rng.integers(lo, hi + 1))
        graphs.append(random_graph(n, edge_count, family, rng))
    return graphs


def seed_graphs(
    n: int,
    families: tuple[WeightFamily, ...],
    edge_count_range: tuple[int, int],
    rng: np.random.Generator,
    deciles: int = 10,
) -> list[IsingGraph]:
    """One starting graph per (weight family x edge-count decile)."""
    lo, hi = edge_count_range
    counts = sorted(
        {int(round(lo + (hi - lo) * i / max(deciles - 1, 1))) for i in range(deciles)}
    )
    return [
        random_graph(n, count, family, rng)
        for family in families
        for count in counts
    ]


def unweighted_reference(n: int, edge_probability: float, seed: int) -> IsingGraph:
    """The all-weights-one graph used to fit asymptotic angle schedules."""
    rng = np.random.default_rng(seed)
    pairs = list(itertools.combinations(range(n), 2))
    edge_count = max(1, int(round(edge_probability * len(pairs))))
    chosen = rng.choice(len(pairs), size=edge_count, replace=False)
    edges = tuple(pairs[i] for i in sorted(chosen))
    return IsingGraph(nodes=n, edges=edges, weights=(1.0,) * edge_count)
