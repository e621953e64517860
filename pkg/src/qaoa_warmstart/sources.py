"""Data-source identification: weight-distribution fitting and graph coordinates.

Every graph gets a coordinate in attribute space: interaction order, node
count, edge count, edge-generation probability, and the maximum-likelihood
edge-weight distribution family.  Family selection is Bayesian with a
uniform prior over the catalog, which reduces to picking the family with
the highest log-likelihood sum(log P(w_i | f)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import IsingGraph

# Catalog order doubles as the deterministic tie-break order.
POINT_MASS = "point-mass"
DISCRETE_UNIFORM = "discrete-uniform"
CONTINUOUS_UNIFORM = "continuous-uniform"
NORMAL = "normal"

FAMILY_KINDS = (POINT_MASS, DISCRETE_UNIFORM, CONTINUOUS_UNIFORM, NORMAL)

NEG_INF = float("-inf")


class SourceError(ValueError):
    """Raised when no catalog family can explain the observed weights."""


@dataclass(frozen=True)
class WeightFamily:
    """A concrete weight distribution: a family kind plus its parameters.

    Parameters by kind:
        point-mass(value)            -- all mass on a single value
        discrete-uniform(a, b)       -- uniform on the integers {a..b}
        continuous-uniform(a, b)     -- uniform density on [a, b]
        normal(mu, sigma)            -- Gaussian density
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown weight family kind {self.kind!r}")
        expected = 1 if self.kind == POINT_MASS else 2
        if len(self.params) != expected:
            raise ValueError(
                f"{self.kind} takes {expected} parameter(s), got {len(self.params)}"
            )
        if self.kind == DISCRETE_UNIFORM:
            a, b = self.params
            if a != int(a) or b != int(b) or b < a:
                raise ValueError(f"discrete-uniform needs integers a <= b, got {self.params}")
        if self.kind == CONTINUOUS_UNIFORM and self.params[1] <= self.params[0]:
            raise ValueError(f"continuous-uniform needs a < b, got {self.params}")
        if self.kind == NORMAL and self.params[1] <= 0:
            raise ValueError(f"normal needs sigma > 0, got {self.params}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` weights from this distribution."""
        if self.kind == POINT_MASS:
            return np.full(size, self.params[0])
        if self.kind == DISCRETE_UNIFORM:
            a, b = self.params
            return rng.integers(int(a), int(b) + 1, size=size).astype(float)
        if self.kind == CONTINUOUS_UNIFORM:
            return rng.uniform(self.params[0], self.params[1], size=size)
        return rng.normal(self.params[0], self.params[1], size=size)

    def log_prob(self, w: float) -> float:
        """log P(w | family); -inf when w has no mass/density."""
        if self.kind == POINT_MASS:
            return 0.0 if w == self.params[0] else NEG_INF
        if self.kind == DISCRETE_UNIFORM:
            a, b = self.params
            if w == int(w) and a <= w <= b:
                return -math.log(b - a + 1)
            return NEG_INF
        if self.kind == CONTINUOUS_UNIFORM:
            a, b = self.params
            if a <= w <= b:
                return -math.log(b - a)
            return NEG_INF
        mu, sigma = self.params
        return -0.5 * math.log(2 * math.pi * sigma * sigma) - (w - mu) ** 2 / (
            2 * sigma * sigma
        )


def log_likelihood(weights, family: WeightFamily) -> float:
    """sum_i log P(w_i | family) over a non-empty weight sequence.

    Returns the -inf sentinel as soon as any observation is out of support.
    Additive over concatenation whenever both halves are finite.
    """
    weights = list(weights)
    if not weights:
        raise ValueError("empty weight sequence")
    total = 0.0
    for w in weights:
        lp = family.log_prob(w)
        if lp == NEG_INF:
            return NEG_INF
        total += lp
    return total


def fit_family(kind: str, weights) -> WeightFamily | None:
    """Maximum-likelihood parameters of one family kind on observed weights.

    Returns None when the family cannot represent the data at all (e.g.
    point-mass on non-constant weights, discrete-uniform on non-integers)
    or when the MLE is degenerate and another catalog member dominates
    (zero-width uniforms and zero-variance normals defer to point-mass).
    """
    w = np.asarray(list(weights), dtype=float)
    if w.size == 0:
        raise ValueError("empty weight sequence")
    lo, hi = float(w.min()), float(w.max())
    if kind == POINT_MASS:
        return WeightFamily(POINT_MASS, (lo,)) if lo == hi else None
    if kind == DISCRETE_UNIFORM:
        if not np.all(w == np.round(w)):
            return None
        return WeightFamily(DISCRETE_UNIFORM, (lo, hi))
    if kind == CONTINUOUS_UNIFORM:
        if hi == lo:
            return None
        # All-integer data belongs to the discrete families: a density on
        # [min, max] would outscore the discrete-uniform mass on every
        # integer sample purely because densities and masses are not
        # commensurable, misidentifying discrete generators.
        if np.all(w == np.round(w)):
            return None
        return WeightFamily(CONTINUOUS_UNIFORM, (lo, hi))
    if kind == NORMAL:
        mu = float(w.mean())
        sigma = float(w.std())  # population MLE
        if sigma == 0.0:
            return None
        return WeightFamily(NORMAL, (mu, sigma))
    raise ValueError(f"unknown weight family kind {kind!r}")


# Fixed slot index of each family kind in the coordinate vector.
_FAMILY_INDEX = {kind: i for i, kind in enumerate(FAMILY_KINDS)}

# Coordinate layout: [order, node_count, edge_count, edge_probability,
#                     family_index, family_param_1, family_param_2]
COORDINATE_DIM = 7


@dataclass(frozen=True)
class GraphCoordinate:
    """A graph's position in attribute space.

    The vector view has the fixed layout documented above; point-mass pads
    its single parameter with 0 so every family occupies two slots.
    """

    order: int
    node_count: int
    edge_count: int
    edge_probability: float
    weight_family: WeightFamily

    def vector(self) -> np.ndarray:
        p = self.weight_family.params
        fam = (p[0], 0.0) if len(p) == 1 else (p[0], p[1])
        return np.array(
            [
                float(self.order),
                float(self.node_count),
                float(self.edge_count),
                float(self.edge_probability),
                float(_FAMILY_INDEX[self.weight_family.kind]),
                fam[0],
                fam[1],
            ]
        )


def infer_coordinate(
    g: IsingGraph, catalog: tuple[str, ...] = FAMILY_KINDS
) -> GraphCoordinate:
    """Identify the graph's source attributes.

    Each catalog family is fitted by maximum likelihood on the observed
    weights, then families compete on log-likelihood (uniform prior, so
    the Bayes argmax equals the likelihood argmax).  Ties break toward the
    earlier catalog entry.  Edge probability is the MLE count ratio
    |E| / C(n, 2).
    """
    best_ll = NEG_INF
    best_family = None
    for kind in catalog:
        fam = fit_family(kind, g.weights)
        if fam is None:
            continue
        ll = log_likelihood(g.weights, fam)
        if ll > best_ll:
            best_ll = ll
            best_family = fam
    if best_family is None:
        raise SourceError("no catalog family assigns positive likelihood")
    n = g.nodes
    num_pairs = n * (n - 1) // 2
    return GraphCoordinate(
        order=g.order,
        node_count=n,
        edge_count=g.edge_count,
        edge_probability=g.edge_count / num_pairs,
        weight_family=best_family,
    )
