"""Distances between graphs in attribute space.

Four measures: plain Euclidean, Mahalanobis under a learned matrix M, the
cross-transfer "true" distance used as supervision, and the simplified
edge-count mode that the runtime uses by default.  M is represented by a
factor L with M = L^T L, which keeps it symmetric positive semidefinite
through unconstrained gradient descent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine import IsingGraph, ParameterVector
from .sources import GraphCoordinate

MODE_SIMPLIFIED = "simplified"
MODE_EUCLIDEAN = "euclidean"
MODE_MAHALANOBIS = "mahalanobis"
METRIC_MODES = (MODE_SIMPLIFIED, MODE_EUCLIDEAN, MODE_MAHALANOBIS)

# Simplified mode requires matching edge-probability buckets of this width.
EDGE_PROBABILITY_BUCKET = 0.05

COORDINATE_COMPONENTS = (
    "order",
    "node_count",
    "edge_count",
    "edge_probability",
    "weight_family_index",
    "weight_family_param_1",
    "weight_family_param_2",
)


class MetricError(ValueError):
    """Raised on dimension mismatches or empty training sets."""


@dataclass(frozen=True)
class MetricMatrix:
    """Symmetric PSD matrix M stored through its factor L (M = L^T L)."""

    l_factor: np.ndarray
    loss_trace: tuple[float, ...] = field(default=(), compare=False)

    @classmethod
    def identity(cls, dim: int) -> "MetricMatrix":
        return cls(l_factor=np.eye(dim))

    @property
    def dim(self) -> int:
        return self.l_factor.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.l_factor.T @ self.l_factor


def _as_vector(g) -> np.ndarray:
    if isinstance(g, GraphCoordinate):
        return g.vector()
    return np.asarray(g, dtype=float)


def euclidean_distance(gi, gj) -> float:
    """sqrt((gi - gj)^T (gi - gj)) over coordinate vectors."""
    a, b = _as_vector(gi), _as_vector(gj)
    if a.shape != b.shape:
        raise MetricError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def mahalanobis_distance(gi, gj, metric: MetricMatrix) -> float:
    """sqrt((gi - gj)^T M (gi - gj)); reduces to Euclidean for M = I."""
    a, b = _as_vector(gi), _as_vector(gj)
    if a.shape != b.shape or a.shape[0] != metric.dim:
        raise MetricError(
            f"dimension mismatch: {a.shape} vs {b.shape} under M of dim {metric.dim}"
        )
    y = metric.l_factor @ (a - b)
    return float(np.linalg.norm(y))


def simplified_distance(gi: GraphCoordinate, gj: GraphCoordinate) -> float:
    """Edge-count difference, gated on the remaining attributes.

    Finite only when interaction order, node count, weight-family kind and
    edge-probability bucket (width 0.05) all agree; +inf otherwise.
    Family parameters are deliberately not compared: maximum-likelihood
    fits of the same generator fluctuate per graph, the kind does not.
    """
    if (
        gi.order != gj.order
        or gi.node_count != gj.node_count
        or gi.weight_family.kind != gj.weight_family.kind
        or math.floor(gi.edge_probability / EDGE_PROBABILITY_BUCKET)
        != math.floor(gj.edge_probability / EDGE_PROBABILITY_BUCKET)
    ):
        return math.inf
    return float(abs(gi.edge_count - gj.edge_count))


@dataclass(frozen=True)
class TrueDistanceSample:
    """One supervised pair for metric learning.

    score_i/score_j are the stored optimal scores; cross_ji is gi's
    parameters evaluated on gj and cross_ij the reverse.  The supervision
    target is |score_i - cross_ji| + |score_j - cross_ij|, symmetric
    under swapping the pair.
    """

    coord_i: tuple[float, ...]
    coord_j: tuple[float, ...]
    score_i: float
    score_j: float
    cross_ji: float
    cross_ij: float

    @property
    def dist_true(self) -> float:
        return abs(self.score_i - self.cross_ji) + abs(self.score_j - self.cross_ij)


def true_distance(
    gi: IsingGraph,
    gj: IsingGraph,
    theta_i: ParameterVector,
    theta_j: ParameterVector,
    coord_i=None,
    coord_j=None,
) -> TrueDistanceSample:
    """Evaluate the four scores behind the cross-transfer distance."""
    if theta_i.depth != theta_j.depth:
        raise MetricError(
            f"depth mismatch: {theta_i.depth} vs {theta_j.depth}"
        )
    ci = tuple(_as_vector(coord_i)) if coord_i is not None else ()
    cj = tuple(_as_vector(coord_j)) if coord_j is not None else ()
    return TrueDistanceSample(
        coord_i=ci,
        coord_j=cj,
        score_i=engine.score(gi, theta_i),
        score_j=engine.score(gj, theta_j),
        cross_ji=engine.score(gj, theta_i),
        cross_ij=engine.score(gi, theta_j),
    )


@dataclass(frozen=True)
class MetricLearnConfig:
    pair_budget: int = 10_000
    steps: int = 300
    step_size: float = 0.01
    seed: int = 0


def _pair_loss(l_factor: np.ndarray, deltas: np.ndarray, targets: np.ndarray) -> float:
    d = np.linalg.norm(deltas @ l_factor.T, axis=1)
    return 0.5 * float(np.sum((d - targets) ** 2))


def learn_metric(samples, cfg: MetricLearnConfig = MetricLearnConfig()) -> MetricMatrix:
    """Fit M = L^T L by gradient descent on sum 1/2 (dist_M - dist_true)^2.

    L starts at the identity (zero steps returns the identity metric).
    When the pair budget is below the sample count, a seeded Monte Carlo
    subset is drawn once and descent runs full-batch on it, so the loss
    trace is non-increasing (backtracking halves the step on any
    non-improving move).  Pairs with coincident coordinates carry no
    gradient and are skipped.
    """
    samples = list(samples)
    if not samples:
        raise MetricError("empty sample set")
    dim = len(samples[0].coord_i)
    for s in samples:
        if len(s.coord_i) != dim or len(s.coord_j) != dim:
            raise MetricError("samples have inconsistent coordinate dimensions")
    if cfg.pair_budget < len(samples):
        rng = np.random.default_rng(cfg.seed)
        idx = rng.choice(len(samples), size=cfg.pair_budget, replace=False)
        samples = [samples[i] for i in sorted(idx)]

    deltas = np.array(
        [np.asarray(s.coord_i) - np.asarray(s.coord_j) for s in samples]
    )
    targets = np.array([s.dist_true for s in samples])
    keep = np.linalg.norm(deltas, axis=1) > 0
    deltas, targets = deltas[keep], targets[keep]

    L = np.eye(dim)
    if deltas.shape[0] == 0 or cfg.steps == 0:
        return MetricMatrix(l_factor=L, loss_trace=(_pair_loss(L, deltas, targets),))

    step = cfg.step_size
    loss = _pair_loss(L, deltas, targets)
    trace = [loss]
    for _ in range(cfg.steps):
        y = deltas @ L.T
        d = np.linalg.norm(y, axis=1)
        coef = (d - targets) / d
        grad = (coef[:, None] * y).T @ deltas
        improved = False
        for _ in range(40):
            candidate = L - step * grad
            cand_loss = _pair_loss(candidate, deltas, targets)
            if cand_loss <= loss:
                L, loss, improved = candidate, cand_loss, True
                step *= 1.2
                break
            step *= 0.5
        trace.append(loss)
        if not improved:
            break
    return MetricMatrix(l_factor=L, loss_trace=tuple(trace))


@dataclass(frozen=True)
class Standardizer:
    """Per-component z-scoring fitted on databank coordinates.

    Counts and probabilities live on incommensurate scales; distances in
    the euclidean/mahalanobis modes are taken on standardized vectors.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, vectors) -> "Standardizer":
        arr = np.asarray(list(vectors), dtype=float)
        if arr.size == 0:
            raise MetricError("cannot fit a standardizer on no vectors")
        std = arr.std(axis=0)
        std[std == 0] = 1.0
        return cls(mean=arr.mean(axis=0), std=std)

    def transform(self, vector) -> np.ndarray:
        return (np.asarray(vector, dtype=float) - self.mean) / self.std


def save_metric(metric: MetricMatrix, path) -> None:
    """Persist M as JSON with its dimension and component ordering."""
    payload = {
        "dim": metric.dim,
        "components": list(COORDINATE_COMPONENTS[: metric.dim]),
        "l_factor": metric.l_factor.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_metric(path) -> MetricMatrix:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    l_factor = np.asarray(payload["l_factor"], dtype=float)
    if l_factor.shape != (payload["dim"], payload["dim"]):
        raise MetricError(f"metric file {path} has inconsistent dimensions")
    return MetricMatrix(l_factor=l_factor)
