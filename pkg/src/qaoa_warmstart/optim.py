"""Classical refinement of QAOA angles.

Two local methods behind semantic ids -- a derivative-free simplex and a
gradient-driven quasi-Newton step -- plus the alternating driver that
cycles methods while each round inherits the best parameters found so
far.  All entry points track the best evaluated point themselves, so a
result is never worse than its initialization regardless of where the
underlying optimizer stops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sciopt

from . import engine
from .engine import IsingGraph, ParameterVector

METHOD_SIMPLEX = "derivative-free-simplex"
METHOD_QUASI_NEWTON = "quasi-newton-gradient"

KNOWN_METHODS = (METHOD_SIMPLEX, METHOD_QUASI_NEWTON)

# Random-initialization ranges: gamma in [-pi, pi], beta in [-pi/2, pi/2].
GAMMA_RANGE = (-np.pi, np.pi)
BETA_RANGE = (-np.pi / 2, np.pi / 2)


class OptimizationError(ValueError):
    """Raised for unknown method ids or invalid schedules."""


@dataclass(frozen=True)
class OptResult:
    """Outcome of a refinement run.

    ``trace`` records (method id, best score after that round) pairs;
    scores along the trace are non-decreasing.  ``evaluations`` counts
    objective calls, with each analytic-gradient call counted as one
    evaluation of overhead.
    """

    params: ParameterVector
    score: float
    evaluations: int
    trace: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class ScheduleEntry:
    method: str
    budget: int
    scale: float = 1.0

    def __post_init__(self):
        if self.method not in KNOWN_METHODS:
            raise OptimizationError(f"unknown optimization method {self.method!r}")
        if self.budget < 1:
            raise OptimizationError("budget must be >= 1")
        if self.scale <= 0:
            raise OptimizationError("scale must be positive")


@dataclass(frozen=True)
class OptSchedule:
    """Cyclic alternation plan: entries run in order, repeated up to
    ``max_rounds`` times, stopping once a full cycle improves the score
    by less than ``epsilon``."""

    entries: tuple[ScheduleEntry, ...]
    epsilon: float = 1e-4
    max_rounds: int = 6

    def __post_init__(self):
        if not self.entries:
            raise OptimizationError("schedule needs at least one entry")
        if self.max_rounds < 1:
            raise OptimizationError("max_rounds must be >= 1")

    @classmethod
    def from_dict(cls, spec: dict) -> "OptSchedule":
        entries = tuple(
            ScheduleEntry(
                method=e["method"],
                budget=int(e["budget"]),
                scale=float(e.get("scale", 1.0)),
            )
            for e in spec.get("methods", [])
        )
        return cls(
            entries=entries,
            epsilon=float(spec.get("epsilon", 1e-4)),
            max_rounds=int(spec.get("rounds", 6)),
        )


def random_parameters(p: int, rng: np.random.Generator) -> ParameterVector:
    """Uniform random angles, gamma in [-pi, pi] and beta in [-pi/2, pi/2]."""
    if p < 1:
        raise OptimizationError("depth must be >= 1")
    gammas = rng.uniform(*GAMMA_RANGE, size=p)
    betas = rng.uniform(*BETA_RANGE, size=p)
    return ParameterVector.from_angles(gammas, betas)


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Counting wrapper around -score with best-point tracking.

    Raises once the evaluation budget is spent; the caller catches and
    returns the best point seen, which keeps scipy's own stopping
    behavior out of the contract.
    """

    def __init__(self, g: IsingGraph, budget: int, qubit_ceiling: int):
        self.g = g
        self.budget = budget
        self.qubit_ceiling = qubit_ceiling
        self.count = 0
        self.best_x = None
        self.best_score = -np.inf

    def _spend(self):
        if self.count >= self.budget:
            raise _BudgetExhausted
        self.count += 1

    def __call__(self, x: np.ndarray) -> float:
        self._spend()
        s = engine.score(
            self.g, ParameterVector.from_values(x), self.qubit_ceiling
        )
        if s > self.best_score:
            self.best_score = s
            self.best_x = np.array(x, dtype=float)
        return -s

    def grad(self, x: np.ndarray) -> np.ndarray:
        self._spend()
        return -engine.gradient(
            self.g, ParameterVector.from_values(x), self.qubit_ceiling
        )


def local_optimize(
    g: IsingGraph,
    init: ParameterVector,
    method: str = METHOD_SIMPLEX,
    budget: int = 200,
    scale: float = 1.0,
    qubit_ceiling: int = engine.DEFAULT_QUBIT_CEILING,
) -> OptResult:
    """Refine ``init`` with one local method under an evaluation budget.

    The returned score is never below score(g, init); with budget 1 the
    result is exactly the evaluated initialization.  ``scale`` sets the
    simplex initial step (0.1 * scale radians) and, for the quasi-Newton
    method, rescales the search coordinates, which acts as a step-length
    multiplier.
    """
    if method not in KNOWN_METHODS:
        raise OptimizationError(f"unknown optimization method {method!r}")
    obj = _Objective(g, budget, qubit_ceiling)
    x0 = np.asarray(init.values, dtype=float)
    try:
        obj(x0)  # guarantees the init is the floor of best-so-far
        if method == METHOD_SIMPLEX:
            step = 0.1 * scale
            simplex = [x0]
            for i in range(x0.size):
                v = x0.copy()
                v[i] += step
                simplex.append(v)
            sciopt.minimize(
                obj,
                x0,
                method="Nelder-Mead",
                options={
                    "initial_simplex": np.array(simplex),
                    "maxfev": budget,
                    "xatol": 1e-8,
                    "fatol": 1e-10,
                },
            )
        else:
            fun = lambda u: obj(x0 + scale * u)
            jac = lambda u: scale * obj.grad(x0 + scale * u)
            sciopt.minimize(
                fun,
                np.zeros_like(x0),
                jac=jac,
                method="BFGS",
                options={"maxiter": budget, "gtol": 1e-8},
            )
    except _BudgetExhausted:
        pass
    params = ParameterVector.from_values(obj.best_x)
    return OptResult(
        params=params,
        score=obj.best_score,
        evaluations=obj.count,
        trace=((method, obj.best_score),),
    )


def alternating_optimize(
    g: IsingGraph,
    init: ParameterVector,
    schedule: OptSchedule,
    qubit_ceiling: int = engine.DEFAULT_QUBIT_CEILING,
) -> OptResult:
    """Run schedule entries cyclically, each round inheriting the current
    best parameters, until a full cycle gains less than epsilon or the
    round cap is hit."""
    best = ParameterVector.from_values(init.values)
    best_score = engine.score(g, best, qubit_ceiling)
    evaluations = 1
    trace: list[tuple[str, float]] = []
    for _ in range(schedule.max_rounds):
        cycle_start = best_score
        for entry in schedule.entries:
            res = local_optimize(
                g, best, entry.method, entry.budget, entry.scale, qubit_ceiling
            )
            evaluations += res.evaluations
            if res.score > best_score:
                best_score = res.score
                best = res.params
            trace.append((entry.method, best_score))
        if best_score - cycle_start < schedule.epsilon:
            break
    return OptResult(
        params=best, score=best_score, evaluations=evaluations, trace=tuple(trace)
    )
