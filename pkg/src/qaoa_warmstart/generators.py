"""The four parameter-generation routes and best-of selection.

Routes, cheapest first:

  exact       -- literal databank lookup by canonical key
  param-knn   -- inverse-distance-weighted average of neighbor parameters
  factor-knn  -- inverse-distance-weighted average of neighbor *scaling
                 factors*, pushed through the closed-form schedule
  formula     -- closed form alone; needs no databank, so it always
                 produces an answer and floors the output quality

Every candidate is scored with the engine and the best one wins, with
ties resolved toward the earlier route in the order above.

The closed form builds gamma from an asymptotic per-layer schedule
(configuration data), a degree factor arctan(1/sqrt(D-1)), the weight
scale alpha = rms(c), and an empirical correction coefficient; beta is
the asymptotic schedule unchanged.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sciopt

from . import engine
from .databank import Databank, InsufficientCoverageError
from .engine import IsingGraph, ParameterVector
from .graphs import CanonicalGraph, canonicalize
from .metric import MODE_SIMPLIFIED, MetricMatrix
from .sources import GraphCoordinate, infer_coordinate

ALGO_EXACT = "exact"
ALGO_PARAM_KNN = "param-knn"
ALGO_FACTOR_KNN = "factor-knn"
ALGO_FORMULA = "formula"
ALGORITHMS = (ALGO_EXACT, ALGO_PARAM_KNN, ALGO_FACTOR_KNN, ALGO_FORMULA)

DEFAULT_COEFFICIENT = 1.56


class GeneratorError(ValueError):
    """Degenerate degree, missing schedule, or no usable route."""


@dataclass(frozen=True)
class AsymptoticSchedule:
    """Per-layer asymptotic angles for one supported depth."""

    depth: int
    gamma_inf: tuple[float, ...]
    beta_inf: tuple[float, ...]

    def __post_init__(self):
        if len(self.gamma_inf) != self.depth or len(self.beta_inf) != self.depth:
            raise GeneratorError(
                f"schedule for depth {self.depth} has lengths "
                f"{len(self.gamma_inf)}/{len(self.beta_inf)}"
            )
        if not all(map(math.isfinite, self.gamma_inf + self.beta_inf)):
            raise GeneratorError("schedule contains non-finite angles")


def load_schedules(path=None) -> dict[int, AsymptoticSchedule]:
    """Schedules keyed by depth, from a JSON file or the packaged defaults."""
    if path is None:
        text = (
            importlib.resources.files("qaoa_warmstart")
            .joinpath("data/schedules.json")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    raw = json.loads(text)
    schedules = {}
    for depth_str, entry in raw.items():
        depth = int(depth_str)
        schedules[depth] = AsymptoticSchedule(
            depth=depth,
            gamma_inf=tuple(entry["gamma_inf"]),
            beta_inf=tuple(entry["beta_inf"]),
        )
    return schedules


def save_schedules(schedules: dict[int, AsymptoticSchedule], path) -> None:
    payload = {
        str(d): {"gamma_inf": list(s.gamma_inf), "beta_inf": list(s.beta_inf)}
        for d, s in sorted(schedules.items())
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def compute_alpha(g: IsingGraph) -> float:
    """Root-mean-square edge weight, the pairwise weight scale."""
    w = np.asarray(g.weights)
    return float(np.sqrt(np.mean(w * w)))


def baseline_factor(mean_degree: float) -> float:
    """arctan(1/sqrt(D-1)); undefined at or below mean degree 1."""
    if mean_degree <= 1.0:
        raise GeneratorError(
            f"degree factor undefined for mean degree {mean_degree}"
        )
    return math.atan(1.0 / math.sqrt(mean_degree - 1.0))


@dataclass(frozen=True)
class ScalingModel:
    """Everything that multiplies the asymptotic gammas for one graph."""

    alpha: float
    mean_degree: float
    factor: float
    coefficient: float = DEFAULT_COEFFICIENT
    alpha_exponent: int = -1

    def __post_init__(self):
        if self.alpha <= 0:
            raise GeneratorError(f"alpha must be positive, got {self.alpha}")
        if self.factor <= 0:
            raise GeneratorError(f"factor must be positive, got {self.factor}")
        if self.alpha_exponent not in (-1, 1):
            raise GeneratorError("alpha_exponent must be +1 or -1")

    @classmethod
    def for_graph(
        cls,
        g: IsingGraph,
        coefficient: float = DEFAULT_COEFFICIENT,
        alpha_exponent: int = -1,
        factor: float | None = None,
    ) -> "ScalingModel":
        d = g.mean_degree
        if factor is None:
            # Sparse graphs (mean degree <= 1) take the continuous limit
            # pi/2 of the arctan factor; the closed form must always
            # produce an answer, it is the floor of the whole pipeline.
            factor = baseline_factor(d) if d > 1.0 else math.pi / 2
        return cls(
            alpha=compute_alpha(g),
            mean_degree=d,
            factor=factor,
            coefficient=coefficient,
            alpha_exponent=alpha_exponent,
        )

    def gamma_multiplier(self) -> float:
        return self.coefficient * self.factor * self.alpha**self.alpha_exponent


def _assemble(sched: AsymptoticSchedule, multiplier: float) -> ParameterVector:
    gammas = [multiplier * gi for gi in sched.gamma_inf]
    return ParameterVector.from_angles(gammas, sched.beta_inf)


def formula_generate(
    g: IsingGraph,
    depth: int,
    schedules: dict[int, AsymptoticSchedule],
    coefficient: float = DEFAULT_COEFFICIENT,
    alpha_exponent: int = -1,
) -> ParameterVector:
    """Closed-form parameters; coefficient 1.0 is the uncorrected baseline."""
    sched = schedules.get(depth)
    if sched is None:
        raise GeneratorError(f"no asymptotic schedule for depth {depth}")
    model = ScalingModel.for_graph(g, coefficient, alpha_exponent)
    return _assemble(sched, model.gamma_multiplier())


def exact_match(
    cg: CanonicalGraph, depth: int, params_bank: Databank
) -> ParameterVector | None:
    """Stored parameters for a literal (key, depth) hit; None when absent."""
    record = params_bank.get(cg.key, depth)
    return None if record is None else record.params


def _inverse_distance_weights(neighbors: list[tuple[float, object]]) -> list[float]:
    total = sum(1.0 / d for d, _ in neighbors)
    return [(1.0 / d) / total for d, _ in neighbors]


def knn_parameters(
    coord: GraphCoordinate,
    depth: int,
    params_bank: Databank,
    k: int,
    mode: str = MODE_SIMPLIFIED,
    metric: MetricMatrix | None = None,
) -> ParameterVector:
    """Inverse-distance-weighted neighbor parameters, componentwise.

    A zero-distance neighbor short-circuits to that neighbor's parameters
    (the continuous limit of the weighting).  Raises
    InsufficientCoverageError below k finite-distance records.
    """
    neighbors = params_bank.nearest(coord, depth, k, mode, metric)
    if neighbors[0][0] == 0.0:
        return neighbors[0][1].params
    weights = _inverse_distance_weights(neighbors)
    values = np.zeros(2 * depth)
    for w, (_, rec) in zip(weights, neighbors):
        values += w * np.asarray(rec.params.values)
    return ParameterVector.from_values(values)


def interpolate_factor(
    coord: GraphCoordinate,
    depth: int,
    factor_bank: Databank,
    k: int,
    mode: str = MODE_SIMPLIFIED,
    metric: MetricMatrix | None = None,
) -> float:
    """Inverse-distance-weighted neighbor scaling factor (same limit rule)."""
    neighbors = factor_bank.nearest(coord, depth, k, mode, metric)
    if neighbors[0][0] == 0.0:
        return neighbors[0][1].factor
    weights = _inverse_distance_weights(neighbors)
    return float(sum(w * rec.factor for w, (_, rec) in zip(weights, neighbors)))


def factor_generate(
    g: IsingGraph,
    coord: GraphCoordinate,
    depth: int,
    factor_bank: Databank,
    schedules: dict[int, AsymptoticSchedule],
    k: int,
    mode: str = MODE_SIMPLIFIED,
    metric: MetricMatrix | None = None,
    alpha_exponent: int = -1,
) -> ParameterVector:
    """Closed-form gammas with the degree factor replaced by a transferred,
    databank-optimized one.  No correction coefficient: the transferred
    factors already absorb it."""
    sched = schedules.get(depth)
    if sched is None:
        raise GeneratorError(f"no asymptotic schedule for depth {depth}")
    o0 = interpolate_factor(coord, depth, factor_bank, k, mode, metric)
    model = ScalingModel.for_graph(g, coefficient=1.0, alpha_exponent=alpha_exponent, factor=o0)
    return _assemble(sched, model.gamma_multiplier())


def optimize_factor(
    g: IsingGraph,
    depth: int,
    schedules: dict[int, AsymptoticSchedule],
    alpha_exponent: int = -1,
    budget: int = 40,
    qubit_ceiling: int = engine.DEFAULT_QUBIT_CEILING,
) -> tuple[float, float]:
    """Best scalar degree factor for this graph, found derivative-free.

    Optimizes log(factor) (positivity by construction) with the simplex
    method seeded at the arctan baseline.  Returns (factor, score).
    """
    sched = schedules.get(depth)
    if sched is None:
        raise GeneratorError(f"no asymptotic schedule for depth {depth}")
    alpha = compute_alpha(g)
    base = ScalingModel.for_graph(g, alpha_exponent=alpha_exponent).factor
    multiplier_scale = alpha**alpha_exponent

    best = {"factor": base, "score": -math.inf}
    evals = {"n": 0}

    def objective(x):
        if evals["n"] >= budget:
            raise StopIteration
        evals["n"] += 1
        factor = math.exp(x[0])
        theta = _assemble(sched, factor * multiplier_scale)
        s = engine.score(g, theta, qubit_ceiling)
        if s > best["score"]:
            best["factor"] = factor
            best["score"] = s
        return -s

    try:
        sciopt.minimize(
            objective,
            np.array([math.log(base)]),
            method="Nelder-Mead",
            options={"maxfev": budget, "xatol": 1e-6, "fatol": 1e-10},
        )
    except StopIteration:
        pass
    return best["factor"], best["score"]


def _linear_ramp(depth: int, gamma_amp: float, beta_amp: float) -> ParameterVector:
    fractions = [(l + 0.5) / depth for l in range(depth)]
    return ParameterVector.from_angles(
        [gamma_amp * f for f in fractions],
        [-beta_amp * (1.0 - f) for f in fractions],
    )


def derive_schedule(
    reference: IsingGraph,
    depth: int,
    refine_budget: int = 500,
    qubit_ceiling: int = engine.DEFAULT_QUBIT_CEILING,
) -> AsymptoticSchedule:
    """Fit an asymptotic schedule by deeply optimizing one unweighted graph.

    Scans linear-ramp amplitudes (gamma rising across layers, beta rising
    from negative toward zero, the basin matching this engine's phase
    sign), locally refines the best ramp, and stores the optimized angles
    as the schedule.  The reference must be unweighted (alpha = 1),
    otherwise a weight scale would leak into the schedule.  Because the
    stored gammas are later multiplied by the degree factor, the closed
    form undershoots at coefficient 1; the correction coefficient exists
    to absorb exactly that bias.
    """
    from .optim import METHOD_QUASI_NEWTON, METHOD_SIMPLEX, local_optimize

    if any(w != 1.0 for w in reference.weights):
        raise GeneratorError("schedule reference graph must have unit weights")
    best_ramp = None
    for gamma_amp in np.linspace(0.05, 1.5, 20):
        for beta_amp in np.linspace(0.05, 1.5, 20):
            theta = _linear_ramp(depth, gamma_amp, beta_amp)
            s = engine.score(reference, theta, qubit_ceiling)
            if best_ramp is None or s > best_ramp[0]:
                best_ramp = (s, theta)
    result = local_optimize(
        reference, best_ramp[1], METHOD_QUASI_NEWTON, refine_budget,
        qubit_ceiling=qubit_ceiling,
    )
    result = local_optimize(
        reference, result.params, METHOD_SIMPLEX, refine_budget, scale=0.3,
        qubit_ceiling=qubit_ceiling,
    )
    result = local_optimize(
        reference, result.params, METHOD_QUASI_NEWTON, refine_budget,
        qubit_ceiling=qubit_ceiling,
    )
    return AsymptoticSchedule(
        depth=depth,
        gamma_inf=tuple(float(g) for g in result.params.gammas),
        beta_inf=tuple(float(b) for b in result.params.betas),
    )


@dataclass(frozen=True)
class GenerationResult:
    algorithm: str
    params: ParameterVector
    score: float


@dataclass(frozen=True)
class GeneratorSettings:
    """Knobs shared by every generation request."""

    schedules: dict[int, AsymptoticSchedule]
    ks: tuple[int, ...] = (1, 2)
    metric_mode: str = MODE_SIMPLIFIED
    metric: MetricMatrix | None = None
    coefficient: float = DEFAULT_COEFFICIENT
    alpha_exponent: int = -1
    qubit_ceiling: int = engine.DEFAULT_QUBIT_CEILING


def generate_best(
    g: IsingGraph,
    depth: int,
    params_bank: Databank,
    factor_bank: Databank,
    settings: GeneratorSettings,
) -> GenerationResult:
    """Run every route whose preconditions hold and keep the top scorer.

    The formula route always runs, so a result exists even over empty
    databanks; its failure (no schedule for the depth) is the only fatal
    error.  Ties go to the earlier route, which in particular hands a
    zero-distance k=1 interpolation back to the exact route.
    """
    cg = canonicalize(g)
    coord = infer_coordinate(g)
    candidates: list[tuple[float, int, GenerationResult]] = []

    def add(algorithm: str, priority: int, params: ParameterVector):
        s = engine.score(g, params, settings.qubit_ceiling)
        candidates.append(
            (s, priority, GenerationResult(algorithm=algorithm, params=params, score=s))
        )

    stored = exact_match(cg, depth, params_bank)
    if stored is not None:
        add(ALGO_EXACT, 0, stored)

    for k in settings.ks:
        try:
            add(
                ALGO_PARAM_KNN,
                1,
                knn_parameters(
                    coord, depth, params_bank, k, settings.metric_mode, settings.metric
                ),
            )
        except InsufficientCoverageError:
            break

    for k in settings.ks:
        try:
            add(
                ALGO_FACTOR_KNN,
                2,
                factor_generate(
                    g,
                    coord,
                    depth,
                    factor_bank,
                    settings.schedules,
                    k,
                    settings.metric_mode,
                    settings.metric,
                    settings.alpha_exponent,
                ),
            )
        except InsufficientCoverageError:
            break

    add(
        ALGO_FORMULA,
        3,
        formula_generate(
            g, depth, settings.schedules, settings.coefficient, settings.alpha_exponent
        ),
    )

    candidates.sort(key=lambda c: (-c[0], c[1]))
    return candidates[0][2]
