"""Background parameter search: mutate, inherit, fine-tune, upsert, recurse.

Starting from seed graphs, each task optimizes its graph (children start
from the parent's optimized parameters, so their fine-tune converges
cheaply), writes the result to the databanks, and spawns mutated child
tasks until the chain-generation cap.  The queue is ordered by expected
coverage gain: tasks whose coordinate is far from every stored record run
first.

Determinism: every task carries a seed, child seeds derive from it, and
with a single worker (the default) two runs with the same seeds and
budgets produce identical upsert logs.  With several workers the store
still converges to the same content, but the log order may differ.
"""

from __future__ import annotations

import heapq
import itertools
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import databank as databank_mod
from .config import DaemonConfig
from .databank import Databank, FactorRecord, InsufficientCoverageError, ParamRecord
from .engine import IsingGraph, ParameterVector
from .generators import (
    GeneratorSettings,
    compute_alpha,
    formula_generate,
    optimize_factor,
)
from .graphs import canonicalize
from .metric import MetricMatrix
from .optim import OptResult, OptSchedule, alternating_optimize
from .sources import infer_coordinate


@dataclass(frozen=True)
class MutationConfig:
    weight_sigma: float = 0.1
    edge_toggle_prob: float = 0.3
    max_mutations: int = 2
    children_per_parent: int = 3
    max_generation: int = 8

    def __post_init__(self):
        if not 0.0 <= self.edge_toggle_prob <= 1.0:
            raise ValueError("edge_toggle_prob must lie in [0, 1]")
        if self.weight_sigma <= 0:
            raise ValueError("weight_sigma must be positive")


@dataclass(frozen=True)
class SearchTask:
    graph: IsingGraph
    depth: int
    init_params: ParameterVector | None
    generation: int
    parent_key: str | None
    priority: float
    seed: int

    def __post_init__(self):
        if (self.generation == 0) != (self.parent_key is None):
            raise ValueError("generation 0 iff no parent")
        if not math.isfinite(self.priority) and self.priority != math.inf:
            raise ValueError("priority must be finite or +inf")


def _all_pairs(n: int):
    return list(itertools.combinations(range(n), 2))


def mutate(g: IsingGraph, cfg: MutationConfig, rng: np.random.Generator) -> IsingGraph:
    """A child graph within max_mutations elementary edits of the parent.

    Edits: multiply one weight by a Gaussian factor (rounded back to
    integers when the parent is integer-weighted, so children stay in the
    parent's weight-family bucket), add a random absent edge with a weight
    drawn from the parent's inferred family, or remove one edge.  Edits
    that would break validity (no edges left, nothing to add) are
    re-drawn; node count never changes.
    """
    if cfg.max_mutations < 1:
        return g
    edges = list(g.edges)
    weights = list(g.weights)
    integer_weights = all(w == int(w) for w in weights)
    family = infer_coordinate(g).weight_family
    pairs = _all_pairs(g.nodes)
    edits = int(rng.integers(1, cfg.max_mutations + 1))
    for _ in range(edits):
        toggle = rng.random() < cfg.edge_toggle_prob
        can_add = len(edges) < len(pairs)
        can_remove = len(edges) > 1
        if toggle and (can_add or can_remove):
            if can_add and (not can_remove or rng.random() < 0.5):
                present = {(min(u, v), max(u, v)) for u, v in edges}
                absent = [p for p in pairs if p not in present]
                pick = absent[int(rng.integers(len(absent)))]
                w = float(family.sample(rng, 1)[0])
                edges.append(pick)
                weights.append(w)
            else:
                drop = int(rng.integers(len(edges)))
                edges.pop(drop)
                weights.pop(drop)
        else:
            idx = int(rng.integers(len(weights)))
            factor = 1.0 + cfg.weight_sigma * float(rng.standard_normal())
            w = weights[idx] * factor
            if integer_weights:
                w = float(round(w))
            weights[idx] = w
    return IsingGraph(nodes=g.nodes, edges=tuple(edges), weights=tuple(weights))


@dataclass
class ChainOutcome:
    result: OptResult
    stored_score: float
    record_outcome: str
    factor_outcome: str | None
    children: list[SearchTask] = field(default_factory=list)


def chain_step(
    task: SearchTask,
    params_bank: Databank,
    factor_bank: Databank,
    settings: GeneratorSettings,
    opt_schedule: OptSchedule,
    mutation: MutationConfig,
    factor_budget_share: int = 4,
) -> ChainOutcome:
    """Optimize one task's graph, store the results, spawn child tasks.

    Generation-0 tasks start from the closed-form parameters; children
    start from their parent's optimized parameters.  After the parameter
    optimization a scalar-factor optimization runs on roughly a quarter
    of the spent evaluation budget and feeds the factor store.
    """
    g = task.graph
    init = task.init_params
    if init is None:
        init = formula_generate(
            g, task.depth, settings.schedules, settings.coefficient,
            settings.alpha_exponent,
        )
    result = alternating_optimize(g, init, opt_schedule, settings.qubit_ceiling)

    cg = canonicalize(g)
    coord = infer_coordinate(g)

    factor_budget = max(result.evaluations // max(factor_budget_share, 1), 8)
    factor, factor_score = optimize_factor(
        g, task.depth, settings.schedules, settings.alpha_exponent,
        budget=factor_budget, qubit_ceiling=settings.qubit_ceiling,
    )
    factor_record = FactorRecord(
        key=cg.key,
        graph=cg.graph.to_json_obj(),
        coordinate=coord,
        depth=task.depth,
        factor=factor,
        score=factor_score,
        updated_at=databank_mod.now(),
    )
    factor_outcome = factor_bank.upsert_if_better(factor_record, verify=False)

    # Store the better of the two routes so the record really is the
    # best parameters this task ever saw.
    best_params, best_score = result.params, result.score
    if factor_score > best_score:
        sched = settings.schedules[task.depth]
        multiplier = factor * compute_alpha(g) ** settings.alpha_exponent
        best_params = ParameterVector.from_angles(
            [multiplier * gi for gi in sched.gamma_inf], sched.beta_inf
        )
        best_score = factor_score
    record = ParamRecord(
        key=cg.key,
        graph=cg.graph.to_json_obj(),
        coordinate=coord,
        depth=task.depth,
        params=best_params,
        score=best_score,
        provenance=databank_mod.PROVENANCE_DAEMON,
        updated_at=databank_mod.now(),
    )
    record_outcome = params_bank.upsert_if_better(record)

    children = []
    if task.generation < mutation.max_generation:
        for i in range(mutation.children_per_parent):
            child_rng = np.random.default_rng([task.seed, i])
            child_graph = mutate(g, mutation, child_rng)
            children.append(
                SearchTask(
                    graph=child_graph,
                    depth=task.depth,
                    init_params=result.params,
                    generation=task.generation + 1,
                    parent_key=cg.key,
                    priority=0.0,  # assigned at enqueue time
                    seed=int(child_rng.integers(0, 2**62)),
                )
            )
    return ChainOutcome(
        result=result,
        stored_score=best_score,
        record_outcome=record_outcome,
        factor_outcome=factor_outcome,
        children=children,
    )


class SearchDaemon:
    """Priority-driven continuous search over a pair of databanks."""

    def __init__(
        self,
        params_bank: Databank,
        factor_bank: Databank,
        settings: GeneratorSettings,
        opt_schedule: OptSchedule,
        daemon_cfg: DaemonConfig = DaemonConfig(),
        metric: MetricMatrix | None = None,
        params_path=None,
        factors_path=None,
        seed: int = 0,
    ):
        self.params_bank = params_bank
        self.factor_bank = factor_bank
        self.settings = settings
        self.opt_schedule = opt_schedule
        self.cfg = daemon_cfg
        self.mutation = MutationConfig(
            weight_sigma=daemon_cfg.weight_sigma,
            edge_toggle_prob=daemon_cfg.edge_toggle_prob,
            max_mutations=daemon_cfg.max_mutations,
            children_per_parent=daemon_cfg.children_per_parent,
            max_generation=daemon_cfg.max_generation,
        )
        self.metric = metric
        self.params_path = params_path
        self.factors_path = factors_path
        self.seed = seed
        self._queue: list = []
        self._counter = itertools.count()
        self.events: list[dict] = []
        self.upsert_log: list[tuple[str, int, float]] = []

    # -- scheduling -----------------------------------------------------

    def _priority(self, g: IsingGraph, depth: int) -> float:
        """Distance from the graph to its nearest stored record: far
        tasks fill uncovered regions first."""
        coord = infer_coordinate(g)
        try:
            nearest = self.params_bank.nearest(
                coord, depth, 1, self.settings.metric_mode, self.metric
            )
            return nearest[0][0]
        except InsufficientCoverageError:
            return math.inf

    def enqueue(self, task: SearchTask) -> None:
        task = SearchTask(
            graph=task.graph,
            depth=task.depth,
            init_params=task.init_params,
            generation=task.generation,
            parent_key=task.parent_key,
            priority=self._priority(task.graph, task.depth),
            seed=task.seed,
        )
        heapq.heappush(self._queue, (-task.priority, next(self._counter), task))

    def seed_tasks(self, graphs, depths=None) -> None:
        depths = tuple(depths) if depths is not None else self.cfg.depths
        rng = np.random.default_rng(self.seed)
        for g in graphs:
            for depth in depths:
                self.enqueue(
                    SearchTask(
                        graph=g,
                        depth=depth,
                        init_params=None,
                        generation=0,
                        parent_key=None,
                        priority=0.0,
                        seed=int(rng.integers(0, 2**62)),
                    )
                )

    # -- execution --------------------------------------------------------

    def _commit(self, task: SearchTask, outcome: ChainOutcome) -> None:
        key = canonicalize(task.graph).key
        self.events.append(
            {
                "event": "task",
                "key": key,
                "depth": task.depth,
                "generation": task.generation,
                "parent": task.parent_key,
                "score": outcome.stored_score,
                "evaluations": outcome.result.evaluations,
                "outcome": outcome.record_outcome,
                "factor_outcome": outcome.factor_outcome,
            }
        )
        if outcome.record_outcome in ("created", "replaced"):
            self.upsert_log.append((key, task.depth, outcome.stored_score))
        for child in outcome.children:
            self.enqueue(child)

    def _flush(self) -> None:
        if self.params_path is not None:
            self.params_bank.save(self.params_path)
        if self.factors_path is not None:
            self.factor_bank.save(self.factors_path)

    def run(
        self,
        max_tasks: int | None = None,
        stop: threading.Event | None = None,
    ) -> int:
        """Process tasks until the queue, the task cap, or the stop signal
        ends the run; flush stores on the way out.  Returns tasks done."""
        stop = stop or threading.Event()
        done = 0
        started = time.monotonic()
        evaluations = 0
        while self._queue and not stop.is_set():
            if max_tasks is not None and done >= max_tasks:
                break
            batch_size = self.cfg.workers
            if max_tasks is not None:
                batch_size = min(batch_size, max_tasks - done)
            batch = [
                heapq.heappop(self._queue)[2]
                for _ in range(min(batch_size, len(self._queue)))
            ]

            def process(task: SearchTask) -> ChainOutcome:
                return chain_step(
                    task,
                    self.params_bank,
                    self.factor_bank,
                    self.settings,
                    self.opt_schedule,
                    self.mutation,
                    self.cfg.factor_budget_share,
                )

            if len(batch) == 1:
                outcomes = [process(batch[0])]
            else:
                with ThreadPoolExecutor(max_workers=len(batch)) as pool:
                    outcomes = list(pool.map(process, batch))
            for task, outcome in zip(batch, outcomes):
                self._commit(task, outcome)
                done += 1
                evaluations += outcome.result.evaluations
            if self.cfg.save_every and done % self.cfg.save_every < len(batch):
                self._flush()
            if self.cfg.evals_per_second:
                target = evaluations / self.cfg.evals_per_second
                elapsed = time.monotonic() - started
                if target > elapsed:
                    time.sleep(min(target - elapsed, 1.0))
        self._flush()
        return done
