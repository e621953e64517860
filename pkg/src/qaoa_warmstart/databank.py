"""Persistent stores of optimized parameters and optimized scaling factors.

Records are keyed by (canonical graph key, depth) and only ever improve:
an upsert replaces the incumbent only on a strictly greater score, and
every write re-evaluates the claimed score before it is accepted.  The
on-disk format is JSON lines with a one-line schema header; save() writes
a complete snapshot atomically (temp file + rename) so a reader never
sees a torn store.

Records embed the graph's wire-format payload alongside the spec'd
fields.  Scores could not be re-verified (and merged banks could not be
audited) from the coordinate alone, so the store is self-contained.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass, replace

from . import engine
from .engine import ParameterVector
from .graphs import parse_graph
from .metric import (
    MODE_EUCLIDEAN,
    MODE_MAHALANOBIS,
    MODE_SIMPLIFIED,
    MetricMatrix,
    Standardizer,
    euclidean_distance,
    mahalanobis_distance,
    simplified_distance,
)
from .sources import GraphCoordinate, WeightFamily

PARAMS_SCHEMA = "qaoa-warmstart/params-v1"
FACTORS_SCHEMA = "qaoa-warmstart/factors-v1"

PROVENANCE_DAEMON = "search-daemon"
PROVENANCE_USER = "user-submission"
PROVENANCE_IMPORT = "import"
PROVENANCES = (PROVENANCE_DAEMON, PROVENANCE_USER, PROVENANCE_IMPORT)

SCORE_VERIFY_TOL = 1e-6


class DatabankError(ValueError):
    """Malformed files, schema mismatches, or invalid records."""


class IntegrityError(DatabankError):
    """A record's claimed score does not re-evaluate within tolerance."""


class InsufficientCoverageError(LookupError):
    """Fewer finite-distance records than the neighbor query needs."""


@dataclass(frozen=True)
class ParamRecord:
    key: str
    graph: dict
    coordinate: GraphCoordinate
    depth: int
    params: ParameterVector
    score: float
    provenance: str = PROVENANCE_DAEMON
    updated_at: float = 0.0

    def __post_init__(self):
        if self.params.depth != self.depth:
            raise DatabankError(
                f"params encode depth {self.params.depth}, record says {self.depth}"
            )
        if self.provenance not in PROVENANCES:
            raise DatabankError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class FactorRecord:
    key: str
    graph: dict
    coordinate: GraphCoordinate
    depth: int
    factor: float
    score: float
    updated_at: float = 0.0

    def __post_init__(self):
        if self.factor <= 0:
            raise DatabankError(f"factor must be positive, got {self.factor}")


def _coordinate_to_obj(c: GraphCoordinate) -> dict:
    return {
        "order": c.order,
        "node_count": c.node_count,
        "edge_count": c.edge_count,
        "edge_probability": c.edge_probability,
        "family": {"kind": c.weight_family.kind, "params": list(c.weight_family.params)},
    }


def _coordinate_from_obj(obj: dict) -> GraphCoordinate:
    fam = WeightFamily(obj["family"]["kind"], tuple(obj["family"]["params"]))
    return GraphCoordinate(
        order=obj["order"],
        node_count=obj["node_count"],
        edge_count=obj["edge_count"],
        edge_probability=obj["edge_probability"],
        weight_family=fam,
    )


def _record_to_obj(record) -> dict:
    obj = {
        "key": record.key,
        "graph": record.graph,
        "coordinate": _coordinate_to_obj(record.coordinate),
        "depth": record.depth,
        "score": record.score,
        "updated_at": record.updated_at,
    }
    if isinstance(record, ParamRecord):
        obj["params"] = list(record.params.values)
        obj["provenance"] = record.provenance
    else:
        obj["factor"] = record.factor
    return obj


def _record_from_obj(obj: dict, kind: str):
    common = dict(
        key=obj["key"],
        graph=obj["graph"],
        coordinate=_coordinate_from_obj(obj["coordinate"]),
        depth=obj["depth"],
        score=obj["score"],
        updated_at=obj["updated_at"],
    )
    if kind == "params":
        return ParamRecord(
            params=ParameterVector.from_values(obj["params"]),
            provenance=obj["provenance"],
            **common,
        )
    return FactorRecord(factor=obj["factor"], **common)


def default_param_evaluator(record: ParamRecord) -> float:
    g = parse_graph(record.graph, nodes=record.coordinate.node_count)
    return engine.score(g, record.params)


@dataclass(frozen=True)
class MergeReport:
    created: int
    replaced: int
    rejected: int


class Databank:
    """One store of ParamRecords or FactorRecords.

    Thread model: any number of readers, one serialized writer; all
    mutation funnels through upsert_if_better under the store lock, and
    read methods return snapshots.
    """

    def __init__(self, kind: str):
        if kind not in ("params", "factors"):
            raise DatabankError(f"unknown store kind {kind!r}")
        self.kind = kind
        self.schema = PARAMS_SCHEMA if kind == "params" else FACTORS_SCHEMA
        self._records: dict[tuple[str, int], object] = {}
        self._lock = threading.RLock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def stats(self) -> int:
        """Record count (S_p for a params store, S_o for factors)."""
        return len(self)

    def get(self, key: str, depth: int):
        with self._lock:
            return self._records.get((key, depth))

    def records(self, depth: int | None = None) -> list:
        with self._lock:
            recs = list(self._records.values())
        if depth is not None:
            recs = [r for r in recs if r.depth == depth]
        return sorted(recs, key=lambda r: (r.key, r.depth))

    def upsert_if_better(self, record, evaluator=None, verify: bool = True) -> str:
        """Insert or replace under strict-improvement semantics.

        Returns "created", "replaced", or "rejected".  With verify on
        (the default for params stores), the claimed score is recomputed
        and an IntegrityError refuses the record on a mismatch beyond
        1e-6.  The check runs inside the store lock, so verify-then-write
        is atomic with respect to competing writers of the same key.
        """
        expected = ParamRecord if self.kind == "params" else FactorRecord
        if not isinstance(record, expected):
            raise DatabankError(
                f"{self.kind} store cannot hold {type(record).__name__}"
            )
        with self._lock:
            if verify and self.kind == "params":
                evaluator = evaluator or default_param_evaluator
                actual = evaluator(record)
                if abs(actual - record.score) > SCORE_VERIFY_TOL:
                    raise IntegrityError(
                        f"record {record.key}@{record.depth} claims score "
                        f"{record.score!r} but re-evaluates to {actual!r}"
                    )
            slot = (record.key, record.depth)
            incumbent = self._records.get(slot)
            if incumbent is None:
                self._records[slot] = record
                return "created"
            if record.score > incumbent.score:
                self._records[slot] = record
                return "replaced"
            return "rejected"

    # -- nearest-neighbor retrieval ------------------------------------

    def nearest(
        self,
        coord: GraphCoordinate,
        depth: int,
        k: int,
        mode: str = MODE_SIMPLIFIED,
        metric: MetricMatrix | None = None,
    ) -> list[tuple[float, object]]:
        """The k finite-distance records closest to coord at this depth,
        sorted by (distance, key).  Raises InsufficientCoverageError when
        fewer than k candidates have finite distance."""
        finite = self.finite_neighbors(coord, depth, mode, metric)
        if len(finite) < k:
            raise InsufficientCoverageError(
                f"need {k} finite-distance records at depth {depth}, "
                f"found {len(finite)}"
            )
        return finite[:k]

    def finite_neighbors(
        self,
        coord: GraphCoordinate,
        depth: int,
        mode: str = MODE_SIMPLIFIED,
        metric: MetricMatrix | None = None,
    ) -> list[tuple[float, object]]:
        """All finite-distance records at this depth, sorted by
        (distance, key); empty when nothing is reachable."""
        recs = self.records(depth)
        if mode == MODE_SIMPLIFIED:
            scored = [(simplified_distance(coord, r.coordinate), r) for r in recs]
        elif mode in (MODE_EUCLIDEAN, MODE_MAHALANOBIS):
            if not recs:
                return []
            std = Standardizer.fit([r.coordinate.vector() for r in recs])
            q = std.transform(coord.vector())
            if mode == MODE_EUCLIDEAN:
                scored = [
                    (euclidean_distance(q, std.transform(r.coordinate.vector())), r)
                    for r in recs
                ]
            else:
                m = metric if metric is not None else MetricMatrix.identity(q.size)
                scored = [
                    (
                        mahalanobis_distance(
                            q, std.transform(r.coordinate.vector()), m
                        ),
                        r,
                    )
                    for r in recs
                ]
        else:
            raise DatabankError(f"unknown metric mode {mode!r}")
        return sorted(
            ((d, r) for d, r in scored if d != float("inf")),
            key=lambda dr: (dr[0], dr[1].key),
        )

    # -- persistence ----------------------------------------------------

    def save(self, path) -> None:
        """Atomic full snapshot: header line, then one record per line."""
        path = os.fspath(path)
        with self._lock:
            recs = self.records()
        directory = os.path.dirname(path) or "."
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".databank-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(json.dumps({"schema": self.schema}) + "\n")
                for rec in recs:
                    fh.write(json.dumps(_record_to_obj(rec)) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    @classmethod
    def load(cls, path, kind: str | None = None) -> "Databank":
        path = os.fspath(path)
        with open(path, encoding="utf-8") as fh:
            header_line = fh.readline()
            try:
                header = json.loads(header_line)
                schema = header["schema"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatabankError(f"{path}:1: bad schema header") from exc
            if schema == PARAMS_SCHEMA:
                file_kind = "params"
            elif schema == FACTORS_SCHEMA:
                file_kind = "factors"
            else:
                raise DatabankError(f"{path}:1: unknown schema {schema!r}")
            if kind is not None and kind != file_kind:
                raise DatabankError(
                    f"{path}: expected a {kind} store, file is {file_kind}"
                )
            bank = cls(file_kind)
            for lineno, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    record = _record_from_obj(json.loads(line), file_kind)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DatabankError(f"{path}:{lineno}: malformed record: {exc}") from exc
                bank._records[(record.key, record.depth)] = record
        return bank

    # -- sharing ----------------------------------------------------------

    def merge(self, imported: "Databank", evaluator=None, verify: bool = True) -> MergeReport:
        """Fold another store in under upsert-if-better semantics."""
        if imported.schema != self.schema:
            raise DatabankError(
                f"schema mismatch: {self.schema} vs {imported.schema}"
            )
        created = replaced = rejected = 0
        for rec in imported.records():
            if isinstance(rec, ParamRecord) and rec.provenance != PROVENANCE_IMPORT:
                rec = replace(rec, provenance=PROVENANCE_IMPORT)
            try:
                outcome = self.upsert_if_better(rec, evaluator=evaluator, verify=verify)
            except IntegrityError:
                rejected += 1
                continue
            if outcome == "created":
                created += 1
            elif outcome == "replaced":
                replaced += 1
            else:
                rejected += 1
        return MergeReport(created=created, replaced=replaced, rejected=rejected)

    def verify_scores(self, evaluator=None, tol: float = 1e-9) -> list[dict]:
        """Integrity sweep: re-evaluate every stored score.

        Only params stores re-evaluate against the engine by default;
        factor stores need an explicit evaluator.  Returns one diagnostic
        per failing record.
        """
        failures = []
        if evaluator is None:
            if self.kind != "params":
                raise DatabankError("factor stores need an explicit evaluator")
            evaluator = default_param_evaluator
        for rec in self.records():
            actual = evaluator(rec)
            if abs(actual - rec.score) > tol:
                failures.append(
                    {
                        "key": rec.key,
                        "depth": rec.depth,
                        "stored": rec.score,
                        "recomputed": actual,
                    }
                )
        return failures


def now() -> float:
    return time.time()
