import json

import numpy as np
import pytest

from qaoa_warmstart import engine
from qaoa_warmstart.databank import (
    Databank,
    DatabankError,
    FactorRecord,
    InsufficientCoverageError,
    IntegrityError,
    ParamRecord,
)
from qaoa_warmstart.engine import ParameterVector
from qaoa_warmstart.graphs import canonicalize
from qaoa_warmstart.optim import random_parameters
from qaoa_warmstart.sources import infer_coordinate

from tests.oracles import random_ising_graph


def make_param_record(g, depth=2, theta=None, score=None, provenance="search-daemon"):
    cg = canonicalize(g)
    theta = theta or random_parameters(depth, np.random.default_rng(0))
    return ParamRecord(
        key=cg.key,
        graph=cg.graph.to_json_obj(),
        coordinate=infer_coordinate(g),
        depth=depth,
        params=theta,
        score=score if score is not None else engine.score(g, theta),
        provenance=provenance,
        updated_at=1700000000.25,
    )


def make_factor_record(g, depth=2, factor=0.5, score=1.0):
    cg = canonicalize(g)
    return FactorRecord(
        key=cg.key,
        graph=cg.graph.to_json_obj(),
        coordinate=infer_coordinate(g),
        depth=depth,
        factor=factor,
        score=score,
        updated_at=1700000000.5,
    )


@pytest.fixture
def graph():
    return random_ising_graph(
        np.random.default_rng(100), max_nodes=6, weight_low=1, weight_high=9
    )


class TestUpsert:
    def test_created_when_absent(self, graph):
        bank = Databank("params")
        assert bank.upsert_if_better(make_param_record(graph)) == "created"
        assert bank.stats() == 1

    def test_tie_rejected(self, graph):
        bank = Databank("params")
        rec = make_param_record(graph)
        bank.upsert_if_better(rec)
        assert bank.upsert_if_better(rec) == "rejected"

    def test_strictly_better_replaces(self, graph):
        bank = Databank("params")
        theta_a = random_parameters(2, np.random.default_rng(1))
        theta_b = random_parameters(2, np.random.default_rng(2))
        a = make_param_record(graph, theta=theta_a)
        b = make_param_record(graph, theta=theta_b)
        low, high = sorted([a, b], key=lambda r: r.score)
        bank.upsert_if_better(low)
        assert bank.upsert_if_better(high) == "replaced"
        assert bank.get(high.key, 2).score == high.score

    def test_worse_rejected(self, graph):
        bank = Databank("params")
        theta_a = random_parameters(2, np.random.default_rng(1))
        theta_b = random_parameters(2, np.random.default_rng(2))
        a = make_param_record(graph, theta=theta_a)
        b = make_param_record(graph, theta=theta_b)
        low, high = sorted([a, b], key=lambda r: r.score)
        bank.upsert_if_better(high)
        assert bank.upsert_if_better(low) == "rejected"

    def test_integrity_error_on_score_mismatch(self, graph):
        bank = Databank("params")
        rec = make_param_record(graph)
        forged = ParamRecord(
            key=rec.key,
            graph=rec.graph,
            coordinate=rec.coordinate,
            depth=rec.depth,
            params=rec.params,
            score=rec.score + 1.0,
            provenance=rec.provenance,
            updated_at=rec.updated_at,
        )
        with pytest.raises(IntegrityError):
            bank.upsert_if_better(forged)
        assert bank.stats() == 0

    def test_kind_mismatch(self, graph):
        bank = Databank("factors")
        with pytest.raises(DatabankError, match="cannot hold"):
            bank.upsert_if_better(make_param_record(graph))

    def test_factor_store(self, graph):
        bank = Databank("factors")
        assert bank.upsert_if_better(make_factor_record(graph)) == "created"
        better = make_factor_record(graph, factor=0.6, score=2.0)
        assert bank.upsert_if_better(better) == "replaced"

    def test_factor_positive_invariant(self, graph):
        with pytest.raises(DatabankError, match="positive"):
            make_factor_record(graph, factor=0.0)

    def test_depth_consistency_invariant(self, graph):
        cg = canonicalize(graph)
        with pytest.raises(DatabankError, match="depth"):
            ParamRecord(
                key=cg.key,
                graph=cg.graph.to_json_obj(),
                coordinate=infer_coordinate(graph),
                depth=4,
                params=random_parameters(2, np.random.default_rng(0)),
                score=0.0,
            )

    def test_score_never_decreases_over_lifetime(self, graph):
        bank = Databank("params")
        rng = np.random.default_rng(7)
        best = -np.inf
        for _ in range(12):
            rec = make_param_record(graph, theta=random_parameters(2, rng))
            bank.upsert_if_better(rec)
            stored = bank.get(rec.key, 2).score
            assert stored >= best - 1e-15
            best = stored


class TestNearest:
    def _bank_with_edge_counts(self, counts, depth=2):
        bank = Databank("params")
        rng = np.random.default_rng(0)
        import itertools

        for count in counts:
            n = 12
            pairs = list(itertools.combinations(range(n), 2))
            idx = rng.choice(len(pairs), size=count, replace=False)
            from qaoa_warmstart.graphs import IsingGraph

            g = IsingGraph(
                nodes=n,
                edges=tuple(pairs[i] for i in sorted(idx)),
                weights=tuple(
                    float(w) for w in rng.integers(1, 11, size=count)
                ),
            )
            bank.upsert_if_better(make_param_record(g, depth=depth))
        return bank

    def test_self_is_first_at_distance_zero(self, graph):
        bank = Databank("params")
        rec = make_param_record(graph)
        bank.upsert_if_better(rec)
        got = bank.nearest(rec.coordinate, 2, 1)
        assert got[0][0] == 0.0
        assert got[0][1].key == rec.key

    def test_coverage_error(self, graph):
        bank = Databank("params")
        bank.upsert_if_better(make_param_record(graph))
        coord = infer_coordinate(graph)
        with pytest.raises(InsufficientCoverageError):
            bank.nearest(coord, 2, 5)

    def test_simplified_ordering(self):
        # 33..35 edges share the 0.05-wide edge-probability bucket at
        # n=12; 40 does not and must be gated out as infinite.
        bank = self._bank_with_edge_counts([35, 40, 34, 33])
        probe = next(r for r in bank.records(2) if r.coordinate.edge_count == 33)
        got = bank.nearest(probe.coordinate, 2, 3)
        counts = [r.coordinate.edge_count for _, r in got]
        assert counts == [33, 34, 35]
        with pytest.raises(InsufficientCoverageError):
            bank.nearest(probe.coordinate, 2, 4)

    def test_euclidean_mode(self):
        bank = self._bank_with_edge_counts([20, 30, 40])
        probe = next(r for r in bank.records(2) if r.coordinate.edge_count == 30)
        got = bank.nearest(probe.coordinate, 2, 3, mode="euclidean")
        assert got[0][1].coordinate.edge_count == 30
        assert got[0][0] == 0.0

    def test_unknown_mode(self, graph):
        bank = Databank("params")
        bank.upsert_if_better(make_param_record(graph))
        with pytest.raises(DatabankError, match="metric mode"):
            bank.nearest(infer_coordinate(graph), 2, 1, mode="cosine")


class TestPersistence:
    def test_empty_round_trip(self, tmp_path):
        bank = Databank("params")
        path = tmp_path / "params.jsonl"
        bank.save(path)
        loaded = Databank.load(path)
        assert loaded.stats() == 0
        assert loaded.kind == "params"

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(55)
        bank = Databank("params")
        for _ in range(20):
            g = random_ising_graph(rng, max_nodes=7, weight_low=1, weight_high=9)
            bank.upsert_if_better(
                make_param_record(g, theta=random_parameters(2, rng))
            )
        path = tmp_path / "params.jsonl"
        bank.save(path)
        loaded = Databank.load(path)
        assert loaded.records() == bank.records()
        assert loaded.stats() == bank.stats()

    def test_factor_round_trip(self, tmp_path, graph):
        bank = Databank("factors")
        bank.upsert_if_better(make_factor_record(graph, factor=0.437))
        path = tmp_path / "factors.jsonl"
        bank.save(path)
        loaded = Databank.load(path)
        assert loaded.records() == bank.records()

    def test_truncated_record_reports_line(self, tmp_path, graph):
        bank = Databank("params")
        bank.upsert_if_better(make_param_record(graph))
        path = tmp_path / "params.jsonl"
        bank.save(path)
        text = path.read_text().splitlines()
        text[1] = text[1][: len(text[1]) // 2]
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(DatabankError, match=":2:"):
            Databank.load(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "params.jsonl"
        path.write_text("not json\n")
        with pytest.raises(DatabankError, match=":1:"):
            Databank.load(path)

    def test_kind_check_on_load(self, tmp_path, graph):
        bank = Databank("factors")
        bank.upsert_if_better(make_factor_record(graph))
        path = tmp_path / "factors.jsonl"
        bank.save(path)
        with pytest.raises(DatabankError, match="expected a params"):
            Databank.load(path, "params")


class TestMerge:
    def _two_banks(self):
        rng = np.random.default_rng(77)
        graphs = [
            random_ising_graph(rng, max_nodes=6, weight_low=1, weight_high=9)
            for _ in range(6)
        ]
        a = Databank("params")
        b = Databank("params")
        for g in graphs[:4]:
            a.upsert_if_better(make_param_record(g, theta=random_parameters(2, rng)))
        for g in graphs[2:]:
            b.upsert_if_better(make_param_record(g, theta=random_parameters(2, rng)))
        return a, b

    def test_merge_with_self_rejects_all(self, graph):
        bank = Databank("params")
        bank.upsert_if_better(make_param_record(graph))
        report = bank.merge(bank)
        assert report.created == 0
        assert report.replaced == 0
        assert report.rejected == 1

    def test_disjoint_all_created(self):
        rng = np.random.default_rng(88)
        a = Databank("params")
        b = Databank("params")
        g1 = random_ising_graph(rng, max_nodes=5, weight_low=1, weight_high=9)
        g2 = random_ising_graph(rng, max_nodes=6, weight_low=1, weight_high=9)
        a.upsert_if_better(make_param_record(g1))
        b.upsert_if_better(make_param_record(g2))
        report = a.merge(b)
        assert report.created == 1
        assert a.stats() == 2

    def test_mixed_scores_only_better_replace(self):
        a, b = self._two_banks()
        before = {(r.key, r.depth): r.score for r in a.records()}
        report = a.merge(b)
        for rec in a.records():
            slot = (rec.key, rec.depth)
            if slot in before:
                assert rec.score >= before[slot]
        assert report.created == 2  # graphs[4], graphs[5]

    def test_merge_order_independent_scores(self):
        a1, b1 = self._two_banks()
        a2, b2 = self._two_banks()
        a1.merge(b1)
        b2.merge(a2)
        left = {(r.key, r.depth): r.score for r in a1.records()}
        right = {(r.key, r.depth): r.score for r in b2.records()}
        assert left == right

    def test_schema_mismatch(self, graph):
        a = Databank("params")
        b = Databank("factors")
        with pytest.raises(DatabankError, match="schema"):
            a.merge(b)

    def test_import_provenance(self):
        a, b = self._two_banks()
        a.merge(b)
        imported = [
            r for r in a.records() if r.provenance == "import"
        ]
        assert imported  # newly created entries carry import provenance


class TestVerify:
    def test_clean_bank_passes(self, graph):
        bank = Databank("params")
        bank.upsert_if_better(make_param_record(graph))
        assert bank.verify_scores() == []

    def test_detects_manual_edit(self, tmp_path, graph):
        bank = Databank("params")
        bank.upsert_if_better(make_param_record(graph))
        path = tmp_path / "params.jsonl"
        bank.save(path)
        lines = path.read_text().splitlines()
        obj = json.loads(lines[1])
        obj["score"] += 0.5
        lines[1] = json.dumps(obj)
        path.write_text("\n".join(lines) + "\n")
        tampered = Databank.load(path)
        failures = tampered.verify_scores()
        assert len(failures) == 1
        assert failures[0]["key"] == obj["key"]
