import json
import threading
from pathlib import Path

import numpy as np
import pytest
import requests

from qaoa_warmstart import engine
from qaoa_warmstart.config import AppConfig
from qaoa_warmstart.engine import ParameterVector
from qaoa_warmstart.optim import (
    METHOD_SIMPLEX,
    OptSchedule,
    ScheduleEntry,
    alternating_optimize,
)
from qaoa_warmstart.graphs import parse_graph
from qaoa_warmstart.service import Accelerator, make_server

GOLDEN = Path(__file__).parent / "data" / "golden"

GRAPH = {"J": [[5, 9], [1, 2], [8, 11]], "c": [5, 5, 5]}


def body(name):
    return json.loads((GOLDEN / f"{name}_request.json").read_text())


@pytest.fixture
def accelerator(app_config):
    return Accelerator(app_config)


class TestWireShapes:
    def test_request_bodies_match_published_client(self):
        # The bodies the upstream client constructs, byte for byte.
        graph = {"J": [[5, 9], [1, 2], [8, 11]], "c": [5, 5, 5]}
        params = [0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8]
        built = {
            "query": {"api_name": "query_parameter", "graph_data": graph, "qc_depth": 4},
            "submit": {
                "api_name": "submit_parameter",
                "graph_data": graph,
                "user_parameter": params,
                "qc_depth": 4,
            },
            "compare": {
                "api_name": "compare_parameter",
                "graph_data": graph,
                "user_parameter": params,
                "qc_depth": 4,
            },
        }
        for name, obj in built.items():
            golden = (GOLDEN / f"{name}_request.json").read_bytes()
            assert json.dumps(obj).encode() == golden

    def test_query_response_shape(self, accelerator):
        response = accelerator.handle(body("query"))
        assert set(response) == {"status", "parameter"}
        assert response["status"] == "success"
        assert all(isinstance(v, float) for v in response["parameter"])

    def test_submit_response_shape(self, accelerator):
        response = accelerator.handle(body("submit"))
        assert set(response) == {"status", "score_dict"}
        assert set(response["score_dict"]) == {"max_score", "user_score"}

    def test_compare_response_shape(self, accelerator):
        response = accelerator.handle(body("compare"))
        assert set(response) == {"status", "score_dict"}
        assert set(response["score_dict"]) == {
            "max_score",
            "user_score",
            "random_score",
        }

    def test_unknown_api_name(self, accelerator):
        response = accelerator.handle({"api_name": "delete_parameter"})
        assert response["status"] == "error"
        assert "message" in response


class TestQuery:
    def test_depth4_returns_eight_numbers(self, accelerator):
        response = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4}
        )
        assert response["status"] == "success"
        assert len(response["parameter"]) == 8

    def test_depth8_returns_sixteen_numbers(self, accelerator):
        response = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 8}
        )
        assert len(response["parameter"]) == 16

    def test_missing_weights_is_error(self, accelerator):
        response = accelerator.query(
            {"api_name": "query_parameter", "graph_data": {"J": [[0, 1]]}, "qc_depth": 4}
        )
        assert response["status"] == "error"
        assert "'c'" in response["message"]

    def test_unsupported_depth_is_error(self, accelerator):
        response = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 5}
        )
        assert response["status"] == "error"

    def test_deterministic_against_unchanged_bank(self, accelerator):
        a = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4}
        )
        b = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4}
        )
        assert a == b


def optimized_params(app_config, graph=GRAPH, depth=4):
    g = parse_graph(graph, nodes=app_config.profile.node_count)
    base = Accelerator(app_config)
    queried = base.query(
        {"api_name": "query_parameter", "graph_data": graph, "qc_depth": depth}
    )["parameter"]
    result = alternating_optimize(
        g,
        ParameterVector.from_values(queried),
        OptSchedule(
            entries=(ScheduleEntry(METHOD_SIMPLEX, 200),), epsilon=1e-7, max_rounds=2
        ),
    )
    return list(result.params.values), result.score


class TestSubmit:
    def test_resubmitting_system_params_fails(self, accelerator):
        queried = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4}
        )["parameter"]
        response = accelerator.submit(
            {
                "api_name": "submit_parameter",
                "graph_data": GRAPH,
                "user_parameter": queried,
                "qc_depth": 4,
            }
        )
        assert response["status"] == "fail"
        assert response["score_dict"]["user_score"] == pytest.approx(
            response["score_dict"]["max_score"], abs=1e-9
        )

    def test_better_params_accepted_and_served(self, app_config):
        accelerator = Accelerator(app_config)
        better, score = optimized_params(app_config)
        response = accelerator.submit(
            {
                "api_name": "submit_parameter",
                "graph_data": GRAPH,
                "user_parameter": better,
                "qc_depth": 4,
            }
        )
        assert response["status"] == "success"
        assert response["score_dict"]["user_score"] > response["score_dict"]["max_score"]
        followup = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4}
        )
        assert followup["parameter"] == pytest.approx(better)

    def test_wrong_parameter_length_is_error(self, accelerator):
        response = accelerator.submit(
            {
                "api_name": "submit_parameter",
                "graph_data": GRAPH,
                "user_parameter": [0.1] * 6,
                "qc_depth": 4,
            }
        )
        assert response["status"] == "error"

    def test_submission_cannot_lower_scores(self, app_config):
        accelerator = Accelerator(app_config)
        better, _ = optimized_params(app_config)
        accelerator.submit(
            {
                "api_name": "submit_parameter",
                "graph_data": GRAPH,
                "user_parameter": better,
                "qc_depth": 4,
            }
        )
        stored = accelerator.params_bank.records(4)[0].score
        worse = [v * 0.5 for v in better]
        accelerator.submit(
            {
                "api_name": "submit_parameter",
                "graph_data": GRAPH,
                "user_parameter": worse,
                "qc_depth": 4,
            }
        )
        assert accelerator.params_bank.records(4)[0].score >= stored


class TestCompare:
    def test_user_equals_best_when_same_params(self, accelerator):
        queried = accelerator.query(
            {"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4}
        )["parameter"]
        response = accelerator.compare(
            {
                "api_name": "compare_parameter",
                "graph_data": GRAPH,
                "user_parameter": queried,
                "qc_depth": 4,
            }
        )
        assert response["score_dict"]["user_score"] == pytest.approx(
            response["score_dict"]["max_score"], abs=1e-9
        )

    def test_compare_never_mutates_stores(self, accelerator):
        before = (accelerator.params_bank.stats(), accelerator.factor_bank.stats())
        for _ in range(2):
            accelerator.compare(
                {
                    "api_name": "compare_parameter",
                    "graph_data": GRAPH,
                    "user_parameter": [0.1] * 8,
                    "qc_depth": 4,
                }
            )
        after = (accelerator.params_bank.stats(), accelerator.factor_bank.stats())
        assert before == after

    def test_random_score_distribution_centered(self, accelerator):
        scores = []
        for _ in range(200):
            response = accelerator.compare(
                {
                    "api_name": "compare_parameter",
                    "graph_data": GRAPH,
                    "user_parameter": [0.0] * 8,
                    "qc_depth": 4,
                }
            )
            scores.append(response["score_dict"]["random_score"])
        scores = np.asarray(scores)
        assert abs(scores.mean()) <= 0.15 * scores.std(ddof=1)


@pytest.fixture
def live_server(app_config):
    accelerator = Accelerator(app_config)
    server = make_server(accelerator, host="127.0.0.1", port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address
    yield f"http://{host}:{port}", accelerator
    server.shutdown()
    thread.join()
    server.server_close()


class TestHttpLayer:
    def test_published_client_flow(self, live_server):
        # Query, submit the result back (expect fail), compare: the
        # documented end-to-end session.
        url, _ = live_server
        status_parameter = requests.post(
            url + "/api",
            json={"api_name": "query_parameter", "graph_data": GRAPH, "qc_depth": 4},
            timeout=30,
        ).json()
        assert status_parameter["status"] == "success"
        parameter = status_parameter["parameter"]
        assert len(parameter) == 8

        submitted = requests.post(
            url + "/api",
            json={
                "api_name": "submit_parameter",
                "graph_data": GRAPH,
                "user_parameter": parameter,
                "qc_depth": 4,
            },
            timeout=30,
        ).json()
        assert submitted["status"] == "fail"
        assert set(submitted["score_dict"]) == {"max_score", "user_score"}

        compared = requests.post(
            url + "/api",
            json={
                "api_name": "compare_parameter",
                "graph_data": GRAPH,
                "user_parameter": parameter,
                "qc_depth": 4,
            },
            timeout=30,
        ).json()
        assert compared["status"] == "success"
        assert set(compared["score_dict"]) == {
            "max_score",
            "user_score",
            "random_score",
        }

    def test_healthz(self, live_server):
        url, _ = live_server
        assert requests.get(url + "/healthz", timeout=10).json() == {"status": "ok"}

    def test_root_serves_page(self, live_server):
        url, _ = live_server
        resp = requests.get(url, timeout=10)
        assert resp.status_code == 200
        assert "text/html" in resp.headers["Content-Type"]

    def test_invalid_json_is_error_status(self, live_server):
        url, _ = live_server
        resp = requests.post(
            url + "/api",
            data=b"{not json",
            headers={"Content-Type": "application/json"},
            timeout=10,
        )
        assert resp.json()["status"] == "error"

    def test_oversize_request_rejected(self, live_server):
        url, _ = live_server
        huge = {"api_name": "query_parameter", "pad": "x" * 2_000_000}
        resp = requests.post(url + "/api", json=huge, timeout=30)
        assert resp.json()["status"] == "error"
        assert "size" in resp.json()["message"]

    def test_concurrent_submits_and_queries_never_lower_scores(
        self, live_server, app_config
    ):
        url, accelerator = live_server
        candidates, _ = optimized_params(app_config)
        results = []
        lock = threading.Lock()

        def worker(i):
            rng = np.random.default_rng(i)
            for _ in range(5):
                if rng.random() < 0.5:
                    scale = float(rng.uniform(0.8, 1.2))
                    body = {
                        "api_name": "submit_parameter",
                        "graph_data": GRAPH,
                        "user_parameter": [v * scale for v in candidates],
                        "qc_depth": 4,
                    }
                else:
                    body = {
                        "api_name": "query_parameter",
                        "graph_data": GRAPH,
                        "qc_depth": 4,
                    }
                r = requests.post(url + "/api", json=body, timeout=30).json()
                with lock:
                    recs = accelerator.params_bank.records(4)
                    results.append(recs[0].score if recs else None)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        observed = [s for s in results if s is not None]
        assert all(b >= a - 1e-12 for a, b in zip(observed, observed[1:]))
