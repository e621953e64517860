"""HTTP JSON API: query, submit, and compare parameters.

One endpoint, ``POST /api``, dispatching on the ``api_name`` field:

    {"api_name": "query_parameter",   "graph_data": {...}, "qc_depth": 4}
    {"api_name": "submit_parameter",  "graph_data": {...},
     "user_parameter": [...], "qc_depth": 4}
    {"api_name": "compare_parameter", "graph_data": {...},
     "user_parameter": [...], "qc_depth": 4}

Responses carry "status" ("success" | "fail" | "error") plus, per call,
"parameter" (query) or "score_dict" (submit: max_score/user_score;
compare: max_score/user_score/random_score), or "message" on error.

The request layer is a thin stdlib ThreadingHTTPServer; all behavior
lives in Accelerator, which is directly testable without sockets.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from . import databank as databank_mod
from . import engine
from .config import AppConfig
from .databank import Databank, ParamRecord
from .engine import EngineError, ParameterVector
from .generators import GeneratorError, generate_best
from .graphs import GraphValidationError, canonicalize, parse_graph
from .optim import random_parameters
from .sources import SourceError, infer_coordinate

STATUS_SUCCESS = "success"
STATUS_FAIL = "fail"
STATUS_ERROR = "error"

API_QUERY = "query_parameter"
API_SUBMIT = "submit_parameter"
API_COMPARE = "compare_parameter"
API_NAMES = (API_QUERY, API_SUBMIT, API_COMPARE)


class RequestError(ValueError):
    """Client-side mistakes mapped to status "error" responses."""


def _error(message: str) -> dict:
    return {"status": STATUS_ERROR, "message": message}


class Accelerator:
    """The service brain: owns the databanks and answers the three calls."""

    def __init__(
        self,
        config: AppConfig,
        params_bank: Databank | None = None,
        factor_bank: Databank | None = None,
    ):
        self.config = config
        self.params_bank = params_bank if params_bank is not None else Databank("params")
        self.factor_bank = factor_bank if factor_bank is not None else Databank("factors")
        self.settings = config.generator_settings()
        self._rng = np.random.default_rng(config.seed)
        self._rng_lock = threading.Lock()

    @classmethod
    def from_stores(cls, config: AppConfig) -> "Accelerator":
        """Load banks from config.stores_dir, starting empty when absent."""
        params = (
            Databank.load(config.params_path, "params")
            if config.params_path.exists()
            else Databank("params")
        )
        factors = (
            Databank.load(config.factors_path, "factors")
            if config.factors_path.exists()
            else Databank("factors")
        )
        return cls(config, params, factors)

    def save_stores(self) -> None:
        self.config.stores_dir.mkdir(parents=True, exist_ok=True)
        self.params_bank.save(self.config.params_path)
        self.factor_bank.save(self.config.factors_path)

    # -- request plumbing -------------------------------------------------

    def _parse_common(self, request: dict):
        if not isinstance(request, dict):
            raise RequestError("request body must be a JSON object")
        depth = request.get("qc_depth")
        if not isinstance(depth, int) or isinstance(depth, bool):
            raise RequestError("qc_depth must be an integer")
        if depth not in self.config.profile.supported_depths:
            raise RequestError(
                f"unsupported qc_depth {depth}; supported: "
                f"{sorted(self.config.profile.supported_depths)}"
            )
        try:
            g = parse_graph(
                request.get("graph_data"), nodes=self.config.profile.node_count
            )
        except GraphValidationError as exc:
            raise RequestError(f"invalid graph_data: {exc}") from exc
        if g.nodes > self.config.profile.qubit_ceiling:
            raise RequestError(
                f"graph needs {g.nodes} qubits, ceiling is "
                f"{self.config.profile.qubit_ceiling}"
            )
        return g, depth

    def _parse_user_parameter(self, request: dict, depth: int) -> ParameterVector:
        raw = request.get("user_parameter")
        if not isinstance(raw, (list, tuple)):
            raise RequestError("user_parameter must be a list of numbers")
        if len(raw) != 2 * depth:
            raise RequestError(
                f"user_parameter must hold {2 * depth} values for depth "
                f"{depth}, got {len(raw)}"
            )
        try:
            return ParameterVector.from_values(raw)
        except (EngineError, TypeError, ValueError) as exc:
            raise RequestError(f"invalid user_parameter: {exc}") from exc

    def _best(self, g, depth):
        return generate_best(
            g, depth, self.params_bank, self.factor_bank, self.settings
        )

    # -- the three calls ---------------------------------------------------

    def query(self, request: dict) -> dict:
        try:
            g, depth = self._parse_common(request)
        except RequestError as exc:
            return _error(str(exc))
        try:
            result = self._best(g, depth)
        except (GeneratorError, SourceError, EngineError) as exc:
            return {"status": STATUS_FAIL, "message": str(exc)}
        return {"status": STATUS_SUCCESS, "parameter": list(result.params.values)}

    def submit(self, request: dict) -> dict:
        try:
            g, depth = self._parse_common(request)
            user_params = self._parse_user_parameter(request, depth)
        except RequestError as exc:
            return _error(str(exc))
        try:
            current = self._best(g, depth)
            user_score = engine.score(
                g, user_params, self.config.profile.qubit_ceiling
            )
        except (GeneratorError, SourceError, EngineError) as exc:
            return _error(str(exc))
        score_dict = {"max_score": current.score, "user_score": user_score}
        if user_score <= current.score:
            return {"status": STATUS_FAIL, "score_dict": score_dict}
        cg = canonicalize(g)
        record = ParamRecord(
            key=cg.key,
            graph=cg.graph.to_json_obj(),
            coordinate=infer_coordinate(g),
            depth=depth,
            params=user_params,
            score=user_score,
            provenance=databank_mod.PROVENANCE_USER,
            updated_at=databank_mod.now(),
        )
        self.params_bank.upsert_if_better(record)
        return {"status": STATUS_SUCCESS, "score_dict": score_dict}

    def compare(self, request: dict) -> dict:
        try:
            g, depth = self._parse_common(request)
            user_params = self._parse_user_parameter(request, depth)
        except RequestError as exc:
            return _error(str(exc))
        with self._rng_lock:
            random_params = random_parameters(depth, self._rng)
        try:
            current = self._best(g, depth)
            ceiling = self.config.profile.qubit_ceiling
            score_dict = {
                "max_score": current.score,
                "user_score": engine.score(g, user_params, ceiling),
                "random_score": engine.score(g, random_params, ceiling),
            }
        except (GeneratorError, SourceError, EngineError) as exc:
            return _error(str(exc))
        return {"status": STATUS_SUCCESS, "score_dict": score_dict}

    def handle(self, request: dict) -> dict:
        """Dispatch one decoded request body."""
        if not isinstance(request, dict):
            return _error("request body must be a JSON object")
        api_name = request.get("api_name")
        if api_name == API_QUERY:
            return self.query(request)
        if api_name == API_SUBMIT:
            return self.submit(request)
        if api_name == API_COMPARE:
            return self.compare(request)
        return _error(f"unknown api_name {api_name!r}")


_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>QAOA warm-start service</title></head>
<body>
<h1>QAOA warm-start service</h1>
<p>POST JSON to <code>/api</code> with api_name query_parameter,
submit_parameter, or compare_parameter.  The interactive console is not
bundled in this build; see the frontend directory of the source tree.</p>
</body></html>
"""


class _Handler(BaseHTTPRequestHandler):
    server_version = "qaoa-warmstart/0.1"
    accelerator: Accelerator = None
    static_dir: Path | None = None
    executor: ThreadPoolExecutor = None
    timeout_s: float = 30.0
    max_request_bytes: int = 1_048_576
    quiet: bool = True

    def log_message(self, fmt, *args):
        if not self.quiet:
            super().log_message(fmt, *args)

    def _send_json(self, payload: dict, status: int = 200):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_page(self, body: bytes, content_type: str):
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/healthz":
            self._send_json({"status": "ok"})
            return
        if self.path in ("/", "/index.html"):
            index = self.static_dir / "index.html" if self.static_dir else None
            if index is not None and index.exists():
                self._send_page(index.read_bytes(), "text/html; charset=utf-8")
            else:
                self._send_page(
                    _FALLBACK_PAGE.encode("utf-8"), "text/html; charset=utf-8"
                )
            return
        if self.static_dir is not None:
            candidate = (self.static_dir / self.path.lstrip("/")).resolve()
            if (
                candidate.is_file()
                and self.static_dir.resolve() in candidate.parents
            ):
                ctype = (
                    "application/javascript"
                    if candidate.suffix == ".js"
                    else "text/css" if candidate.suffix == ".css"
                    else "text/html; charset=utf-8"
                )
                self._send_page(candidate.read_bytes(), ctype)
                return
        self.send_error(404)

    def do_POST(self):
        if self.path != "/api":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", 0))
        if length > self.max_request_bytes:
            self._send_json(_error("request body exceeds the size limit"))
            return
        raw = self.rfile.read(length)
        try:
            request = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_json(_error("request body is not valid JSON"))
            return
        future = self.executor.submit(self.accelerator.handle, request)
        try:
            response = future.result(timeout=self.timeout_s)
        except FutureTimeout:
            response = _error("evaluation timed out")
        except Exception as exc:  # defensive: never drop the connection
            response = _error(f"internal error: {exc}")
        self._send_json(response)


def make_server(
    accelerator: Accelerator, host: str | None = None, port: int | None = None
) -> ThreadingHTTPServer:
    """A ready-to-serve HTTP server bound to host:port (port 0 for tests)."""
    svc = accelerator.config.service
    host = host if host is not None else svc.host
    port = port if port is not None else svc.port
    static_dir = None
    if svc.static_dir:
        static_dir = Path(svc.static_dir)
    else:
        bundled = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
        if bundled.is_dir():
            static_dir = bundled

    handler = type(
        "BoundHandler",
        (_Handler,),
        {
            "accelerator": accelerator,
            "static_dir": static_dir,
            "executor": ThreadPoolExecutor(max_workers=8),
            "timeout_s": svc.request_timeout_s,
            "max_request_bytes": svc.max_request_bytes,
        },
    )
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(accelerator: Accelerator, stop: threading.Event | None = None):
    """Run the server until the stop event fires; flush stores on exit."""
    server = make_server(accelerator)
    if stop is None:
        try:
            server.serve_forever()
        finally:
            accelerator.save_stores()
            server.server_close()
        return
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        stop.wait()
    finally:
        server.shutdown()
        thread.join()
        accelerator.save_stores()
        server.server_close()
