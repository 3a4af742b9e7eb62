"""A small in-process HTTP server speaking the scorer wire protocol.

Used by the test-suite and handy for smoke-testing the CLI without a model::

    python -m passage_rerank.scorer.stub --port 8765
"""

from __future__ import annotations

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping

OptionFn = Callable[[str, list], Mapping[str, float]]
LikelihoodFn = Callable[[str, str], tuple]


def uniform_options(prompt: str, options: list) -> dict[str, float]:
    return {tok: -1.0 for tok in options}


class StubScorerServer:
    """Serve ``/v1/score_options`` and ``/v1/loglikelihood`` from callables.

    ``options`` maps (prompt, option tokens) to a logprob dict and
    ``likelihood`` maps (context, continuation) to ``(logprob, num_tokens)``;
    leaving ``likelihood`` unset makes that endpoint answer 404.
    ``fail_first`` makes the first N requests answer HTTP 503.
    """

    def __init__(
        self,
        options: OptionFn | Mapping[str, float] = uniform_options,
        likelihood: LikelihoodFn | None = None,
        *,
        fail_first: int = 0,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        if not callable(options):
            fixed = dict(options)
            options = lambda prompt, toks: {t: fixed[t] for t in toks if t in fixed}  # noqa: E731
        self.options_fn = options
        self.likelihood_fn = likelihood
        self.fail_first = fail_first
        self.requests: list[tuple[str, dict]] = []
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def _should_fail(self) -> bool:
        with self._lock:
            if self.fail_first > 0:
                self.fail_first -= 1
                return True
            return False

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, format, *args):  # silence default stderr logging
                pass

            def _reply(self, status: int, body: dict | None = None) -> None:
                payload = json.dumps(body if body is not None else {}).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except ValueError:
                    return self._reply(400, {"error": "invalid JSON"})
                with server._lock:
                    server.requests.append((self.path, body))
                if server._should_fail():
                    return self._reply(503, {"error": "injected failure"})
                if self.path == "/v1/score_options":
                    logprobs = server.options_fn(body["prompt"], list(body["options"]))
                    return self._reply(200, {"logprobs": dict(logprobs)})
                if self.path == "/v1/loglikelihood" and server.likelihood_fn is not None:
                    logprob, num_tokens = server.likelihood_fn(body["context"], body["continuation"])
                    return self._reply(200, {"logprob": logprob, "num_tokens": num_tokens})
                return self._reply(404, {"error": f"no route {self.path}"})

        return Handler

    def start(self) -> "StubScorerServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "StubScorerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="stub scorer server returning fixed log-probabilities")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument(
        "--logprobs",
        default=None,
        help='JSON object of option -> logprob, e.g. \'{"1": -2.3, "2": -1.2}\'; default is uniform',
    )
    args = parser.parse_args(argv)
    options: OptionFn | Mapping[str, float] = uniform_options
    if args.logprobs:
        options = json.loads(args.logprobs)
    server = StubScorerServer(
        options,
        likelihood=lambda ctx, cont: (-1.0 * max(len(cont.split()), 1), max(len(cont.split()), 1)),
        host=args.host,
        port=args.port,
    )
    print(f"serving on {server.url}", flush=True)
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._httpd.server_close()


if __name__ == "__main__":
    main()
