"""Reference stub server for the remote gradient protocol.

Two modes: ``zeros`` returns all-zero gradients (a no-op prior) and ``mse``
returns the gradient of mean squared pixel error toward a fixed target
sequence, which lets tests compare the wire path against the native loss.

Run standalone with ``python -m sketchanim.stub_prior --port 8765``.
"""

from __future__ import annotations

import threading
import time

import numpy as np
import uvicorn
from fastapi import FastAPI, Request, Response

from .guidance import decode_payload, encode_payload


def create_stub_app(mode: str = "zeros", target: np.ndarray | None = None) -> FastAPI:
    if mode not in ("zeros", "mse"):
        raise ValueError(f"unknown stub mode {mode!r}")
    if mode == "mse" and target is None:
        raise ValueError("mse mode needs a target sequence")
    app = FastAPI(title="sketchanim gradient stub")

    @app.post("/v1/gradient")
    async def gradient(request: Request) -> Response:
        header, frames = decode_payload(await request.body())
        if mode == "zeros":
            grads = np.zeros_like(frames)
        else:
            if frames.shape != target.shape:
                return Response(status_code=422,
                                content=f"target shape {target.shape} vs "
                                        f"frames {frames.shape}".encode())
            grads = 2.0 * (frames - target) / frames.size
        reply = {"k_frames": frames.shape[0], "h": frames.shape[1],
                 "w": frames.shape[2]}
        return Response(content=encode_payload(reply, grads),
                        media_type="application/octet-stream")

    return app


class StubServerThread:
    """Runs the stub on an ephemeral localhost port in a daemon thread."""

    def __init__(self, app: FastAPI):
        self._config = uvicorn.Config(app, host="127.0.0.1", port=0,
                                      log_level="warning")
        self.server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self.server.run, daemon=True)
        self.endpoint: str | None = None

    def __enter__(self) -> "StubServerThread":
        self._thread.start()
        deadline = time.monotonic() + 10.0
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("stub server failed to start")
            time.sleep(0.01)
        port = self.server.servers[0].sockets[0].getsockname()[1]
        self.endpoint = f"http://127.0.0.1:{port}"
        return self

    def __exit__(self, *exc) -> None:
        self.server.should_exit = True
        self._thread.join(timeout=10.0)


def main(argv: list[str] | None = None) -> None:
    import argparse

    parser = argparse.ArgumentParser(description="remote gradient stub server")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--mode", choices=["zeros"], default="zeros")
    args = parser.parse_args(argv)
    uvicorn.run(create_stub_app(args.mode), host="127.0.0.1", port=args.port)


if __name__ == "__main__":
    main()
