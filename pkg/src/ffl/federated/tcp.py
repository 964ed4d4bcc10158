"""TCP transport: an aggregator server and site clients speaking the framed wire protocol.

The message sequence per connection is::

    site -> Register
    repeat for each round r:
        agg  -> GlobalBackbone(r)     site adopts, trains, replies
        site -> LocalBackbone(r)
        agg  -> GlobalBackbone(r)     aggregate of round r; site adopts only
    agg  -> EnterFineTune             site fine-tunes locally
    agg  -> Shutdown
"""
from __future__ import annotations

import logging
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional, Sequence

from ..nn.layers import ModelSpec
from .config import FederationConfig, SiteSpec
from .orchestrate import Aggregator, FederationResult, _check_sites
from .site import SiteWorker
from .wire import (
    ConnectionClosed,
    EnterFineTune,
    LocalBackbone,
    Register,
    Shutdown,
    recv_message,
    send_message,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0


def parse_address(addr: str):
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {addr!r}")
    return host or "127.0.0.1", int(port)


class SiteFailure(RuntimeError):
    pass


class AggregatorServer:
    """Synchronous-barrier aggregator for ``n_sites`` TCP sessions."""

    def __init__(
        self,
        cfg: FederationConfig,
        backbone: ModelSpec,
        n_sites: int,
        host: str = "127.0.0.1",
        port: int = 0,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        if n_sites < 1:
            raise ValueError("need at least one site")
        self.cfg = cfg
        self.backbone_spec = backbone
        self.n_sites = n_sites
        self.timeout = timeout
        self.sock = socket.create_server((host, port))
        self.sock.settimeout(timeout)
        self.address = self.sock.getsockname()[:2]
        self.aggregator: Optional[Aggregator] = None
        self.rounds_completed = 0

    def close(self):
        self.sock.close()

    def _accept(self) -> Dict[str, socket.socket]:
        conns: Dict[str, socket.socket] = {}
        while len(conns) < self.n_sites:
            conn, peer = self.sock.accept()
            conn.settimeout(self.timeout)
            msg = recv_message(conn)
            if not isinstance(msg, Register):
                conn.close()
                raise SiteFailure(f"{peer}: expected Register, got {type(msg).__name__}")
            if msg.site_id in conns:
                conn.close()
                raise SiteFailure(f"duplicate site id {msg.site_id!r}")
            log.info("site %s registered from %s (n_train=%d)", msg.site_id, peer, msg.n_train)
            conns[msg.site_id] = conn
        return conns

    def serve(self) -> Aggregator:
        try:
            conns = self._accept()
        except BaseException:
            self.close()
            raise
        order = sorted(conns)
        agg = Aggregator(self.cfg, self.backbone_spec, order)
        self.aggregator = agg

        def recv(sid):
            try:
                msg = recv_message(conns[sid])
            except (ConnectionClosed, OSError) as exc:
                raise SiteFailure(f"site {sid} failed: {exc}") from exc
            if not isinstance(msg, LocalBackbone) or msg.site_id != sid:
                raise SiteFailure(f"site {sid}: unexpected {type(msg).__name__}")
            return msg

        try:
            with ThreadPoolExecutor(max_workers=len(order)) as pool:
                r = 0
                while True:
                    msg = agg.broadcast(r)
                    for sid in order:
                        send_message(conns[sid], msg)
                    replies = list(pool.map(recv, order))
                    stop = agg.collect(r, replies)
                    result = agg.broadcast(r)
                    for sid in order:
                        send_message(conns[sid], result)
                    if stop:
                        break
                    r += 1
            self.rounds_completed = r + 1
            for sid in order:
                send_message(conns[sid], EnterFineTune())
                send_message(conns[sid], Shutdown())
        finally:
            for c in conns.values():
                c.close()
            self.close()
        return agg


def _connect(host: str, port: int, timeout: float) -> socket.socket:
    deadline = time.monotonic() + timeout
    delay = 0.05
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            sock.settimeout(timeout)
            return sock
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(delay)
            delay = min(delay * 2, 1.0)


def run_site(
    site: SiteSpec,
    cfg: FederationConfig,
    host: str,
    port: int,
    timeout: float = DEFAULT_TIMEOUT,
) -> SiteWorker:
    """Connect to an aggregator and serve one site until Shutdown."""
    worker = SiteWorker(site, cfg)
    with _connect(host, port, timeout) as sock:
        send_message(sock, worker.register())
        while not worker.finished:
            reply = worker.handle(recv_message(sock))
            if reply is not None:
                send_message(sock, reply)
    return worker


def run_federated_tcp(
    cfg: FederationConfig,
    sites: Sequence[SiteSpec],
    host: str = "127.0.0.1",
    timeout: float = DEFAULT_TIMEOUT,
) -> FederationResult:
    """Aggregator and every site in local threads, talking over loopback TCP."""
    backbone = _check_sites(sites)
    server = AggregatorServer(cfg, backbone, len(sites), host, 0, timeout)
    h, p = server.address
    agg_box = {}

    def serve():
        agg_box["agg"] = server.serve()

    t = threading.Thread(target=serve, name="ffl-aggregator", daemon=True)
    t.start()
    with ThreadPoolExecutor(max_workers=len(sites)) as pool:
        futures = [pool.submit(run_site, s, cfg, h, p, timeout) for s in sites]
        workers = [f.result() for f in futures]
    t.join(timeout)
    if "agg" not in agg_box:
        raise SiteFailure("aggregator did not finish")
    agg = agg_box["agg"]
    by_id = {w.state.site_id: w for w in workers}
    order = sorted(by_id)
    return FederationResult(
        backbone=agg.backbone,
        sites={sid: by_id[sid].state for sid in order},
        rounds=agg.records,
        fine_tune_losses={sid: by_id[sid].fine_tune_history for sid in order},
        rounds_completed=server.rounds_completed,
    )
