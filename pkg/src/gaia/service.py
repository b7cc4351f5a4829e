"""Composition root: wires the modules together and runs the HTTP service.

One process, one store. The reading path is ingest -> store -> rule engine ->
notifier; everything else reads from the store on demand.
"""

from __future__ import annotations

import logging
import os
import socket
import threading
import time
from dataclasses import dataclass

import uvicorn

from .analytics import Analytics
from .app import build_app
from .config import ServiceConfig
from .engagement import Engagement
from .engine import RuleEngine
from .ingest import Ingestor, Reading
from .model import SiteRegistry
from .notify import Notifier
from .store import SeriesStore

log = logging.getLogger("gaia.service")

RULES_DOC = "rules.json"
NOTIFICATION_LOG = "notifications.jsonl"


class BindError(Exception):
    pass


@dataclass
class ServiceContext:
    cfg: ServiceConfig
    registry: SiteRegistry
    store: SeriesStore
    ingestor: Ingestor
    engine: RuleEngine
    notifier: Notifier
    analytics: Analytics
    engagement: Engagement
    started_at: float

    def pump(self, reading: Reading) -> None:
        """Reading fan-in: evaluate rules, then publish any resulting recommendations."""
        for event in self.engine.on_reading(reading):
            rule = self.engine.get(event.rule_id)
            if rule is not None:
                self.notifier.notify(event, rule)

    def close(self) -> None:
        self.store.close()
        self.notifier.close()


def build_context(cfg: ServiceConfig, clock=time.time) -> ServiceContext:
    if cfg.tree is None:
        raise ValueError("config carries no parsed tree; use load_config()")
    store_dir = cfg.resolve(cfg.store_dir)
    os.makedirs(store_dir, exist_ok=True)
    registry = SiteRegistry(cfg.tree, cfg.users)
    store = SeriesStore(store_dir)
    ingestor = Ingestor(store, lambda: registry.tree, clock=clock)
    engine = RuleEngine(
        store,
        lambda: registry.tree,
        ingestor.series_for,
        default_dwell_s=cfg.dwell_s,
        default_staleness_s=cfg.staleness_s,
        persist_path=os.path.join(store_dir, RULES_DOC),
    )
    # The store's rule document wins over the config's initial set once it exists.
    persisted = os.path.join(store_dir, RULES_DOC)
    if os.path.exists(persisted):
        engine.load_rules(RuleEngine.load_persisted(persisted))
    elif cfg.initial_rules:
        engine.load_rules(cfg.initial_rules)
    notifier = Notifier(
        os.path.join(store_dir, NOTIFICATION_LOG),
        scope_exists=lambda path: registry.tree.has_path(path),
    )
    analytics = Analytics(store, lambda: registry.tree, ingestor.series_for)
    engagement = Engagement()
    if cfg.quest_defs:
        engagement.load_defs(cfg.quest_defs)
    ctx = ServiceContext(
        cfg=cfg,
        registry=registry,
        store=store,
        ingestor=ingestor,
        engine=engine,
        notifier=notifier,
        analytics=analytics,
        engagement=engagement,
        started_at=clock(),
    )
    ingestor.on_reading = ctx.pump
    return ctx


class ServiceHandle:
    """Running service; stop() drains in-flight work and closes sockets."""

    def __init__(self, ctx: ServiceContext, server: uvicorn.Server, thread: threading.Thread, port: int):
        self.ctx = ctx
        self.server = server
        self.thread = thread
        self.port = port

    @property
    def base_url(self) -> str:
        return f"http://{self.ctx.cfg.listen_host}:{self.port}"

    def stop(self, timeout: float = 10.0) -> None:
        app = self.server.config.app
        loop = getattr(app.state, "loop", None)
        stop_event = getattr(app.state, "stop_event", None)
        if loop is not None and stop_event is not None:
            loop.call_soon_threadsafe(stop_event.set)
        self.server.should_exit = True
        self.thread.join(timeout)
        self.ctx.close()


def run(cfg: ServiceConfig, wait_ready_s: float = 10.0) -> ServiceHandle:
    """Bind, start serving in a background thread, return a stoppable handle.

    Raises BindError when the address is taken and StoreCorrupt when the
    store directory cannot be replayed.
    """
    ctx = build_context(cfg)
    if cfg.ui_dir:
        from fastapi.staticfiles import StaticFiles

        app = build_app(ctx)
        app.mount("/ui", StaticFiles(directory=cfg.resolve(cfg.ui_dir), html=True), name="ui")
    else:
        app = build_app(ctx)

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((cfg.listen_host, cfg.listen_port))
    except OSError as exc:
        sock.close()
        ctx.close()
        raise BindError(f"{cfg.listen_host}:{cfg.listen_port}: {exc}") from exc
    port = sock.getsockname()[1]

    server = uvicorn.Server(
        uvicorn.Config(app, log_level=cfg.log_level, lifespan="on")
    )
    thread = threading.Thread(
        target=server.run, kwargs={"sockets": [sock]}, name="gaia-http", daemon=True
    )
    thread.start()
    deadline = time.time() + wait_ready_s
    while not server.started:
        if not thread.is_alive() or time.time() > deadline:
            ctx.close()
            raise RuntimeError("service failed to start")
        time.sleep(0.01)
    log.info("serving on %s:%s", cfg.listen_host, port)
    return ServiceHandle(ctx, server, thread, port)
