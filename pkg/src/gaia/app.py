"""HTTP + WebSocket surface wiring every module behind one FastAPI app.

Tokens are opaque strings validated upstream; here they name a user in the
registry. Read endpoints are open; mutations require a known user.
"""

from __future__ import annotations

import asyncio
import time
import uuid
from contextlib import asynccontextmanager
from datetime import date

from fastapi import Body, FastAPI, Header, HTTPException, Query, Request, WebSocket
from fastapi.responses import JSONResponse

from . import analytics as analytics_mod
from . import engagement as engagement_mod
from . import engine as engine_mod
from . import ingest as ingest_mod
from . import model as model_mod
from . import notify as notify_mod
from . import store as store_mod
from .conditions import ConditionSyntaxError
from .engine import Category, Rule
from .ingest import Reading, Source
from .model import SensorKind, default_aggregation
from .store import Agg, Timescale
from .timeutil import format_ts, parse_ts

WS_QUEUE_CAP = 256

_ERROR_STATUS = [
    (ingest_mod.ValidationFailed, 422),
    (engine_mod.ValidationFailed, 422),
    (ingest_mod.Unauthorized, 403),
    (engine_mod.Unauthorized, 403),
    (ingest_mod.UnknownResource, 404),
    (ingest_mod.EmptyFile, 400),
    (ingest_mod.BadHeader, 400),
    (store_mod.UnknownSeries, 404),
    (store_mod.BadRange, 400),
    (engine_mod.NotFound, 404),
    (model_mod.NotFound, 404),
    (model_mod.AmbiguousName, 404),
    (notify_mod.UnknownScope, 404),
    (analytics_mod.NoData, 404),
    (analytics_mod.TooFewPoints, 400),
    (analytics_mod.InsufficientHistory, 400),
    (analytics_mod.MissingMetadata, 404),
    (engagement_mod.UnknownQuest, 404),
    (engagement_mod.UnknownClass, 404),
    (engagement_mod.UnknownStudent, 404),
    (engagement_mod.UnknownSchool, 404),
    (engagement_mod.DuplicateCompletion, 409),
    (engagement_mod.DuplicateBadge, 409),
]


def _ts_param(value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return parse_ts(value)
    except ValueError:
        raise HTTPException(400, f"{name}: expected unix seconds or ISO-8601, got {value!r}")


def _period_param(value: str, name: str) -> tuple[int, int]:
    parts = value.split("/")
    if len(parts) != 2:
        raise HTTPException(400, f"{name}: expected 'start/end'")
    t0, t1 = _ts_param(parts[0], name), _ts_param(parts[1], name)
    if t0 >= t1:
        raise HTTPException(400, f"{name}: start must precede end")
    return t0, t1


def build_app(ctx) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.loop = asyncio.get_running_loop()
        app.state.stop_event = asyncio.Event()
        yield

    app = FastAPI(title="gaia", version="0.1.0", lifespan=lifespan)
    app.state.ctx = ctx

    for exc_type, status in _ERROR_STATUS:
        def handler(request: Request, exc, status=status):
            body = {"error": type(exc).__name__, "detail": str(exc)}
            cause = exc.__cause__
            if isinstance(cause, ConditionSyntaxError):
                body["token_index"] = cause.token_index
                body["offset"] = cause.offset
            return JSONResponse(status_code=status, content=body)

        app.add_exception_handler(exc_type, handler)

    def current_user(authorization: str | None):
        if not authorization:
            return None
        token = authorization.removeprefix("Bearer ").strip()
        return ctx.registry.user(token)

    def require_user(authorization: str | None):
        user = current_user(authorization)
        if user is None:
            raise HTTPException(401, "unknown or missing token")
        return user

    def _resolve_or_404(path: str):
        node = ctx.registry.tree.node_at(path)
        if node is None:
            raise HTTPException(404, f"unknown resource path {path!r}")
        return node

    # -- health / tree -----------------------------------------------------------

    @app.get("/api/v1/health")
    def health():
        return {
            "status": "ok",
            "uptime_s": round(time.time() - ctx.started_at, 3),
            "modules": {
                "store": {"series": len(ctx.store.series_ids())},
                "rules": ctx.engine.health(),
                "notifier": ctx.notifier.health(),
            },
        }

    @app.get("/api/v1/tree")
    def tree():
        tree = ctx.registry.tree
        nodes = []
        for node in tree.walk():
            doc = {
                "id": node.id,
                "kind": node.kind.value,
                "name": node.name,
                "parent": node.parent,
                "path": tree.canonical_path(node.id),
            }
            if node.metadata is not None:
                doc["metadata"] = {
                    "surface_m2": node.metadata.surface_m2,
                    "energy_types": sorted(e.value for e in node.metadata.energy_types),
                    "building_type": node.metadata.building_type,
                    "construction_year": node.metadata.construction_year,
                    "occupant_count": node.metadata.occupant_count,
                    "timezone": node.metadata.timezone,
                }
            nodes.append(doc)
        return {"nodes": nodes}

    # -- ingestion ---------------------------------------------------------------

    def _reading_from_doc(doc: dict, source_default: str, author: str | None) -> Reading:
        try:
            kind = SensorKind(doc["kind"])
            source = Source(doc.get("source", source_default))
            ts = doc.get("timestamp")
            ts = int(time.time()) if ts is None else (ts if isinstance(ts, int) else parse_ts(ts))
            return ingest_mod.make_reading(
                doc["resource"], kind, ts, float(doc["value"]), source, author
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ingest_mod.ValidationFailed(f"bad reading document: {exc}") from exc

    @app.post("/api/v1/readings")
    def post_readings(body=Body(...), authorization: str | None = Header(None)):
        user = current_user(authorization)
        author = user.id if user else None
        if isinstance(body, list):
            acks = []
            for doc in body:
                try:
                    r = _reading_from_doc(doc, "iot", author)
                    ack = ctx.ingestor.ingest_reading(r, user)
                    acks.append({"ack": {"series_id": ack.series_id, "seq": ack.seq}})
                except Exception as exc:  # per-item outcome for batch submitters
                    acks.append({"error": type(exc).__name__, "detail": str(exc)})
            return {"acks": acks}
        r = _reading_from_doc(body, "iot", author)
        ack = ctx.ingestor.ingest_reading(r, user)
        return {"ack": {"series_id": ack.series_id, "seq": ack.seq}}

    @app.post("/api/v1/manual")
    def post_manual(body: dict = Body(...), authorization: str | None = Header(None)):
        user = require_user(authorization)
        if "cumulative_kwh" in body:
            meter = body.get("meter") or body.get("resource")
            if not meter:
                raise ingest_mod.ValidationFailed("monthly entry needs a 'meter' path")
            meta = ctx.ingestor.ensure_series(meter, SensorKind.ENERGY_KWH, Source.MANUAL)
            day = date.fromisoformat(body["date"])
            ack = ctx.ingestor.ingest_manual_monthly(
                meta.series_id, day, float(body["cumulative_kwh"]), user
            )
            return {"ack": {"series_id": ack.series_id, "seq": ack.seq}}
        doc = dict(body)
        doc["source"] = "manual"
        r = _reading_from_doc(doc, "manual", user.id)
        ack = ctx.ingestor.ingest_reading(r, user)
        return {"ack": {"series_id": ack.series_id, "seq": ack.seq}}

    def _decode_series_id(series_id: str) -> tuple[str, SensorKind, Source]:
        parts = series_id.split(".")
        if len(parts) < 3:
            raise HTTPException(404, f"unknown series {series_id!r}")
        try:
            return "/".join(parts[:-2]), SensorKind(parts[-2]), Source(parts[-1])
        except ValueError:
            raise HTTPException(404, f"unknown series {series_id!r}")

    @app.post("/api/v1/uploads/{series_id}")
    async def post_upload(
        series_id: str,
        request: Request,
        interval: int = Query(900),
        authorization: str | None = Header(None),
    ):
        user = require_user(authorization)
        meta = ctx.ingestor.series_meta(series_id)
        if meta is None:
            path, kind, source = _decode_series_id(series_id)
            meta = ingest_mod.SeriesMeta(
                series_id=series_id,
                resource_path=path,
                kind=kind,
                unit=model_mod.KIND_SPECS[kind].unit,
                source=source,
                nominal_interval_s=interval,
            )
        elif meta.nominal_interval_s is None:
            meta = ingest_mod.SeriesMeta(
                series_id=meta.series_id,
                resource_path=meta.resource_path,
                kind=meta.kind,
                unit=meta.unit,
                source=meta.source,
                nominal_interval_s=interval,
            )
        content = await request.body()
        report = ctx.ingestor.ingest_file(content, meta, user)
        return {
            "report": {
                "series_id": report.series_id,
                "accepted_count": report.accepted_count,
                "rejected": [{"line": ln, "reason": why} for ln, why in report.rejected],
            }
        }

    # -- series reads ----------------------------------------------------------------

    @app.get("/api/v1/resources/{path:path}/series")
    def list_series(path: str):
        _resolve_or_404(path)
        return {
            "series": [
                {
                    "series_id": m.series_id,
                    "kind": m.kind.value,
                    "source": m.source.value,
                    "unit": m.unit,
                    "nominal_interval_s": m.nominal_interval_s,
                }
                for m in ctx.ingestor.all_series()
                if m.resource_path == path
            ]
        }

    @app.get("/api/v1/series/{series_id}/range")
    def series_range(
        series_id: str,
        from_: str = Query(..., alias="from"),
        to: str = Query(..., alias="to"),
    ):
        t0, t1 = _ts_param(from_, "from"), _ts_param(to, "to")
        points = ctx.store.query_range(series_id, t0, t1)
        return {
            "series_id": series_id,
            "points": [{"ts": format_ts(p.ts), "value": p.value, "seq": p.seq} for p in points],
        }

    @app.get("/api/v1/series/{series_id}/agg")
    def series_agg(
        series_id: str,
        scale: str,
        from_: str = Query(..., alias="from"),
        to: str = Query(..., alias="to"),
        agg: str | None = None,
        tz: str | None = None,
    ):
        t0, t1 = _ts_param(from_, "from"), _ts_param(to, "to")
        try:
            timescale = Timescale(scale)
        except ValueError:
            raise HTTPException(400, f"scale must be one of daily|weekly|monthly|yearly")
        meta = ctx.ingestor.series_meta(series_id)
        if agg is None:
            agg = default_aggregation(meta.kind) if meta else "mean"
        try:
            agg_e = Agg(agg)
        except ValueError:
            raise HTTPException(400, "agg must be one of sum|mean|min|max|count")
        if tz is None:
            tz = "UTC"
            if meta is not None:
                node = ctx.registry.tree.node_at(meta.resource_path)
                if node is not None:
                    building = ctx.registry.tree.building_of(node.id)
                    if building is not None and building.metadata is not None:
                        tz = building.metadata.timezone
        buckets = ctx.store.aggregate(series_id, timescale, agg_e, t0, t1, tz)
        return {
            "series_id": series_id,
            "scale": timescale.value,
            "agg": agg_e.value,
            "tz": tz,
            "buckets": [
                {"start": format_ts(b.bucket_start), "value": b.value, "count": b.sample_count}
                for b in buckets
            ],
        }

    @app.get("/api/v1/series/{series_id}/anomalies")
    def series_anomalies(
        series_id: str,
        from_: str = Query(..., alias="from"),
        to: str = Query(..., alias="to"),
        threshold: float = 3.0,
        baseline_weeks: int = 4,
    ):
        t0, t1 = _ts_param(from_, "from"), _ts_param(to, "to")
        params = analytics_mod.AnomalyParams(baseline_weeks=baseline_weeks, threshold=threshold)
        found = ctx.analytics.anomalies(series_id, t0, t1, params)
        return {
            "series_id": series_id,
            "anomalies": [
                {
                    "ts": format_ts(a.ts),
                    "observed": a.observed,
                    "expected": a.expected,
                    "score": a.score,
                    "direction": a.direction,
                }
                for a in found
            ],
        }

    # -- rules --------------------------------------------------------------------------

    def _rule_doc(rule: Rule, requested_path: str) -> dict:
        doc = rule.to_doc()
        doc["inherited_from"] = rule.target if rule.target != requested_path else None
        return doc

    @app.get("/api/v1/resources/{path:path}/rules/{rule_id}")
    def get_rule(path: str, rule_id: str):
        _resolve_or_404(path)
        rule = ctx.engine.get(rule_id)
        if rule is None or (path != rule.target and not path.startswith(rule.target + "/")):
            raise HTTPException(404, f"no rule {rule_id!r} at {path!r}")
        return _rule_doc(rule, path)

    @app.put("/api/v1/resources/{path:path}/rules/{rule_id}")
    def put_rule(
        path: str, rule_id: str, body: dict = Body(...), authorization: str | None = Header(None)
    ):
        user = require_user(authorization)
        _resolve_or_404(path)
        try:
            rule = Rule(
                id=rule_id,
                name=body["name"],
                target=path,
                condition=body["condition"],
                category=Category(body.get("category", "behavioral")),
                suggestion_template=body["suggestion"],
                cooldown_s=int(body.get("cooldown_s", ctx.cfg.cooldown_s)),
                enabled=bool(body.get("enabled", True)),
            )
        except (KeyError, ValueError) as exc:
            raise engine_mod.ValidationFailed(f"bad rule document: {exc}") from exc
        stored = ctx.engine.upsert_rule(rule, user)
        return stored.to_doc()

    @app.delete("/api/v1/resources/{path:path}/rules/{rule_id}")
    def delete_rule(path: str, rule_id: str, authorization: str | None = Header(None)):
        user = require_user(authorization)
        _resolve_or_404(path)
        ctx.engine.delete_rule(rule_id, user)
        return {"deleted": rule_id}

    @app.get("/api/v1/resources/{path:path}/rules")
    def list_rules(path: str):
        _resolve_or_404(path)
        return {"rules": [_rule_doc(rule, path) for rule, _ in ctx.engine.rules_for(path)]}

    # -- notifications ---------------------------------------------------------------------

    @app.get("/api/v1/notifications")
    def notifications(
        scope: str | None = None, since: str | None = None, limit: int | None = None
    ):
        since_ts = _ts_param(since, "since") if since else None
        return {"notifications": ctx.notifier.query_log(scope, since_ts, limit)}

    @app.websocket("/ws/notifications")
    async def ws_notifications(websocket: WebSocket):
        scope = websocket.query_params.get("scope", "")
        categories_csv = websocket.query_params.get("categories", "")
        if not scope or not ctx.registry.tree.has_path(scope):
            await websocket.close(code=4404)
            return
        categories = None
        if categories_csv:
            try:
                categories = {Category(c.strip()) for c in categories_csv.split(",") if c.strip()}
            except ValueError:
                await websocket.close(code=4400)
                return
        await websocket.accept()
        loop = asyncio.get_running_loop()
        q: asyncio.Queue = asyncio.Queue()
        client_id = f"ws-{uuid.uuid4().hex[:12]}"

        def deliver(n) -> bool:
            if q.qsize() >= WS_QUEUE_CAP:
                return False
            loop.call_soon_threadsafe(q.put_nowait, n)
            return True

        ctx.notifier.attach(client_id, scope, categories, deliver)
        stop_task = asyncio.create_task(app.state.stop_event.wait())
        recv_task = asyncio.create_task(websocket.receive())
        try:
            while True:
                get_task = asyncio.create_task(q.get())
                done, _ = await asyncio.wait(
                    {recv_task, get_task, stop_task}, return_when=asyncio.FIRST_COMPLETED
                )
                if stop_task in done:
                    get_task.cancel()
                    await websocket.close(code=1001)  # going away: graceful stop
                    break
                if recv_task in done:
                    get_task.cancel()
                    msg = recv_task.result()
                    if msg.get("type") == "websocket.disconnect":
                        break
                    recv_task = asyncio.create_task(websocket.receive())
                    continue
                n = get_task.result()
                await websocket.send_json(n.to_doc())
        finally:
            ctx.notifier.unsubscribe(client_id)
            for task in (recv_task, stop_task):
                if not task.done():
                    task.cancel()

    # -- analytics ------------------------------------------------------------------------------

    @app.get("/api/v1/buildings/{building_id}/compare")
    def compare(
        building_id: str,
        metric: str = "energy_kwh",
        period: str = Query(...),
        baseline: str = Query(...),
    ):
        try:
            kind = SensorKind(metric)
        except ValueError:
            raise HTTPException(400, f"unknown metric {metric!r}")
        result = ctx.analytics.compare_periods(
            building_id,
            kind,
            _period_param(period, "period"),
            _period_param(baseline, "baseline"),
            baseline_descriptor="baseline period",
        )
        return {
            "subject": result.subject,
            "metric": result.metric,
            "subject_value": result.subject_value,
            "baseline_value": result.baseline_value,
            "delta_pct": result.delta_pct,
            "comments": result.comments,
        }

    @app.get("/api/v1/buildings/{building_id}/peers")
    def peers(building_id: str):
        tree = ctx.registry.tree
        return {
            "peers": [
                {
                    "id": p.id,
                    "name": p.name,
                    "path": tree.canonical_path(p.id),
                    "surface_m2": p.metadata.surface_m2,
                    "building_type": p.metadata.building_type,
                }
                for p in ctx.analytics.peer_group(building_id)
            ]
        }

    # -- engagement ---------------------------------------------------------------------------------

    @app.get("/api/v1/leaderboard")
    def leaderboard(scope: str = "classes"):
        try:
            rows = ctx.engagement.leaderboard(scope)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return {
            "scope": scope,
            "rows": [
                {
                    "entity_id": r.entity_id,
                    "score": r.score,
                    "last_scored_at": format_ts(r.last_scored_at) if r.last_scored_at else None,
                }
                for r in rows
            ],
        }

    @app.post("/api/v1/quests/{quest_id}/complete")
    def complete_quest(
        quest_id: str, body: dict = Body(...), authorization: str | None = Header(None)
    ):
        user = require_user(authorization)
        student = body.get("student", user.id)
        at = body.get("at")
        at_ts = int(time.time()) if at is None else (at if isinstance(at, int) else parse_ts(at))
        score = ctx.engagement.award_points(student, quest_id, at_ts)
        return {"student": student, "score": score}

    @app.get("/api/v1/classes/{class_id}")
    def class_view(class_id: str):
        eng = ctx.engagement
        return {
            "id": class_id,
            "score": eng.class_score(class_id),
            "members": eng.class_members(class_id),
            "badges": [
                {"kind": b.kind, "awarded_at": format_ts(b.awarded_at), "criterion": b.criterion}
                for b in eng.badges(class_id)
            ],
            "snapshots": [
                {"student": s.student_id, "title": s.title, "at": format_ts(s.submitted_at)}
                for s in eng.recent_snapshots(class_id)
            ],
        }

    return app
