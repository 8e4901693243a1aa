"""HTTP JSON API and live alert stream over the hunting pipeline.

One FastAPI application fronts the embedded event store: paginated attack
history, hypothesis/prediction lookups, on-demand capture ingestion, and
classifier retraining. Alerts reach clients over a persistent
``text/event-stream`` response; every event is persisted to the store
before it is offered to any stream subscriber, so anything seen on the
stream can immediately be fetched back by id.

No authentication is performed — bind to loopback unless the network is
trusted.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import uvicorn
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import IcshuntError
from .classifier import (
    ModelHyperparams,
    TrainedModel,
    evaluate,
    load_model,
    save_model,
    train,
)
from .knowledge import (
    AugmentSpec,
    Domain,
    Granularity,
    KnowledgeBase,
    UnknownEntityError,
    build_dataset,
    load_bundle_file,
    load_packaged_bundle,
)
from .pipeline import run_hunt
from .signatures import RuleSet, load_default_rules, load_rules
from .store import (
    DEFAULT_SUBSCRIBER_QUEUE,
    EventKind,
    EventStore,
    NotFoundError,
    QueryFilter,
    StoreError,
    StoredEvent,
    Subscription,
)

logger = logging.getLogger(__name__)

#: Version stamped on every HTTP response body, errors included.
SCHEMA_VERSION = 1

DEFAULT_BIND_HOST = "127.0.0.1"
DEFAULT_BIND_PORT = 8800
#: Origins allowed by default: local dashboard dev servers.
DEFAULT_CORS_ORIGINS = (
    "http://localhost:5173",
    "http://127.0.0.1:5173",
)
STREAM_KEEPALIVE_SECONDS = 15.0


class StartupError(IcshuntError):
    """The service cannot come up with the given configuration."""


@dataclass(frozen=True)
class ApiConfig:
    """Everything `serve` needs; all input paths are checked up front."""

    store_path: str
    bundle_ics: str | None = None
    bundle_enterprise: str | None = None
    rules_path: str | None = None
    model_path: str | None = None
    bind_host: str = DEFAULT_BIND_HOST
    bind_port: int = DEFAULT_BIND_PORT
    cors_origins: tuple[str, ...] = DEFAULT_CORS_ORIGINS
    granularity: Granularity = Granularity.TECHNIQUE
    keepalive_seconds: float = STREAM_KEEPALIVE_SECONDS

    def validate(self) -> None:
        if not 1 <= self.bind_port <= 65535:
            raise StartupError(f"bind port must be in [1, 65535], got {self.bind_port}")
        if self.keepalive_seconds <= 0:
            raise StartupError("keepalive interval must be positive")
        for label, path in (
            ("knowledge bundle", self.bundle_ics),
            ("knowledge bundle", self.bundle_enterprise),
            ("rule file", self.rules_path),
        ):
            if path is not None and not Path(path).exists():
                raise StartupError(f"{label} not found: {path}")
        parent = Path(self.store_path).resolve().parent
        if not parent.is_dir():
            raise StartupError(f"store directory not found: {parent}")


class AlertHub:
    """Fan-out of persisted events to connected stream subscribers.

    Delivery reuses the store's bounded `Subscription`: a subscriber that
    stops draining is dropped, never blocking the publisher.
    """

    def __init__(self, queue_size: int = DEFAULT_SUBSCRIBER_QUEUE):
        self._queue_size = queue_size
        self._lock = threading.Lock()
        self._subscribers: list[Subscription] = []

    def subscribe(self) -> Subscription:
        sub = Subscription(self._queue_size, self._discard)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def _discard(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subscribers)

    def publish_alert(self, event: StoredEvent) -> int:
        """Offer one already-persisted event to every subscriber.

        Returns how many subscribers accepted it; zero subscribers is a
        perfectly good day. Subscribers iterate in subscription order, so
        any two that accept every event see the same sequence.
        """
        with self._lock:
            subscribers = list(self._subscribers)
        delivered = 0
        stalled = []
        for sub in subscribers:
            if sub._offer(event):
                delivered += 1
            else:
                stalled.append(sub)
        for sub in stalled:
            logger.warning("dropping stalled stream subscriber")
            sub.close()
        return delivered


@dataclass
class ServiceState:
    """Mutable runtime of one service instance, shared across requests."""

    config: ApiConfig
    kb: KnowledgeBase
    rules: RuleSet
    store: EventStore
    hub: AlertHub
    model: TrainedModel
    kb_enterprise: KnowledgeBase | None = None
    model_lock: threading.Lock = field(default_factory=threading.Lock)
    ingest_lock: threading.Lock = field(default_factory=threading.Lock)
    started_at: float = field(default_factory=time.time)

    def current_model(self) -> TrainedModel:
        with self.model_lock:
            return self.model

    def swap_model(self, model: TrainedModel) -> None:
        with self.model_lock:
            self.model = model

    def enterprise_kb(self) -> KnowledgeBase:
        """Enterprise knowledge base, loaded on first use and cached."""
        if self.kb_enterprise is None:
            if self.config.bundle_enterprise is not None:
                self.kb_enterprise = load_bundle_file(
                    self.config.bundle_enterprise, Domain.ENTERPRISE
                )
            else:
                self.kb_enterprise = load_packaged_bundle(Domain.ENTERPRISE)
        return self.kb_enterprise


class IngestRequest(BaseModel):
    capture_path: str


class TrainRequest(BaseModel):
    granularity: str = Granularity.TECHNIQUE.value
    seed: int = 0
    noise: float = Field(default=0.0, ge=0.0)
    copies: int = Field(default=0, ge=0)
    domain: str = Domain.ICS.value


def _envelope(**fields) -> dict:
    return {"schema_version": SCHEMA_VERSION, **fields}


def _load_dependencies(config: ApiConfig) -> ServiceState:
    config.validate()
    if config.bundle_ics is not None:
        kb = load_bundle_file(config.bundle_ics, Domain.ICS)
    else:
        kb = load_packaged_bundle(Domain.ICS)

    if config.rules_path is not None:
        rules = load_rules(Path(config.rules_path).read_text(encoding="utf-8"), kb,
                           source=config.rules_path)
    else:
        rules = load_default_rules(kb)

    try:
        store = EventStore(config.store_path)
    except StoreError as exc:
        raise StartupError(
            f"event store {config.store_path} failed to open: {exc}; "
            "move the file aside or restore it from a backup to recover"
        ) from exc

    model_file = Path(config.model_path) if config.model_path else None
    if model_file is not None and model_file.exists():
        model = load_model(str(model_file))
    else:
        dataset = build_dataset(kb, config.granularity)
        model = train(dataset, ModelHyperparams())
        if model_file is not None:
            save_model(model, str(model_file))

    return ServiceState(
        config=config,
        kb=kb,
        rules=rules,
        store=store,
        hub=AlertHub(),
        model=model,
    )


def _technique_doc(kb: KnowledgeBase, technique_id: str) -> dict:
    technique = kb.technique(technique_id)
    return {
        "id": technique.id,
        "name": technique.name,
        "description": technique.description,
        "tactics": [
            {"id": tid, "name": kb.tactic(tid).name} for tid in technique.tactic_ids
        ],
    }


def _latest_hypothesis_event(
    store: EventStore, hypothesis_id: str
) -> StoredEvent | None:
    """Newest stored snapshot of the hypothesis, or None."""
    for event in reversed(list(store.events())):
        if event.kind is EventKind.HYPOTHESIS and event.payload.get("id") == hypothesis_id:
            return event
    return None


def _resolve_hypothesis(store: EventStore, ref: str) -> StoredEvent:
    """Accept either a store event id or a hypothesis id string."""
    if ref.isdigit():
        event = store.get(int(ref))
        if event.kind is not EventKind.HYPOTHESIS:
            raise NotFoundError(f"event {ref} is not a hypothesis")
        return event
    event = _latest_hypothesis_event(store, ref)
    if event is None:
        raise NotFoundError(f"no hypothesis {ref}")
    return event


def create_app(config: ApiConfig) -> FastAPI:
    """Build the application; raises StartupError if dependencies fail."""
    state = _load_dependencies(config)
    app = FastAPI(title="icshunt", docs_url=None, redoc_url=None, openapi_url=None)
    app.state.icshunt = state

    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["GET", "POST"],
            allow_headers=["*"],
        )

    @app.exception_handler(HTTPException)
    async def _http_error(request: Request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content=_envelope(detail=exc.detail),
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content=_envelope(detail="invalid request", errors=exc.errors()),
        )

    @app.get("/api/health")
    def health() -> dict:
        model = state.current_model()
        return _envelope(
            status="ok",
            uptime_seconds=round(time.time() - state.started_at, 3),
            store={"path": state.store.path, "events": len(state.store)},
            rules={"source": state.rules.source, "count": len(state.rules)},
            knowledge={
                "domain": state.kb.domain.value,
                "bundle_version": state.kb.bundle_version,
                "tactics": len(state.kb.tactics),
                "techniques": len(state.kb.techniques),
                "groups": len(state.kb.groups),
            },
            model={
                "granularity": model.granularity.value,
                "classes": len(model.classes),
                "features": len(model.feature_names),
            },
            stream_subscribers=state.hub.subscriber_count,
        )

    @app.get("/api/attacks")
    def attacks(
        limit: int = Query(default=50, ge=1),
        offset: int = Query(default=0, ge=0),
        attacker_ip: str | None = None,
        attack_type: str | None = None,
        since: float | None = None,
        until: float | None = None,
    ) -> dict:
        flt = QueryFilter(
            kind=EventKind.DETECTION,
            since=since,
            until=until,
            attacker_ip=attacker_ip,
            attack_type=attack_type,
            limit=limit,
            offset=offset,
        )
        try:
            result = state.store.query(flt)
        except StoreError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return _envelope(
            total=result.total,
            count=len(result.events),
            events=[event.to_doc() for event in result.events],
        )

    @app.get("/api/attacks/{event_id}")
    def attack_detail(event_id: int) -> dict:
        try:
            event = state.store.get(event_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if event.kind is not EventKind.DETECTION:
            raise HTTPException(status_code=404, detail=f"event {event_id} is not a detection")
        technique_ids = event.payload.get("technique_ids", [])
        techniques = [
            _technique_doc(state.kb, tid)
            for tid in technique_ids
            if tid in state.kb.techniques
        ]
        hypothesis = None
        for candidate in reversed(list(state.store.events())):
            if candidate.kind is EventKind.HYPOTHESIS and event.payload.get("id") in candidate.payload.get(
                "detection_ids", []
            ):
                hypothesis = candidate.to_doc()
                break
        return _envelope(event=event.to_doc(), techniques=techniques, hypothesis=hypothesis)

    @app.get("/api/hypotheses")
    def hypotheses(
        limit: int = Query(default=50, ge=1),
        offset: int = Query(default=0, ge=0),
        status: str | None = None,
        include_history: bool = Query(default=False),
    ) -> dict:
        if include_history:
            flt = QueryFilter(
                kind=EventKind.HYPOTHESIS, status=status, limit=limit, offset=offset
            )
            try:
                result = state.store.query(flt)
            except StoreError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            return _envelope(
                total=result.total,
                count=len(result.events),
                events=[event.to_doc() for event in result.events],
            )
        # Versions of one hypothesis collapse to the newest snapshot.
        latest: dict[str, StoredEvent] = {}
        for event in state.store.events():
            if event.kind is EventKind.HYPOTHESIS:
                latest[event.payload.get("id", "")] = event
        collapsed = sorted(latest.values(), key=lambda e: e.id, reverse=True)
        if status is not None:
            collapsed = [e for e in collapsed if e.payload.get("status") == status]
        page = collapsed[offset : offset + limit]
        return _envelope(
            total=len(collapsed),
            count=len(page),
            events=[event.to_doc() for event in page],
        )

    @app.get("/api/hypotheses/{ref}")
    def hypothesis_detail(ref: str) -> dict:
        try:
            event = _resolve_hypothesis(state.store, ref)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return _envelope(event=event.to_doc())

    @app.get("/api/predictions/{ref}")
    def predictions(ref: str) -> dict:
        try:
            event = _resolve_hypothesis(state.store, ref)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        payload = event.payload
        candidates = []
        for doc in payload.get("candidates", []):
            group = state.kb.groups.get(doc.get("group_id", ""))
            candidates.append(
                {
                    "group_id": doc.get("group_id"),
                    "group_name": group.name if group else doc.get("group_id"),
                    "score": doc.get("score"),
                    "superset_match": doc.get("superset_match"),
                }
            )
        predicted = []
        for pair in payload.get("predicted_future", []):
            technique_id = pair.get("technique_id")
            tactic_id = pair.get("tactic_id")
            if technique_id in state.kb.techniques:
                entry = _technique_doc(state.kb, technique_id)
            else:
                entry = {"id": technique_id, "name": technique_id, "tactics": []}
            entry["tactic_id"] = tactic_id
            try:
                entry["tactic_name"] = state.kb.tactic(tactic_id).name
            except UnknownEntityError:
                entry["tactic_name"] = tactic_id
            predicted.append(entry)
        return _envelope(
            hypothesis_id=payload.get("id"),
            event_id=event.id,
            status=payload.get("status"),
            attacker_ip=payload.get("attacker_ip"),
            victim_ip=payload.get("victim_ip"),
            candidates=candidates,
            predicted=predicted,
        )

    @app.post("/api/ingest")
    def ingest(request: IngestRequest) -> dict:
        capture = Path(request.capture_path)
        if not capture.is_file():
            raise HTTPException(status_code=400, detail=f"capture not found: {capture}")
        with state.ingest_lock:
            try:
                result = run_hunt(
                    str(capture),
                    state.rules,
                    state.kb,
                    state.current_model(),
                    store=state.store,
                    on_event=state.hub.publish_alert,
                )
            except IcshuntError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return _envelope(
            capture_path=str(capture),
            packets=result.packets,
            frames=result.frames,
            detections=len(result.detections),
            detection_ids=list(result.detection_event_ids),
            hypothesis_ids=list(result.hypothesis_event_ids),
            attack_types=sorted({d.attack_type for d in result.detections}),
        )

    @app.post("/api/classifier/train")
    def classifier_train(request: TrainRequest) -> dict:
        try:
            granularity = Granularity(request.granularity)
            domain = Domain(request.domain)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        kb = state.kb if domain is Domain.ICS else state.enterprise_kb()
        augment = AugmentSpec(
            noise_rate=request.noise, copies_per_group=request.copies, seed=request.seed
        )
        try:
            augment.validate()
            dataset = build_dataset(kb, granularity, augment)
            model = train(dataset, ModelHyperparams(seed=request.seed))
            accuracy = evaluate(model, dataset)
        except IcshuntError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        # Only a model over the hunt knowledge base can drive correlation;
        # anything else is reported and recorded without being activated.
        activated = domain is Domain.ICS
        if activated:
            state.swap_model(model)
        event_id = state.store.append(
            {
                "domain": domain.value,
                "granularity": granularity.value,
                "seed": request.seed,
                "noise": request.noise,
                "copies": request.copies,
                "samples": model.report.samples,
                "final_loss": model.report.final_loss,
                "accuracy": accuracy,
                "classes": list(model.classes),
                "activated": activated,
            },
            EventKind.MODEL_RUN,
        )
        return _envelope(
            event_id=event_id,
            domain=domain.value,
            granularity=granularity.value,
            classes=len(model.classes),
            samples=model.report.samples,
            final_loss=model.report.final_loss,
            accuracy=accuracy,
            activated=activated,
        )

    @app.get("/api/stream")
    def stream() -> StreamingResponse:
        sub = state.hub.subscribe()

        def events() -> Iterator[str]:
            try:
                yield ": connected\n\n"
                while True:
                    event = sub.get(timeout=config.keepalive_seconds)
                    if event is None:
                        if sub.closed:
                            return
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(event.to_doc(), separators=(',', ':'))}\n\n"
            finally:
                sub.close()

        return StreamingResponse(
            events(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    return app


def serve(config: ApiConfig, *, block: bool = True) -> uvicorn.Server:
    """Run the API; with block=False returns once the server is listening."""
    app = create_app(config)
    server = uvicorn.Server(
        uvicorn.Config(
            app,
            host=config.bind_host,
            port=config.bind_port,
            log_level="warning",
        )
    )
    if block:
        server.run()
        return server
    thread = threading.Thread(target=server.run, name="icshunt-api", daemon=True)
    thread.start()
    deadline = time.time() + 10.0
    while not server.started:
        if time.time() > deadline:
            raise StartupError(
                f"server failed to start on {config.bind_host}:{config.bind_port}"
            )
        if not thread.is_alive():
            raise StartupError(
                f"server exited during startup on {config.bind_host}:{config.bind_port}"
            )
        time.sleep(0.02)
    return server
