"""Embedded append-only event log with indexed queries and subscriptions.

One file holds every detection, hypothesis version, and model run: an
8-byte magic plus format version, then length-prefixed JSON records. The
full index is rebuilt by scanning on open — the file is the only source of
truth, appends are fsync'd before the id is returned, and a torn tail from
a crash is detected and overwritten by the next append. Readers get
immutable snapshots; subscribers get events over bounded queues and are
disconnected rather than block the writer when they fall behind.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import struct
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Mapping

from . import IcshuntError

logger = logging.getLogger(__name__)

MAGIC = b"ICSHUNT\x00"
FORMAT_VERSION = 1
_HEADER_LEN = len(MAGIC) + 4
_LENGTH_PREFIX = struct.Struct(">I")
#: Sanity ceiling for one record; a longer declared length means corruption.
MAX_RECORD_BYTES = 64 * 1024 * 1024
DEFAULT_MAX_PAGE_SIZE = 500
DEFAULT_SUBSCRIBER_QUEUE = 256


class StoreError(IcshuntError):
    pass


class StoreFormatError(StoreError):
    """File is not an event log or is corrupt beyond the tail."""


class StoreValidationError(StoreError):
    pass


class NotFoundError(StoreError, KeyError):
    def __str__(self) -> str:
        return self.args[0] if self.args else ""


class EventKind(str, Enum):
    DETECTION = "detection"
    HYPOTHESIS = "hypothesis"
    MODEL_RUN = "model_run"


@dataclass(frozen=True)
class StoredEvent:
    id: int
    kind: EventKind
    payload: dict
    created_at: float

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "payload": self.payload,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class QueryFilter:
    kind: EventKind | None = None
    since: float | None = None
    until: float | None = None
    attacker_ip: str | None = None
    attack_type: str | None = None
    status: str | None = None
    limit: int = 50
    offset: int = 0

    def validate(self, max_page_size: int) -> None:
        if self.limit < 1 or self.limit > max_page_size:
            raise StoreValidationError(
                f"limit must be in [1, {max_page_size}], got {self.limit}"
            )
        if self.offset < 0:
            raise StoreValidationError(f"offset must be >= 0, got {self.offset}")
        if self.since is not None and self.until is not None and self.since > self.until:
            raise StoreValidationError("since must not exceed until")


@dataclass(frozen=True)
class QueryResult:
    events: tuple[StoredEvent, ...]
    total: int


def event_time(event: StoredEvent) -> float:
    """Domain time of an event: payload timestamp, else append time."""
    payload = event.payload
    for key in ("timestamp", "updated_at"):
        value = payload.get(key)
        if isinstance(value, (int, float)):
            return float(value)
    return event.created_at


def _matches(event: StoredEvent, flt: QueryFilter) -> bool:
    if flt.kind is not None and event.kind is not flt.kind:
        return False
    when = event_time(event)
    if flt.since is not None and when < flt.since:
        return False
    if flt.until is not None and when > flt.until:
        return False
    if flt.attacker_ip is not None and event.payload.get("attacker_ip") != flt.attacker_ip:
        return False
    if flt.attack_type is not None and event.payload.get("attack_type") != flt.attack_type:
        return False
    if flt.status is not None and event.payload.get("status") != flt.status:
        return False
    return True


class Subscription:
    """Bounded buffer of store events for one consumer.

    A subscriber that stops draining is marked dropped and removed rather
    than ever blocking the append path.
    """

    def __init__(self, maxsize: int, on_close: Callable[["Subscription"], None]):
        self._queue: queue.Queue = queue.Queue(maxsize=maxsize)
        self._on_close = on_close
        self.dropped = False
        self.closed = False

    def get(self, timeout: float | None = None) -> StoredEvent | None:
        """Next event, or None on timeout / after close."""
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        return item

    def _offer(self, event: StoredEvent) -> bool:
        try:
            self._queue.put_nowait(event)
            return True
        except queue.Full:
            self.dropped = True
            return False

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._on_close(self)


class EventStore:
    """Single-writer append log; see module docstring for the format."""

    def __init__(self, path: str, max_page_size: int = DEFAULT_MAX_PAGE_SIZE):
        self.path = path
        self.max_page_size = max_page_size
        self._lock = threading.Lock()
        self._events: list[StoredEvent] = []
        self._by_id: dict[int, StoredEvent] = {}
        self._subscribers: list[Subscription] = []
        self._fh = self._open_and_scan()

    # -- lifecycle ---------------------------------------------------------

    def _open_and_scan(self):
        fresh = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        if fresh:
            fh = open(self.path, "w+b")
            fh.write(MAGIC + _LENGTH_PREFIX.pack(FORMAT_VERSION))
            fh.flush()
            os.fsync(fh.fileno())
            return fh

        fh = open(self.path, "r+b")
        header = fh.read(_HEADER_LEN)
        if len(header) < _HEADER_LEN or header[: len(MAGIC)] != MAGIC:
            fh.close()
            raise StoreFormatError(f"{self.path} is not an event log (bad magic)")
        (version,) = _LENGTH_PREFIX.unpack(header[len(MAGIC) :])
        if version != FORMAT_VERSION:
            fh.close()
            raise StoreFormatError(
                f"{self.path} uses format version {version}, expected {FORMAT_VERSION}"
            )

        valid_end = _HEADER_LEN
        last_id = 0
        while True:
            prefix = fh.read(_LENGTH_PREFIX.size)
            if not prefix:
                break
            if len(prefix) < _LENGTH_PREFIX.size:
                logger.warning("%s: torn record tail; truncating at %d", self.path, valid_end)
                break
            (length,) = _LENGTH_PREFIX.unpack(prefix)
            if length > MAX_RECORD_BYTES:
                fh.close()
                raise StoreFormatError(
                    f"{self.path}: record at {valid_end} declares {length} bytes"
                )
            body = fh.read(length)
            if len(body) < length:
                logger.warning("%s: torn record body; truncating at %d", self.path, valid_end)
                break
            try:
                doc = json.loads(body)
                event = StoredEvent(
                    id=int(doc["id"]),
                    kind=EventKind(doc["kind"]),
                    payload=doc["payload"],
                    created_at=float(doc["created_at"]),
                )
            except (ValueError, KeyError, TypeError) as exc:
                fh.close()
                raise StoreFormatError(
                    f"{self.path}: corrupt record at offset {valid_end}: {exc}"
                ) from exc
            if event.id <= last_id:
                fh.close()
                raise StoreFormatError(
                    f"{self.path}: non-increasing event id {event.id} after {last_id}"
                )
            last_id = event.id
            self._events.append(event)
            self._by_id[event.id] = event
            valid_end = fh.tell()

        fh.seek(valid_end)
        fh.truncate()
        logger.info("opened store %s with %d events", self.path, len(self._events))
        return fh

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None
            for sub in list(self._subscribers):
                sub.closed = True
            self._subscribers.clear()

    def __enter__(self) -> "EventStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- writes ------------------------------------------------------------

    def append(
        self, payload: Mapping, kind: EventKind | str, created_at: float | None = None
    ) -> int:
        kind = EventKind(kind)
        if not isinstance(payload, Mapping):
            raise StoreValidationError("payload must be a mapping")
        with self._lock:
            if self._fh is None:
                raise StoreError("store is closed")
            event = StoredEvent(
                id=(self._events[-1].id + 1) if self._events else 1,
                kind=kind,
                payload=dict(payload),
                created_at=time.time() if created_at is None else created_at,
            )
            try:
                body = json.dumps(event.to_doc(), separators=(",", ":")).encode("utf-8")
            except (TypeError, ValueError) as exc:
                raise StoreValidationError(f"payload is not serializable: {exc}") from exc
            try:
                self._fh.write(_LENGTH_PREFIX.pack(len(body)) + body)
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StoreError(f"durable write to {self.path} failed: {exc}") from exc
            self._events.append(event)
            self._by_id[event.id] = event
            subscribers = list(self._subscribers)

        self._notify(subscribers, event)
        return event.id

    def _notify(self, subscribers: list[Subscription], event: StoredEvent) -> int:
        delivered = 0
        for sub in subscribers:
            if sub.closed:
                continue
            if sub._offer(event):
                delivered += 1
            else:
                logger.warning("subscriber queue full; disconnecting slow subscriber")
                sub.close()
        return delivered

    # -- reads -------------------------------------------------------------

    def query(self, flt: QueryFilter | None = None) -> QueryResult:
        flt = flt or QueryFilter()
        flt.validate(self.max_page_size)
        with self._lock:
            snapshot = list(self._events)
        matches = [e for e in reversed(snapshot) if _matches(e, flt)]
        page = matches[flt.offset : flt.offset + flt.limit]
        return QueryResult(events=tuple(page), total=len(matches))

    def get(self, event_id: int) -> StoredEvent:
        with self._lock:
            event = self._by_id.get(event_id)
        if event is None:
            raise NotFoundError(f"no event with id {event_id}")
        return event

    def events(self) -> Iterator[StoredEvent]:
        """Append-order snapshot iterator (brute-force scans in tests)."""
        with self._lock:
            snapshot = list(self._events)
        return iter(snapshot)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)

    # -- subscriptions -----------------------------------------------------

    def subscribe(self, maxsize: int = DEFAULT_SUBSCRIBER_QUEUE) -> Subscription:
        sub = Subscription(maxsize=maxsize, on_close=self._unsubscribe)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)
