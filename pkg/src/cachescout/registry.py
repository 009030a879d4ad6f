"""Volatile in-memory store of active cache servers.

Heartbeats upsert records; a periodic sweep removes anything silent for
longer than the TTL. Nothing is persisted: a restart starts empty. Records
are immutable, so snapshots handed to readers can never contain a torn
write. Every mutation bumps a monotonically increasing epoch counter that
downstream subnet caches use for invalidation.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Sequence

if TYPE_CHECKING:
    from .geo import GeoCoord
    from .wire import Heartbeat


@dataclass(frozen=True)
class CacheRecord:
    """One tracked cache server. ``geo`` is None when the location is unknown."""

    id: str
    hostname: str
    public_ip: str
    port: int
    geo: "GeoCoord | None"
    load: float
    last_heartbeat: float
    first_seen: float

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not (1 <= self.port <= 65535):
            raise ValueError(f"port out of range: {self.port}")
        if self.load < 0:
            raise ValueError(f"load must be non-negative: {self.load}")
        if self.last_heartbeat < self.first_seen:
            raise ValueError("last_heartbeat precedes first_seen")

    def age_s(self, now: float) -> float:
        return now - self.last_heartbeat


class Registry:
    """Thread-safe map of record id -> CacheRecord with an epoch counter.

    Readers get consistent point-in-time copies; writers serialize on one
    lock. ``resolver`` maps a public IP to a coordinate and may fail or
    return None: the record is kept with an unknown location either way.
    """

    def __init__(self, resolver: "Callable[[str], GeoCoord | None] | None" = None):
        self._resolver = resolver
        self._records: dict[str, CacheRecord] = {}
        self._epoch = 0
        self._lock = threading.RLock()

    @property
    def epoch(self) -> int:
        with self._lock:
            return self._epoch

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def get(self, record_id: str) -> CacheRecord | None:
        with self._lock:
            return self._records.get(record_id)

    def upsert(self, hb: "Heartbeat", now: float) -> CacheRecord:
        """Apply one validated heartbeat; returns the stored record.

        New ids get ``first_seen = now`` and a freshly resolved location;
        known ids keep their ``first_seen`` and have endpoint, load, location,
        and ``last_heartbeat`` replaced. The epoch increments either way.
        """
        geo = None
        if self._resolver is not None:
            try:
                geo = self._resolver(hb.public_ip)
            except ValueError:
                geo = None
        with self._lock:
            old = self._records.get(hb.id)
            record = CacheRecord(
                id=hb.id,
                hostname=hb.hostname,
                public_ip=hb.public_ip,
                port=hb.port,
                geo=geo,
                load=hb.load,
                last_heartbeat=now,
                first_seen=old.first_seen if old is not None else now,
            )
            self._records[hb.id] = record
            self._epoch += 1
            return record

    def sweep_expired(self, now: float, ttl: float) -> list[CacheRecord]:
        """Remove and return every record silent for longer than ttl."""
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        with self._lock:
            removed = [r for r in self._records.values() if now - r.last_heartbeat > ttl]
            for record in removed:
                del self._records[record.id]
            if removed:
                self._epoch += 1
            return removed

    def snapshot(self) -> tuple[int, list[CacheRecord]]:
        """Consistent (epoch, records) copy."""
        with self._lock:
            return self._epoch, list(self._records.values())

    def materialize(self, ids: Sequence[str], limit: int,
                    min_heartbeat: float) -> tuple[int, list[CacheRecord]]:
        """Fetch up to ``limit`` live records by id, preserving order.

        Ids that have been removed or whose last heartbeat is older than
        ``min_heartbeat`` are skipped. Returns the epoch the lookup saw, so
        callers can tell whether the id ordering is still valid.
        """
        out: list[CacheRecord] = []
        with self._lock:
            for record_id in ids:
                record = self._records.get(record_id)
                if record is not None and record.last_heartbeat >= min_heartbeat:
                    out.append(record)
                    if len(out) >= limit:
                        break
            return self._epoch, out
