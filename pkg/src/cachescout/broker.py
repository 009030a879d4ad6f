"""Minimal in-process message broker with exchange -> queue routing.

Publishers address an exchange with a routing key; bindings with an exactly
matching key copy the message into bounded FIFO queues. A publish that
matches no binding is discarded permanently and counted. Queues drop their
oldest message on overflow so a burst can never exhaust memory. Network
ingestion happens through the server's POST /publish endpoint, which calls
``publish`` on behalf of remote agents.
"""
from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass

log = logging.getLogger(__name__)


class UnknownExchangeError(LookupError):
    pass


class UnknownQueueError(LookupError):
    pass


@dataclass(frozen=True)
class BrokerMessage:
    routing_key: str
    payload: bytes
    enqueued_at: float


@dataclass(frozen=True)
class Binding:
    exchange: str
    queue: str
    routing_key: str


class _Queue:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: deque[BrokerMessage] = deque()
        self.cond = threading.Condition()
        self.dropped = 0

    def put(self, msg: BrokerMessage) -> None:
        with self.cond:
            if len(self.items) >= self.capacity:
                self.items.popleft()
                self.dropped += 1
            self.items.append(msg)
            self.cond.notify()

    def get(self, max_wait: float) -> BrokerMessage | None:
        deadline = time.monotonic() + max_wait
        with self.cond:
            while not self.items:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self.cond.wait(remaining)
            return self.items.popleft()

    def __len__(self) -> int:
        with self.cond:
            return len(self.items)


class Broker:
    """Exchange/queue router safe for any number of concurrent tasks."""

    def __init__(self):
        self._lock = threading.Lock()
        self._exchanges: set[str] = set()
        self._queues: dict[str, _Queue] = {}
        # (exchange, routing_key) -> queue names, exact-match routing only
        self._routes: dict[tuple[str, str], list[str]] = {}
        self._bindings: list[Binding] = []
        self._discarded = 0

    def declare_exchange(self, name: str) -> None:
        if not name:
            raise ValueError("exchange name must be non-empty")
        with self._lock:
            self._exchanges.add(name)

    def declare_queue(self, name: str, capacity: int) -> None:
        if not name:
            raise ValueError("queue name must be non-empty")
        if capacity <= 0:
            raise ValueError("queue capacity must be positive")
        with self._lock:
            existing = self._queues.get(name)
            if existing is None:
                self._queues[name] = _Queue(capacity)
            elif existing.capacity != capacity:
                log.warning("queue %s already declared with capacity %d; keeping it "
                            "(requested %d)", name, existing.capacity, capacity)

    def bind(self, queue: str, exchange: str, routing_key: str) -> None:
        if not routing_key:
            raise ValueError("routing key must be non-empty")
        with self._lock:
            if exchange not in self._exchanges:
                raise UnknownExchangeError(exchange)
            if queue not in self._queues:
                raise UnknownQueueError(queue)
            binding = Binding(exchange, queue, routing_key)
            if binding not in self._bindings:
                self._bindings.append(binding)
                self._routes.setdefault((exchange, routing_key), []).append(queue)

    def publish(self, exchange: str, routing_key: str, payload: bytes) -> int:
        """Copy the message into every queue bound with this key.

        Returns the delivery count; 0 means the message was discarded (and
        counted) because nothing was bound.
        """
        if not routing_key:
            raise ValueError("routing key must be non-empty")
        if not payload:
            raise ValueError("payload must be non-empty")
        with self._lock:
            if exchange not in self._exchanges:
                raise UnknownExchangeError(exchange)
            queue_names = self._routes.get((exchange, routing_key), ())
            queues = [self._queues[name] for name in queue_names]
            if not queues:
                self._discarded += 1
                return 0
        msg = BrokerMessage(routing_key, bytes(payload), time.monotonic())
        for q in queues:
            q.put(msg)
        return len(queues)

    def consume(self, queue: str, max_wait: float) -> BrokerMessage | None:
        """Pop the oldest message, waiting up to max_wait seconds; None if idle.

        Competing consumers are fine: each message goes to exactly one.
        """
        with self._lock:
            q = self._queues.get(queue)
        if q is None:
            raise UnknownQueueError(queue)
        return q.get(max_wait)

    def queue_depth(self, queue: str) -> int:
        with self._lock:
            q = self._queues.get(queue)
        if q is None:
            raise UnknownQueueError(queue)
        return len(q)

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {
                "discarded_total": self._discarded,
                "queue_dropped_total": sum(q.dropped for q in self._queues.values()),
                "queue_depth": sum(len(q) for q in self._queues.values()),
            }
