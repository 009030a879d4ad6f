from __future__ import annotations

import threading

import pytest

from cachescout.broker import Broker, UnknownExchangeError, UnknownQueueError


def make_broker(capacity: int = 100) -> Broker:
    broker = Broker()
    broker.declare_exchange("hub")
    broker.declare_queue("inbox", capacity)
    broker.bind("inbox", "hub", "beat")
    return broker


def test_publish_routes_to_bound_queue():
    broker = make_broker()
    assert broker.publish("hub", "beat", b"m1") == 1
    msg = broker.consume("inbox", max_wait=0.0)
    assert msg.payload == b"m1"
    assert msg.routing_key == "beat"


def test_consume_is_fifo():
    broker = make_broker()
    for i in range(5):
        broker.publish("hub", "beat", f"m{i}".encode())
    got = [broker.consume("inbox", 0.0).payload for _ in range(5)]
    assert got == [b"m0", b"m1", b"m2", b"m3", b"m4"]


def test_consume_timeout_returns_none():
    broker = make_broker()
    assert broker.consume("inbox", max_wait=0.01) is None


def test_routing_key_must_match_exactly():
    broker = make_broker()
    assert broker.publish("hub", "beat.extra", b"x") == 0
    assert broker.publish("hub", "BEAT", b"x") == 0
    assert broker.stats()["discarded_total"] == 2
    assert broker.queue_depth("inbox") == 0


def test_unbound_publish_is_discarded_and_counted():
    broker = Broker()
    broker.declare_exchange("hub")
    assert broker.publish("hub", "beat", b"x") == 0
    assert broker.stats()["discarded_total"] == 1


def test_binding_resumes_delivery():
    broker = Broker()
    broker.declare_exchange("hub")
    broker.publish("hub", "beat", b"lost")
    broker.declare_queue("inbox", 10)
    broker.bind("inbox", "hub", "beat")
    assert broker.publish("hub", "beat", b"kept") == 1
    assert broker.consume("inbox", 0.0).payload == b"kept"
    assert broker.stats()["discarded_total"] == 1


def test_fanout_to_multiple_queues():
    broker = make_broker()
    broker.declare_queue("audit", 100)
    broker.bind("audit", "hub", "beat")
    assert broker.publish("hub", "beat", b"x") == 2
    assert broker.consume("inbox", 0.0).payload == b"x"
    assert broker.consume("audit", 0.0).payload == b"x"


def test_overflow_drops_oldest():
    broker = make_broker(capacity=3)
    for i in range(5):
        broker.publish("hub", "beat", f"m{i}".encode())
    stats = broker.stats()
    assert stats["queue_dropped_total"] == 2
    assert stats["queue_depth"] == 3
    got = [broker.consume("inbox", 0.0).payload for _ in range(3)]
    assert got == [b"m2", b"m3", b"m4"]


def test_unknown_exchange_and_queue_raise():
    broker = make_broker()
    with pytest.raises(UnknownExchangeError):
        broker.publish("nope", "beat", b"x")
    with pytest.raises(UnknownQueueError):
        broker.consume("nope", 0.0)
    with pytest.raises(UnknownQueueError):
        broker.queue_depth("nope")
    with pytest.raises(UnknownExchangeError):
        broker.bind("inbox", "nope", "beat")
    with pytest.raises(UnknownQueueError):
        broker.bind("nope", "hub", "beat")


def test_declarations_are_idempotent_and_capacity_is_sticky():
    broker = make_broker(capacity=3)
    broker.declare_exchange("hub")
    broker.declare_queue("inbox", 999)  # ignored: queue already exists
    broker.bind("inbox", "hub", "beat")  # duplicate binding ignored
    for i in range(5):
        broker.publish("hub", "beat", b"x")
    assert broker.queue_depth("inbox") == 3
    assert broker.consume("inbox", 0.0) is not None
    assert broker.queue_depth("inbox") == 2  # no double delivery from rebinding


def test_invalid_arguments_raise():
    broker = make_broker()
    with pytest.raises(ValueError):
        broker.declare_exchange("")
    with pytest.raises(ValueError):
        broker.declare_queue("", 10)
    with pytest.raises(ValueError):
        broker.declare_queue("q", 0)
    with pytest.raises(ValueError):
        broker.publish("hub", "", b"x")
    with pytest.raises(ValueError):
        broker.publish("hub", "beat", b"")
    with pytest.raises(ValueError):
        broker.bind("inbox", "hub", "")


def test_blocking_consume_wakes_on_publish():
    broker = make_broker()
    received = []

    def consumer():
        received.append(broker.consume("inbox", max_wait=5.0))

    thread = threading.Thread(target=consumer)
    thread.start()
    broker.publish("hub", "beat", b"ping")
    thread.join(timeout=5)
    assert not thread.is_alive()
    assert received[0].payload == b"ping"


def test_competing_consumers_split_the_stream():
    broker = make_broker()
    for i in range(100):
        broker.publish("hub", "beat", f"{i}".encode())
    seen: list[bytes] = []
    lock = threading.Lock()

    def worker():
        while True:
            msg = broker.consume("inbox", max_wait=0.0)
            if msg is None:
                return
            with lock:
                seen.append(msg.payload)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=5)
    assert sorted(seen, key=int) == [f"{i}".encode() for i in range(100)]
