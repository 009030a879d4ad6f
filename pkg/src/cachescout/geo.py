"""IP geolocation, great-circle distance, and nearest-cache ranking.

Ranking orders cache records by (distance bucket, load, id). Distances are
bucketed to 10 km before the load tie-break so that effectively co-located
caches are load-balanced while the ordering stays deterministic. A per-subnet
memo of full rankings turns repeat lookups from the same /24 into O(k) work;
entries are invalidated by registry epoch changes and a TTL.
"""
from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass

from .registry import CacheRecord, Registry

EARTH_RADIUS_KM = 6371.0
DISTANCE_BUCKET_KM = 10.0
SUBNET_MASK = 0xFFFFFF00  # /24


@dataclass(frozen=True)
class GeoCoord:
    """Latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


def parse_ipv4(ip: str) -> int:
    """Strict dotted-quad IPv4 parser returning the address as an int."""
    parts = ip.split(".")
    if len(parts) != 4:
        raise ValueError(f"malformed IPv4 address: {ip!r}")
    value = 0
    for part in parts:
        # ASCII digits only; isdigit() would admit e.g. Arabic-Indic numerals
        if not part or len(part) > 3 or any(c not in "0123456789" for c in part) \
                or (len(part) > 1 and part[0] == "0"):
            raise ValueError(f"malformed IPv4 address: {ip!r}")
        octet = int(part)
        if octet > 255:
            raise ValueError(f"malformed IPv4 address: {ip!r}")
        value = (value << 8) | octet
    return value


def format_ipv4(value: int) -> str:
    return f"{(value >> 24) & 255}.{(value >> 16) & 255}.{(value >> 8) & 255}.{value & 255}"


def subnet_of(ip_int: int) -> int:
    return ip_int & SUBNET_MASK


def haversine_km(a: GeoCoord, b: GeoCoord) -> float:
    """Great-circle distance in kilometers on a 6371.0 km sphere."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


class IpLocator:
    """Longest-prefix IPv4 -> coordinate lookup over a static table.

    The table is a UTF-8 text file of ``A.B.C.D/len,lat,lon`` lines with
    ``#`` comments. An empty locator resolves everything to unknown.
    """

    def __init__(self, entries: list[tuple[str, GeoCoord]] | None = None):
        # one dict per prefix length, keyed by masked network int
        self._by_len: dict[int, dict[int, GeoCoord]] = {}
        for cidr, coord in entries or []:
            self.add(cidr, coord)
        self._lengths = sorted(self._by_len, reverse=True)

    def add(self, cidr: str, coord: GeoCoord) -> None:
        net, _, length_s = cidr.partition("/")
        if not length_s:
            raise ValueError(f"missing prefix length in {cidr!r}")
        length = int(length_s)
        if not (0 <= length <= 32):
            raise ValueError(f"prefix length out of range in {cidr!r}")
        mask = 0 if length == 0 else (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF
        self._by_len.setdefault(length, {})[parse_ipv4(net) & mask] = coord
        self._lengths = sorted(self._by_len, reverse=True)

    @classmethod
    def from_file(cls, path: str) -> "IpLocator":
        entries: list[tuple[str, GeoCoord]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    cidr, lat_s, lon_s = line.split(",")
                    entries.append((cidr.strip(), GeoCoord(float(lat_s), float(lon_s))))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad locator line {line!r}: {exc}") from None
        return cls(entries)

    def __len__(self) -> int:
        return sum(len(d) for d in self._by_len.values())

    def resolve(self, ip: str) -> GeoCoord | None:
        """Longest-prefix match; None when no prefix covers the address."""
        return self.resolve_int(parse_ipv4(ip))

    def resolve_int(self, ip_int: int) -> GeoCoord | None:
        for length in self._lengths:
            mask = 0 if length == 0 else (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF
            coord = self._by_len[length].get(ip_int & mask)
            if coord is not None:
                return coord
        return None


def distance_bucket(km: float) -> int:
    return round(km / DISTANCE_BUCKET_KM)


def _rank_key_located(client: GeoCoord):
    def key(rec: CacheRecord):
        if rec.geo is None:
            return (1, 0, rec.load, rec.id)
        return (0, distance_bucket(haversine_km(client, rec.geo)), rec.load, rec.id)

    return key


def _rank_key_unlocated(rec: CacheRecord):
    return (rec.load, rec.id)


def rank(client: GeoCoord | None, records: list[CacheRecord], k: int) -> list[CacheRecord]:
    """Order records by (distance bucket, load, id) and return the first k.

    Unknown-location records sort after every located one. An unknown client
    location degrades the whole ordering to (load, id).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if client is None:
        ordered = sorted(records, key=_rank_key_unlocated)
    else:
        ordered = sorted(records, key=_rank_key_located(client))
    return ordered[:k]


@dataclass(frozen=True)
class _SubnetEntry:
    ranked_ids: tuple[str, ...]
    epoch: int
    created_at: float


class NearestFinder:
    """Nearest-cache queries with a per-/24 subnet memo of full rankings.

    A hit requires the entry's epoch to match the current registry epoch and
    its age to be within ``cache_ttl_s``; results are then materialized from
    the live registry in O(k). ``cache_ttl_s <= 0`` disables the memo. Sort
    work is tracked in ``sort_ops`` (one op per ranking key evaluated), which
    stays flat on the hit path regardless of registry size.
    """

    def __init__(self, registry: Registry, locator: IpLocator,
                 cache_ttl_s: float = 60.0, record_ttl_s: float = 90.0):
        self._registry = registry
        self._locator = locator
        self._cache_ttl = cache_ttl_s
        self._record_ttl = record_ttl_s
        self._entries: dict[int, _SubnetEntry] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.sort_ops = 0

    def nearest(self, client_ip: str, k: int, now: float | None = None) -> list[CacheRecord]:
        """Ranked nearest records for a client address; malformed IP raises."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if now is None:
            now = time.monotonic()
        ip_int = parse_ipv4(client_ip)
        subnet = subnet_of(ip_int)
        min_heartbeat = now - self._record_ttl

        if self._cache_ttl > 0:
            with self._lock:
                entry = self._entries.get(subnet)
            if entry is not None and now - entry.created_at <= self._cache_ttl:
                epoch, records = self._registry.materialize(entry.ranked_ids, k, min_heartbeat)
                if epoch == entry.epoch:
                    with self._lock:
                        self.hits += 1
                    return records

        epoch, snapshot = self._registry.snapshot()
        fresh = [r for r in snapshot if r.last_heartbeat >= min_heartbeat]
        client = self._locator.resolve_int(ip_int)
        ordered = rank(client, fresh, len(fresh)) if fresh else []
        with self._lock:
            self.misses += 1
            self.sort_ops += len(fresh)
            if self._cache_ttl > 0:
                self._entries[subnet] = _SubnetEntry(
                    tuple(r.id for r in ordered), epoch, now)
        return ordered[:k]

    def cache_size(self) -> int:
        with self._lock:
            return len(self._entries)
