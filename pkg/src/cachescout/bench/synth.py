"""Deterministic synthetic cache fleets for benchmarking.

Agents get addresses in 10.0.0.0/8 (one /24 per 250 agents), coordinates
drawn per subnet, and loads drawn per agent, all from one seed so that two
runs with the same seed register identical fleets. The generated locator
table also covers the benchmark client subnet so ranked lookups exercise
the full distance path.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

# RFC 2544 benchmarking range, used as the simulated client address
BENCH_CLIENT_IP = "198.18.0.42"
BENCH_CLIENT_SUBNET = ("198.18.0.0/24", 45.4215, -75.6972)


@dataclass(frozen=True)
class SynthAgent:
    id: str
    hostname: str
    public_ip: str
    port: int
    load: float
    lat: float
    lon: float

    @property
    def subnet_cidr(self) -> str:
        a, b, c, _ = self.public_ip.split(".")
        return f"{a}.{b}.{c}.0/24"


def build_fleet(n: int, seed: int) -> list[SynthAgent]:
    """n synthetic agents with seed-deterministic coordinates and loads."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = random.Random(seed)
    subnet_coords: dict[tuple[int, int], tuple[float, float]] = {}
    fleet = []
    for i in range(n):
        d = i % 250 + 1
        c = (i // 250) % 250
        b = i // 62500
        if b > 255:
            raise ValueError(f"fleet size {n} exceeds the synthetic address plan")
        key = (b, c)
        if key not in subnet_coords:
            subnet_coords[key] = (round(rng.uniform(-60.0, 70.0), 4),
                                  round(rng.uniform(-180.0, 180.0), 4))
        lat, lon = subnet_coords[key]
        fleet.append(SynthAgent(
            id=f"bench-{i:06d}",
            hostname=f"sq-{i:06d}.bench.internal",
            public_ip=f"10.{b}.{c}.{d}",
            port=3128,
            load=round(rng.uniform(0.0, 10.0), 3),
            lat=lat,
            lon=lon,
        ))
    return fleet


def locator_lines(fleet: list[SynthAgent]) -> list[str]:
    lines = ["# synthetic benchmark locator table"]
    seen: set[str] = set()
    for agent in fleet:
        cidr = agent.subnet_cidr
        if cidr not in seen:
            seen.add(cidr)
            lines.append(f"{cidr},{agent.lat},{agent.lon}")
    cidr, lat, lon = BENCH_CLIENT_SUBNET
    lines.append(f"{cidr},{lat},{lon}")
    return lines


def write_locator_table(path: str, fleet: list[SynthAgent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(locator_lines(fleet)) + "\n")
