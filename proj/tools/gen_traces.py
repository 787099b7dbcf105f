#!/usr/bin/env python3
"""Regenerates the example traces in scenarios/. Deterministic (fixed seeds)."""
import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "scenarios"


def write(name, lines):
    with open(OUT / name, "w") as f:
        for line in lines:
            f.write(json.dumps(line, separators=(",", ":")) + "\n")


def classroom(seconds=3600, step=10, seed=7):
    # Lesson with rising CO2-like load: warmer, more humid, lower gas resistance.
    rng = random.Random(seed)
    lines = []
    for t in range(0, seconds + 1, step):
        x = t / seconds
        lines.append({"t": t, "ambient": {
            "temp_c": round(21.0 + 2.2 * x + 0.15 * math.sin(t / 300.0), 3),
            "pressure_hpa": round(1012.4 + 0.3 * math.sin(t / 900.0), 3),
            "humidity_pct": round(41.0 + 9.0 * x + 0.5 * math.sin(t / 420.0), 3),
            "gas_resistance_ohm": round(150000 - 90000 * x + 2000 * math.sin(t / 200.0), 1),
            "lux": round(320 + 40 * math.sin(t / 600.0), 1),
        }})
    # Chatter under the threshold plus a few loud moments.
    events = []
    for _ in range(40):
        events.append((rng.uniform(5, seconds - 5), rng.uniform(55, 72), rng.uniform(200, 1500)))
    for t in (612.0, 1490.0, 1523.0, 2710.0, 3305.0):
        events.append((t, rng.uniform(80, 92), rng.uniform(300, 900)))
    for t, level, dur in events:
        lines.append({"t": round(t, 3), "event": {"kind": "sound", "level_dbspl": round(level, 2),
                                                   "duration_ms": round(dur, 1)}})
    lines.sort(key=lambda line: (line["t"], "event" in line))
    write("classroom_1h.jsonl", lines)


def playground(seconds=86400, seed=11):
    # Busy: loud bursts every few seconds during breaks and school hours.
    rng = random.Random(seed)
    lines = [{"t": 0, "ambient": {"temp_c": 17.0, "humidity_pct": 60.0, "lux": 0.0}}]
    t = 1.0
    while t < seconds:
        lines.append({"t": round(t, 3), "event": {"kind": "sound", "level_dbspl": round(rng.uniform(80, 98), 2),
                                                   "duration_ms": round(rng.uniform(200, 2000), 1)}})
        t += rng.uniform(3, 20)
    write("playground_24h.jsonl", lines)


def quiet(seconds=86400, seed=13):
    # Empty classroom overnight: two loud events per day.
    rng = random.Random(seed)
    lines = [{"t": 0, "ambient": {"temp_c": 18.0, "humidity_pct": 48.0, "lux": 0.0}}]
    for t in sorted(rng.uniform(0, seconds) for _ in range(2)):
        lines.append({"t": round(t, 3), "event": {"kind": "sound", "level_dbspl": 85.0, "duration_ms": 500.0}})
    write("quiet_24h.jsonl", lines)


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    classroom()
    playground()
    quiet()
