"""Circle Problem (CP) and Random Circle Problem (RCP) generators, plus JSON I/O.

RCP draws come from numpy's PCG64.  The root ``SeedSequence(seed)`` is split
with ``spawn(n)`` into one independent stream per aircraft; each stream draws,
in order, the speed, the heading jitter and then as many angular positions as
rejection sampling needs.  Streams depend only on (seed, n), so instance files
are reproducible across platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GenerationFailure, InstanceFormatError
from .geom import AircraftState, Vec2
from .model import ControlBounds, ProblemInstance

FORMAT_VERSION = 1
MAX_REJECTION_ROUNDS = 10_000


@dataclass(frozen=True)
class InstanceSpec:
    kind: str
    n_aircraft: int
    radius: float = 200.0
    speed: float = 500.0
    speed_range: tuple[float, float] = (486.0, 594.0)
    heading_jitter: float = math.pi / 6
    d: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("CP", "RCP"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.n_aircraft < 2:
            raise ValueError("need at least two aircraft")
        if not self.radius > self.d:
            raise ValueError("radius must exceed the separation norm")

    def generate(self) -> ProblemInstance:
        if self.kind == "CP":
            return generate_cp(self.n_aircraft, self.radius, self.speed, self.d)
        return generate_rcp(self.n_aircraft, self.radius, self.speed_range,
                            self.heading_jitter, self.d, self.seed)


def _wrap(angle: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.remainder(angle, 2 * math.pi)
    return math.pi if a == -math.pi else a


def _inbound(angle: float, radius: float, speed: float, jitter: float = 0.0) -> AircraftState:
    pos = Vec2(radius * math.cos(angle), radius * math.sin(angle))
    return AircraftState(pos, speed, _wrap(angle + math.pi + jitter))


def generate_cp(n: int, radius: float = 200.0, speed: float = 500.0, d: float = 5.0) -> ProblemInstance:
    if n < 2:
        raise ValueError("need at least two aircraft")
    states = [_inbound(2 * math.pi * k / n, radius, speed) for k in range(n)]
    params = {"radius": radius, "speed": speed}
    return ProblemInstance(states, d, name=f"CP-{n}",
                           meta={"kind": "CP", "seed": None, "generator_params": params})


def generate_rcp(n: int, radius: float = 200.0, speed_range=(486.0, 594.0),
                 jitter: float = math.pi / 6, d: float = 5.0, seed: int = 0) -> ProblemInstance:
    if n < 2:
        raise ValueError("need at least two aircraft")
    streams = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]
    speeds = [float(g.uniform(*speed_range)) for g in streams]
    jitters = [float(g.uniform(-jitter, jitter)) for g in streams]
    angles = [float(g.uniform(0.0, 2 * math.pi)) for g in streams]

    min_gap = 2 * math.asin(min(d / (2 * radius), 1.0))  # chord length >= d
    for _ in range(MAX_REJECTION_ROUNDS):
        clash = set()
        for i in range(n):
            for j in range(i + 1, n):
                sep = abs(_wrap(angles[i] - angles[j]))
                if sep < min_gap:
                    clash.add(j)
        if not clash:
            break
        for j in sorted(clash):
            angles[j] = float(streams[j].uniform(0.0, 2 * math.pi))
    else:
        raise GenerationFailure(f"could not separate {n} aircraft after {MAX_REJECTION_ROUNDS} rounds")

    states = [_inbound(a, radius, v, dj) for a, v, dj in zip(angles, speeds, jitters)]
    params = {"radius": radius, "speed_range": list(speed_range), "heading_jitter": jitter}
    return ProblemInstance(states, d, name=f"RCP-{n}-s{seed}",
                           meta={"kind": "RCP", "seed": int(seed), "generator_params": params})


_TOP_KEYS = {"version", "kind", "d_nm", "aircraft", "seed", "generator_params", "name"}
_AC_KEYS = {"id", "x_nm", "y_nm", "speed_kn", "heading_rad"}


def instance_to_dict(inst: ProblemInstance) -> dict:
    meta = inst.meta or {}
    return {
        "version": FORMAT_VERSION,
        "kind": meta.get("kind", "custom"),
        "name": inst.name,
        "d_nm": float(inst.d),
        "aircraft": [
            {"id": k, "x_nm": float(s.position.x), "y_nm": float(s.position.y),
             "speed_kn": float(s.speed_hat), "heading_rad": float(s.heading_hat)}
            for k, s in enumerate(inst.states)
        ],
        "seed": meta.get("seed"),
        "generator_params": meta.get("generator_params", {}),
    }


def dumps_instance(inst: ProblemInstance) -> str:
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(instance_to_dict(inst), indent=2, sort_keys=False) + "\n"


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def instance_from_dict(data: dict, bounds: ControlBounds | None = None) -> ProblemInstance:
    if not isinstance(data, dict):
        raise InstanceFormatError("instance must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise InstanceFormatError(f"unknown fields: {sorted(unknown)}")
    missing = {"version", "kind", "d_nm", "aircraft"} - set(data)
    if missing:
        raise InstanceFormatError(f"missing fields: {sorted(missing)}")
    if data["version"] != FORMAT_VERSION:
        raise InstanceFormatError(f"unsupported version {data['version']!r}")
    if not isinstance(data["aircraft"], list):
        raise InstanceFormatError("aircraft must be a list")
    states = []
    for k, ac in enumerate(data["aircraft"]):
        if not isinstance(ac, dict):
            raise InstanceFormatError(f"aircraft #{k} must be an object")
        bad = set(ac) ^ _AC_KEYS
        if bad:
            raise InstanceFormatError(f"aircraft #{k}: unexpected or missing fields {sorted(bad)}")
        if ac["id"] != k:
            raise InstanceFormatError(f"aircraft ids must be 0..n-1 in order, got {ac['id']!r} at #{k}")
        try:
            states.append(AircraftState(Vec2(float(ac["x_nm"]), float(ac["y_nm"])),
                                        float(ac["speed_kn"]), float(ac["heading_rad"])))
        except (TypeError, ValueError) as exc:
            raise InstanceFormatError(f"aircraft #{k}: {exc}") from exc
    meta = {"kind": data["kind"], "seed": data.get("seed"),
            "generator_params": data.get("generator_params") or {}}
    return ProblemInstance(states, float(data["d_nm"]), bounds or ControlBounds(),
                           name=data.get("name", ""), meta=meta)


def load_instance(path, bounds: ControlBounds | None = None) -> ProblemInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(data, bounds)
