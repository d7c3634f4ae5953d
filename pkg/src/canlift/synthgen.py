"""Deterministic synthetic drives: physics, CAN encoding and GPS.

A drive is simulated at 100 Hz with a point-mass longitudinal model and a
scripted driver (launch, accelerate through the gears, cruise, brake, stop).
The physical series are then quantised into a randomised CAN layout among
noise channels (constants, counters, multi-value fields, slowly drifting
sensors, random-walk sensors, checksum-like bytes) and a 1 Hz GPS track.

Everything is a pure function of the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .canlog import CanLog, GpsTrack
from .decomposer import CandidateKey

PHYSICS_HZ = 100
SIGNAL_PERIOD_S = 0.01
EPOCH = 1_600_000_000.0
TARGET_SIGNALS = ("velocity", "rpm", "accelerator", "brake", "clutch")

IDLE_RPM = 800.0
# engine rpm per km/h in each gear
GEAR_RPM_PER_KMH = (130.0, 75.0, 50.0, 38.0, 30.0)
GEAR_MAX_ACCEL = (3.4, 2.5, 1.8, 1.3, 1.0)  # m/s^2 at full pedal
MAX_BRAKE_DECEL = 9.0


@dataclass(frozen=True)
class DriverStyle:
    """Pedal behaviour of one driver."""

    accel_level: float = 0.45  # typical accelerator position when speeding up
    pedal_rate: float = 1.0  # pedal travel per second
    brake_level: float = 0.4
    brake_rate: float = 1.2
    shift_rpm: float = 2600.0
    clutch_slip_s: float = 0.6
    cruise_jitter: float = 0.04  # accelerator wobble while cruising
    speed_range: tuple[float, float] = (35.0, 110.0)
    stop_probability: float = 0.5


SMOOTH = DriverStyle(
    accel_level=0.3, pedal_rate=0.5, brake_level=0.25, brake_rate=0.5,
    shift_rpm=2200.0, clutch_slip_s=0.8, cruise_jitter=0.02,
)
AGGRESSIVE = DriverStyle(
    accel_level=0.75, pedal_rate=2.5, brake_level=0.7, brake_rate=3.0,
    shift_rpm=3300.0, clutch_slip_s=0.35, cruise_jitter=0.08,
)


@dataclass(frozen=True)
class Channel:
    """One field in a CAN message.

    ``kind`` is one of the target signal names or a noise class:
    ``constant``, ``counter``, ``multivalue``, ``drift``, ``walk``, ``checksum``.
    Signals are encoded as ``round(value / scale + offset)``.
    """

    kind: str
    can_id: int
    start: int
    width: int = 1
    scale: float = 1.0
    offset: float = 0.0
    little_endian: bool = False
    value: int = 0  # constants, counter start
    step: int = 1  # counter increment per frame

    @property
    def key(self) -> CandidateKey:
        return CandidateKey(self.can_id, self.start, self.width, self.little_endian and self.width == 2)

    @property
    def bytes(self) -> range:
        return range(self.start, self.start + self.width)


@dataclass(frozen=True)
class Message:
    can_id: int
    dlc: int
    period_s: float
    channels: tuple[Channel, ...]


@dataclass(frozen=True)
class ScenarioSpec:
    duration_s: float = 600.0
    style: DriverStyle = field(default_factory=DriverStyle)
    messages: tuple[Message, ...] = ()
    seed: int = 0
    gps_noise_m: float = 3.0
    gps_noise_corr: float = 0.98
    start_time: float = EPOCH

    def __post_init__(self):
        for msg in self.messages:
            used: set[int] = set()
            for ch in msg.channels:
                if ch.can_id != msg.can_id:
                    raise ValueError(f"channel id {ch.can_id:#x} inside message {msg.can_id:#x}")
                if set(ch.bytes) & used or ch.start + ch.width > msg.dlc:
                    raise ValueError(f"overlapping or out-of-range span in message {msg.can_id:#x}")
                used |= set(ch.bytes)

    @property
    def layout(self) -> dict[str, Channel]:
        return {ch.kind: ch for m in self.messages for ch in m.channels if ch.kind in TARGET_SIGNALS}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioSpec:
        d = dict(d)
        style = d.pop("style", None)
        messages = d.pop("messages", None) or ()
        style = DriverStyle(**{**style, "speed_range": tuple(style.get("speed_range", (35.0, 110.0)))}) if style else DriverStyle()
        msgs = tuple(
            Message(m["can_id"], m["dlc"], m["period_s"], tuple(Channel(**c) for c in m["channels"]))
            for m in messages
        )
        return cls(style=style, messages=msgs, **d)


@dataclass(frozen=True, eq=False)
class PhysicalDrive:
    t: np.ndarray  # seconds from drive start
    velocity: np.ndarray  # km/h
    rpm: np.ndarray
    accelerator: np.ndarray  # 0..1
    brake: np.ndarray
    clutch: np.ndarray
    gear: np.ndarray
    standing_starts: int

    def signal(self, name: str) -> np.ndarray:
        return getattr(self, name)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    locations: dict[str, Channel]
    physical: PhysicalDrive
    start_time: float

    def key(self, name: str) -> CandidateKey:
        return self.locations[name].key

    def manifest(self) -> dict:
        return {
            name: {"location": str(ch.key), "scale": ch.scale, "offset": ch.offset}
            for name, ch in sorted(self.locations.items())
        }


@dataclass(frozen=True, eq=False)
class DriveBundle:
    log: CanLog
    gps: GpsTrack
    truth: GroundTruth
    spec: ScenarioSpec


# --- physics ------------------------------------------------------------------


def _approach(x: float, target: float, rate: float, dt: float) -> float:
    step = rate * dt
    if x < target:
        return min(target, x + step)
    return max(target, x - step)


def simulate_drive(spec: ScenarioSpec) -> PhysicalDrive:
    """100 Hz physical series for one drive."""
    rng = np.random.default_rng([spec.seed, 1])
    style = spec.style
    dt = 1.0 / PHYSICS_HZ
    n = int(round(spec.duration_s * PHYSICS_HZ))
    out = {k: np.zeros(n) for k in ("velocity", "rpm", "accelerator", "brake", "clutch", "gear")}

    v = 0.0  # m/s
    rpm = free_rpm = IDLE_RPM
    acc = brake = 0.0
    clutch = 1.0
    gear = 0
    phase = "idle"
    phase_t = 0.0
    phase_len = float(rng.uniform(2.0, 6.0))
    target_kmh = 0.0
    release = None  # clutch release script: list of (duration, level)
    after_shift = "accelerate"
    starts = 0
    wobble = 0.0
    net_accel = 0.0

    def new_target():
        lo, hi = style.speed_range
        return float(rng.uniform(lo, hi))

    for i in range(n):
        kmh = v * 3.6
        phase_t += dt

        if phase == "idle":
            acc = _approach(acc, 0.0, 5.0, dt)
            clutch = _approach(clutch, 1.0, 4.0, dt)
            brake = _approach(brake, style.brake_level * 0.6, style.brake_rate, dt)
            gear = 0
            if phase_t >= phase_len and style.accel_level > 0:  # a zero level keeps the car parked
                phase, phase_t = "launch", 0.0
                target_kmh = new_target()
                release = _release_script(style, rng)
                starts += 1
        elif phase == "launch":
            brake = _approach(brake, 0.0, 4.0, dt)
            if brake == 0.0:
                clutch, done = _run_release(release, phase_t, clutch, dt)
                acc = _approach(acc, style.accel_level * 0.7, style.pedal_rate, dt)
                if done:
                    phase, phase_t = "accelerate", 0.0
        elif phase == "accelerate":
            clutch = _approach(clutch, 0.0, 4.0, dt)
            acc = _approach(acc, style.accel_level, style.pedal_rate, dt)
            if rpm > style.shift_rpm and gear < 4:
                phase, phase_t, after_shift = "shift", 0.0, "accelerate"
            elif kmh >= target_kmh or (phase_t > 2.0 and net_accel < 0.1):
                # reached the target, or the car cannot go any faster in this gear
                target_kmh = min(target_kmh, kmh)
                phase, phase_t = "cruise", 0.0
                phase_len = float(rng.uniform(8.0, 40.0))
        elif phase == "cruise":
            clutch = _approach(clutch, 0.0, 4.0, dt)
            if rng.random() < 0.01:
                wobble = float(rng.normal(0.0, style.cruise_jitter))
            hold = _cruise_pedal(kmh, gear) + 0.02 * (target_kmh - kmh) + wobble
            acc = _approach(acc, min(max(hold, 0.0), 1.0), style.pedal_rate, dt)
            if rpm > style.shift_rpm * 0.9 and gear < 4:
                phase, phase_t, after_shift = "shift", 0.0, "cruise"
            elif rpm < 1300 and gear > 0:
                phase, phase_t, after_shift = "downshift", 0.0, "cruise"
            elif phase_t >= phase_len:
                phase, phase_t = "brake", 0.0
                if rng.random() < style.stop_probability:
                    target_kmh = 0.0
                else:
                    target_kmh = max(style.speed_range[0] * 0.6, kmh * float(rng.uniform(0.4, 0.8)))
        elif phase == "brake":
            acc = _approach(acc, 0.0, 5.0, dt)
            if acc == 0.0:
                want = style.brake_level * (1.0 if target_kmh == 0 else 0.6)
                brake = _approach(brake, want, style.brake_rate, dt)
            if target_kmh == 0.0 and kmh < 12.0:
                clutch = _approach(clutch, 1.0, 4.0, dt)
            elif rpm < 1100 and gear > 0:
                phase, phase_t, after_shift = "downshift", 0.0, "brake"
            if target_kmh == 0.0 and kmh <= 0.05:
                v = 0.0
                phase, phase_t = "idle", 0.0
                phase_len = float(rng.uniform(2.0, 8.0))
            elif target_kmh > 0 and kmh <= target_kmh:
                phase, phase_t = "release_brake", 0.0
        elif phase == "release_brake":
            brake = _approach(brake, 0.0, style.brake_rate * 1.5, dt)
            if brake == 0.0:
                phase, phase_t = "accelerate", 0.0
                target_kmh = new_target()
        elif phase in ("shift", "downshift"):
            if phase_t < 0.25:
                acc = _approach(acc, 0.0, 6.0, dt)
                clutch = _approach(clutch, 1.0, 6.0, dt)
            elif release is None or phase_t < 0.3:
                gear = gear + 1 if phase == "shift" else gear - 1
                release = _release_script(style, rng)
                phase_t = 0.3
            else:
                clutch, done = _run_release(release, phase_t - 0.3, clutch, dt)
                if after_shift != "brake":
                    acc = _approach(acc, style.accel_level * 0.8, style.pedal_rate, dt) if clutch < 0.7 else acc
                if done:
                    release = None
                    phase, phase_t = after_shift, 0.0
            if phase in ("shift", "downshift") and after_shift == "brake":
                brake = _approach(brake, style.brake_level * 0.5, style.brake_rate, dt)

        # pedals are exclusive by construction
        if brake > 0.0:
            acc = 0.0

        engaged = 1.0 - min(max((clutch - 0.2) / 0.6, 0.0), 1.0)
        drive = acc * GEAR_MAX_ACCEL[gear] * engaged
        drag = 0.12 + 0.00045 * v * v if v > 0 else 0.0
        net_accel = drive - drag - brake * MAX_BRAKE_DECEL
        v = max(0.0, v + net_accel * dt)
        kmh = v * 3.6

        coupled = max(IDLE_RPM, kmh * GEAR_RPM_PER_KMH[gear])
        if engaged >= 1.0:
            free_rpm = coupled
        else:
            free_rpm += (IDLE_RPM + acc * 3000.0 - free_rpm) * min(1.0, dt / 0.25)
        rpm = engaged * coupled + (1.0 - engaged) * free_rpm + float(rng.normal(0.0, 3.0))

        out["velocity"][i] = kmh
        out["rpm"][i] = max(rpm, 0.0)
        out["accelerator"][i] = acc
        out["brake"][i] = brake
        out["clutch"][i] = clutch
        out["gear"][i] = gear + 1

    t = np.arange(n) / PHYSICS_HZ
    return PhysicalDrive(t=t, standing_starts=starts, **out)


def _cruise_pedal(kmh: float, gear: int) -> float:
    v = kmh / 3.6
    return (0.12 + 0.00045 * v * v) / GEAR_MAX_ACCEL[gear]


def _release_script(style: DriverStyle, rng) -> list[tuple[float, float]]:
    level = float(rng.uniform(0.42, 0.58))
    slip = style.clutch_slip_s * float(rng.uniform(0.85, 1.15))
    return [(0.25, level), (slip, level), (0.25, 0.0)]


def _run_release(script, t: float, clutch: float, dt: float) -> tuple[float, bool]:
    """Clutch position while following a release script; True when finished."""
    elapsed = 0.0
    for duration, level in script:
        if t < elapsed + duration:
            rate = abs(clutch - level) / max(elapsed + duration - t, dt)
            return _approach(clutch, level, max(rate, 0.1), dt), False
        elapsed += duration
    return 0.0, True


# --- layouts ------------------------------------------------------------------

# Encodings a car may use for each target signal: (width, scale, offset).
SIGNAL_ENCODINGS = {
    "velocity": [(2, 0.1, 0.0), (2, 0.125, 0.0), (2, 0.2, 0.0)],
    "rpm": [(2, 1.0, 0.0), (2, 0.5, 0.0), (2, 0.5, 100.0), (2, 0.25, 0.0)],
    "accelerator": [(1, 0.004, 0.0), (1, 0.005, 0.0), (1, 0.004, 2.0)],
    "brake": [(1, 0.004, 0.0), (1, 0.005, 0.0), (1, 0.004, 2.0)],
    "clutch": [(1, 0.004, 0.0), (1, 0.005, 0.0)],
}

NOISE_KINDS = ("constant", "counter", "multivalue", "drift", "walk", "checksum")
COUNTER_STEPS = (1, 1, 2, 16)
NOISE_PERIODS_S = (0.01, 0.02, 0.05, 0.1)


def random_layout(
    seed: int,
    id_pool: list[int] | None = None,
    n_noise_ids: int = 15,
    signals: tuple[str, ...] = TARGET_SIGNALS,
    avoid: set[tuple[int, int, int]] | None = None,
) -> tuple[Message, ...]:
    """A random car: target signals spread over a few ids, plus noise-only ids.

    ``avoid`` holds (id, start, width) entries the layout must not reuse.    """
    rng = np.random.default_rng([seed, 2])
    avoid = avoid or set()
    pool = sorted(id_pool) if id_pool is not None else list(range(0x080, 0x700, 0x008))
    n_signal_ids = min(3, len(signals))
    chosen = sorted(int(x) for x in rng.choice(pool, size=n_signal_ids + n_noise_ids, replace=False))
    rng.shuffle(chosen)
    signal_ids, noise_ids = chosen[:n_signal_ids], chosen[n_signal_ids:]

    placements: dict[int, list[Channel]] = {cid: [] for cid in signal_ids}
    order = list(signals)
    rng.shuffle(order)
    for k, name in enumerate(order):
        cid = signal_ids[k % n_signal_ids]
        encs = SIGNAL_ENCODINGS[name]
        width, scale, offset = encs[int(rng.integers(len(encs)))]
        for _ in range(100):
            start = int(rng.integers(0, 8 - width + 1))
            span = set(range(start, start + width))
            taken = {b for ch in placements[cid] for b in ch.bytes}
            if span & taken or (cid, start, width) in avoid:
                continue
            placements[cid].append(Channel(name, cid, start, width, scale, offset))
            break
        else:
            raise RuntimeError(f"could not place {name} in {cid:#x}")

    messages = []
    for cid in signal_ids:
        channels = _fill_noise(rng, cid, 8, placements[cid])
        messages.append(Message(cid, 8, SIGNAL_PERIOD_S, tuple(sorted(channels, key=lambda c: c.start))))
    for cid in noise_ids:
        dlc = int(rng.choice([4, 6, 8, 8, 8]))
        period = float(rng.choice(NOISE_PERIODS_S))
        channels = _fill_noise(rng, cid, dlc, [], dense=True)
        messages.append(Message(cid, dlc, period, tuple(sorted(channels, key=lambda c: c.start))))
    return tuple(sorted(messages, key=lambda m: m.can_id))


def _fill_noise(rng, cid: int, dlc: int, channels: list[Channel], dense: bool = False) -> list[Channel]:
    channels = list(channels)
    taken = {b for ch in channels for b in ch.bytes}
    b = 0
    while b < dlc:
        if b in taken:
            b += 1
            continue
        free_pair = b + 1 < dlc and b + 1 not in taken
        weights = np.array([3, 2, 2, 1, 1, 1] if dense else [5, 1, 1, 1, 0, 1], dtype=float)
        kind = NOISE_KINDS[int(rng.choice(len(NOISE_KINDS), p=weights / weights.sum()))]
        width = 2 if kind == "walk" and free_pair else 1
        if kind == "walk" and not free_pair:
            kind = "drift"
        channels.append(_noise_channel(rng, kind, cid, b, width))
        taken |= set(range(b, b + width))
        b += width
    return channels


def _noise_channel(rng, kind: str, cid: int, start: int, width: int = 1) -> Channel:
    step = int(rng.choice(COUNTER_STEPS)) if kind == "counter" else 1
    return Channel(kind, cid, start, width, value=int(rng.integers(0, 256)), step=step)


# --- encoding -----------------------------------------------------------------


def quantize(values: np.ndarray, ch: Channel) -> np.ndarray:
    raw = np.round(values / ch.scale + ch.offset).astype(np.int64)
    top = (1 << (8 * ch.width)) - 1
    if raw.min(initial=0) < 0 or raw.max(initial=0) > top:
        raise ValueError(f"{ch.kind} overflows its {ch.width}-byte span (range {raw.min()}..{raw.max()})")
    return raw


def _noise_values(ch: Channel, t: np.ndarray, rng) -> np.ndarray:
    n = len(t)
    top = (1 << (8 * ch.width)) - 1
    if ch.kind == "constant":
        return np.full(n, ch.value & top, dtype=np.int64)
    if ch.kind == "counter":
        return (np.arange(n, dtype=np.int64) * ch.step + ch.value) % 256
    if ch.kind == "multivalue":
        levels = rng.choice(256, size=int(rng.integers(2, 5)), replace=False)
        period = float(t[1] - t[0]) if n > 1 else 1.0
        switches = np.cumsum(rng.random(n) < period / 20.0)  # one switch per ~20 s
        return levels[switches % len(levels)].astype(np.int64)
    if ch.kind == "drift":
        base = float(rng.uniform(40, 200))
        x = base + 8.0 * np.sin(t / float(rng.uniform(200, 600)) + float(rng.uniform(0, 6.28)))
        return np.clip(np.round(x), 0, 255).astype(np.int64)
    if ch.kind == "walk":
        # reflected random walk; the step size is per frame, so its texture
        # does not depend on the drive length
        lo, hi = 12000.0, 53000.0
        y = float(rng.uniform(lo, hi)) + np.cumsum(rng.normal(0.0, float(rng.uniform(10, 60)), n))
        span = hi - lo
        y = np.abs(np.mod(y - lo, 2 * span) - span)
        return np.round(hi - y).astype(np.int64)
    if ch.kind == "checksum":
        return rng.integers(0, 256, n).astype(np.int64)
    raise ValueError(f"unknown channel kind {ch.kind!r}")


def encode_log(drive: PhysicalDrive, spec: ScenarioSpec) -> tuple[CanLog, GroundTruth]:
    """Quantise the drive into CAN frames according to ``spec.messages``."""
    rng = np.random.default_rng([spec.seed, 3])
    stamps, ids, payloads = [], [], []
    for msg in spec.messages:
        phase = float(rng.uniform(0, msg.period_s))
        t = np.arange(phase, drive.t[-1] + 1.0 / PHYSICS_HZ, msg.period_s)
        jitter = rng.uniform(0, 2e-4, len(t))
        src = np.minimum(np.round(t * PHYSICS_HZ).astype(np.int64), len(drive.t) - 1)
        payload = np.zeros((len(t), 8), dtype=np.uint8)
        for ch in msg.channels:
            if ch.kind in TARGET_SIGNALS:
                raw = quantize(drive.signal(ch.kind)[src], ch)
            else:
                raw = _noise_values(ch, t, rng)
            if ch.width == 1:
                payload[:, ch.start] = raw
            else:
                hi, lo = raw >> 8, raw & 0xFF
                if ch.little_endian:
                    hi, lo = lo, hi
                payload[:, ch.start] = hi
                payload[:, ch.start + 1] = lo
        stamps.append(np.round(spec.start_time + t + jitter, 6))
        ids.append(np.full(len(t), msg.can_id))
        payloads.append(payload)
    dlcs = [np.full(len(s), m.dlc) for s, m in zip(stamps, spec.messages)]
    log = CanLog(
        np.concatenate(stamps) if stamps else np.empty(0),
        np.concatenate(ids) if ids else np.empty(0),
        np.zeros(sum(len(s) for s in stamps), dtype=bool),
        np.concatenate(dlcs) if dlcs else np.empty(0),
        _mask_dlc(np.concatenate(payloads) if payloads else np.empty((0, 8)), np.concatenate(dlcs) if dlcs else np.empty(0)),
        meta={"seed": spec.seed},
    )
    return log, GroundTruth(spec.layout, drive, spec.start_time)


def _mask_dlc(payload: np.ndarray, dlc: np.ndarray) -> np.ndarray:
    payload = payload.copy()
    payload[np.arange(8)[None, :] >= dlc[:, None]] = 0
    return payload


def gps_track(drive: PhysicalDrive, spec: ScenarioSpec, origin=(47.4979, 19.0402)) -> GpsTrack:
    """1 Hz fixes along a wandering path, with AR(1) position error of std ``gps_noise_m``."""
    rng = np.random.default_rng([spec.seed, 4])
    step = PHYSICS_HZ
    v_ms = drive.velocity / 3.6
    heading = np.cumsum(rng.normal(0.0, 0.002, len(v_ms))) + float(rng.uniform(0, 2 * math.pi))
    north = np.cumsum(v_ms * np.cos(heading)) / PHYSICS_HZ
    east = np.cumsum(v_ms * np.sin(heading)) / PHYSICS_HZ
    idx = np.arange(0, len(v_ms), step)
    north, east = north[idx], east[idx]
    rho = spec.gps_noise_corr
    innov = spec.gps_noise_m * math.sqrt(1 - rho * rho)
    err = np.zeros((len(idx), 2))
    e = rng.normal(0.0, spec.gps_noise_m, 2)
    for k in range(len(idx)):
        err[k] = e
        e = rho * e + rng.normal(0.0, innov, 2)
    north = north + err[:, 0]
    east = east + err[:, 1]
    lat = origin[0] + np.degrees(north / 6371000.0)
    lon = origin[1] + np.degrees(east / (6371000.0 * math.cos(math.radians(origin[0]))))
    t = spec.start_time + drive.t[idx]
    return GpsTrack(t, lat, lon)


def generate(spec: ScenarioSpec) -> DriveBundle:
    drive = simulate_drive(spec)
    log, truth = encode_log(drive, spec)
    return DriveBundle(log, gps_track(drive, spec), truth, spec)


def make_scenario(
    seed: int,
    duration_s: float = 600.0,
    style: DriverStyle | None = None,
    layout_seed: int | None = None,
    id_pool: list[int] | None = None,
    n_noise_ids: int = 15,
    **kwargs,
) -> ScenarioSpec:
    messages = random_layout(seed if layout_seed is None else layout_seed, id_pool, n_noise_ids)
    return ScenarioSpec(
        duration_s=duration_s,
        style=style or DriverStyle(),
        messages=messages,
        seed=seed,
        start_time=EPOCH + 86400.0 * (seed % 1000),
        **kwargs,
    )


def make_car_pair(
    seed: int,
    duration_s: float = 1800.0,
    style: DriverStyle | None = None,
    target_duration_s: float | None = None,
    base_noise_ids: int = 45,
    target_noise_ids: int = 15,
) -> tuple[DriveBundle, DriveBundle]:
    """Base and target car: same driver physics, disjoint layouts.

    The two cars draw ids from disjoint pools and never reuse an
    (id, start, width) entry.
    """
    rng = np.random.default_rng([seed, 5])
    ids = np.arange(0x080, 0x700, 0x004)
    rng.shuffle(ids)
    half = len(ids) // 2
    base_pool, target_pool = sorted(ids[:half].tolist()), sorted(ids[half:].tolist())
    base_msgs = random_layout(seed * 2 + 1, base_pool, base_noise_ids)
    used = {(ch.can_id, ch.start, ch.width) for m in base_msgs for ch in m.channels}
    target_msgs = random_layout(seed * 2 + 2, target_pool, target_noise_ids, avoid=used)
    style = style or DriverStyle()
    base = ScenarioSpec(duration_s, style, base_msgs, seed=seed * 2 + 1, start_time=EPOCH)
    target = ScenarioSpec(target_duration_s or duration_s, style, target_msgs, seed=seed * 2 + 2,
                          start_time=EPOCH + 86400.0)
    return generate(base), generate(target)


def with_style(spec: ScenarioSpec, style: DriverStyle, seed: int) -> ScenarioSpec:
    return replace(spec, style=style, seed=seed, start_time=EPOCH + 86400.0 * (seed % 1000))


def write_bundle(bundle: DriveBundle, out_dir: str | Path, stem: str = "drive") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "log": out / f"{stem}.log",
        "gps": out / f"{stem}_gps.csv",
        "truth": out / f"{stem}_truth.json",
        "scenario": out / f"{stem}_scenario.json",
    }
    bundle.log.write(paths["log"])
    paths["gps"].write_text(bundle.gps.to_csv(), encoding="utf-8")
    manifest = {
        "seed": bundle.spec.seed,
        "duration_s": bundle.spec.duration_s,
        "standing_starts": bundle.truth.physical.standing_starts,
        "signals": bundle.truth.manifest(),
    }
    paths["truth"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["scenario"].write_text(json.dumps(bundle.spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
