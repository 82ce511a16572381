"""Domain types and scenario construction.

Sizes are binary (KiB/MiB) and rates are decimal bits per second, which is
the only pairing under which a 20 MB file cut into 256 kB pieces gives a
whole number of pieces.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

KiB = 1024
MiB = 1024 * 1024


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class Provision(str, Enum):
    OP = "op"
    LP = "lp"
    BP = "bp"


class PolicyKind(str, Enum):
    ORIGINAL = "original"
    SBNP = "sbnp"
    QBPS = "qbps"


@dataclass(frozen=True)
class MediaFile:
    content_size_bytes: int = 20 * MiB
    piece_size_bytes: int = 256 * KiB
    block_size_bytes: int = 16 * KiB
    reproduction_rate_bps: float = 240_000.0

    def __post_init__(self):
        media_geometry(self)

    @property
    def piece_count(self) -> int:
        return self.content_size_bytes // self.piece_size_bytes

    @property
    def blocks_per_piece(self) -> int:
        return self.piece_size_bytes // self.block_size_bytes

    @property
    def piece_play_duration_s(self) -> float:
        return self.piece_size_bytes * 8 / self.reproduction_rate_bps

    @property
    def block_bits(self) -> int:
        return self.block_size_bytes * 8


def media_geometry(media: MediaFile) -> tuple[int, int, float]:
    """Return ``(piece_count, blocks_per_piece, piece_play_duration_s)``."""
    o, p, b = media.content_size_bytes, media.piece_size_bytes, media.block_size_bytes
    if o <= 0 or p <= 0 or b <= 0:
        raise ConfigError("media sizes must be positive")
    if o % p:
        raise ConfigError(f"piece size {p} does not divide content size {o}")
    if p % b:
        raise ConfigError(f"block size {b} does not divide piece size {p}")
    if not media.reproduction_rate_bps > 0:
        raise ConfigError("reproduction rate must be positive")
    return o // p, p // b, p * 8 / media.reproduction_rate_bps


@dataclass(frozen=True)
class CapacityClass:
    label: str
    down_bps: float
    up_bps: float

    def __post_init__(self):
        if not (self.down_bps > 0 and self.up_bps > 0):
            raise ConfigError(f"capacity class {self.label!r} needs positive rates")


HIGH = CapacityClass("High", 480_000.0, 480_000.0)
LOW = CapacityClass("Low", 120_000.0, 120_000.0)
REGULAR = CapacityClass("Regular", 240_000.0, 240_000.0)
SEEDER = CapacityClass("Seeder", 240_000.0, 240_000.0)

# Interactive states, indexed like the profile vectors.
PLAY, STOP, PAUSE, JB, JF = range(5)
STATE_NAMES = ("Play", "Stop", "Pause", "JB", "JF")


@dataclass(frozen=True)
class InteractiveProfile:
    """Five-state session model: mean dwell per state, transitions out of Play."""

    label: str
    mean_durations_s: tuple[float, float, float, float, float]
    transition_probs: tuple[float, float, float, float, float]

    def __post_init__(self):
        if len(self.mean_durations_s) != 5 or len(self.transition_probs) != 5:
            raise ConfigError("profiles need five dwell means and five probabilities")
        if any(d < 0 for d in self.mean_durations_s):
            raise ConfigError("dwell means must be non-negative")
        if self.mean_durations_s[STOP] != 0:
            raise ConfigError("Stop must have zero dwell")
        if any(p < 0 for p in self.transition_probs):
            raise ConfigError("transition probabilities must be non-negative")
        if abs(sum(self.transition_probs) - 1.0) > 1e-9:
            raise ConfigError(f"transition probabilities of {self.label} sum to "
                              f"{sum(self.transition_probs)!r}, not 1")


def _profile(label, d_play, p_play, p_stop, p_pause, p_jb):
    # Play->JF is the only transition left unlisted; it takes the remainder.
    p_jf = round(1.0 - (p_play + p_stop + p_pause + p_jb), 12)
    return InteractiveProfile(label, (d_play, 0.0, 1.0, 0.75, 0.75),
                              (p_play, p_stop, p_pause, p_jb, p_jf))


PROFILES = {
    "hi": _profile("HI", 1.20, 0.35, 0.05, 0.20, 0.20),
    "mi": _profile("MI", 1.70, 0.60, 0.04, 0.12, 0.12),
    "li": _profile("LI", 2.20, 0.85, 0.02, 0.04, 0.04),
}


@dataclass(frozen=True)
class PolicyParams:
    """Upload-slot layout and timers of one peer-selection policy.

    ``x_2`` is the altruistic share: the optimistic slot count for Original
    and SBNP, and the quota ceiling (MAX_QUOTA) for QBPS, whose actual quota
    usage floats between 0 and ``max_quota`` with ``x_1 = x - x_2``.
    """

    kind: PolicyKind
    x: int = 4
    x_1: int = 3
    x_2: int = 1
    max_quota: int = 0
    k: int = 3
    delta_s: float = 10.0
    w_adwis: int = 7
    theta: int = 3

    def __post_init__(self):
        if self.x < 1 or self.x_1 < 0 or self.x_2 < 0 or self.x_1 + self.x_2 != self.x:
            raise ConfigError(f"bad slot layout x={self.x} x_1={self.x_1} x_2={self.x_2}")
        if self.kind is PolicyKind.QBPS and self.x_2 > self.max_quota:
            raise ConfigError("QBPS quota slots exceed MAX_QUOTA")
        if not self.delta_s > 0 or self.k < 1 or self.w_adwis < 1 or self.theta < 1:
            raise ConfigError("delta > 0, k >= 1, window >= 1 and theta >= 1 required")

    @property
    def optimistic_period_s(self) -> float:
        return self.k * self.delta_s


def policy_params(kind: PolicyKind | str, *, x: int = 4, max_quota: int = 2, k: int = 3,
                  delta_s: float = 10.0, w_adwis: int = 7, theta: int = 3) -> PolicyParams:
    """Default slot layout for a policy kind, with overrides."""
    kind = PolicyKind(kind)
    if kind is PolicyKind.ORIGINAL:
        x_1, x_2, mq = x - 1, 1, 0
    elif kind is PolicyKind.SBNP:
        x_1 = x // 2
        x_2, mq = x - x_1, 0
    else:
        if not 0 <= max_quota <= x:
            raise ConfigError(f"MAX_QUOTA must lie in [0, {x}]")
        x_1, x_2, mq = x - max_quota, max_quota, max_quota
    return PolicyParams(kind, x, x_1, x_2, mq, k, delta_s, w_adwis, theta)


PROVISION_TARGET = {Provision.OP: 1.25, Provision.LP: 0.8, Provision.BP: 1.0}


def class_mix(provision: Provision | str, m: int) -> list[tuple[CapacityClass, int]]:
    provision = Provision(provision)
    if provision is Provision.OP:
        n_high = math.ceil(m / 2)
        return [(HIGH, n_high), (LOW, m - n_high)]
    if provision is Provision.LP:
        n_high = round(0.2 * m)
        return [(HIGH, n_high), (LOW, m - n_high)]
    return [(REGULAR, m)]


@dataclass(frozen=True)
class Scenario:
    media: MediaFile
    n_seeders: int
    m_leechers: int
    provision: Provision
    classes: tuple[tuple[CapacityClass, int], ...]
    profile: InteractiveProfile
    params: PolicyParams
    sim_duration_s: float
    rng_seed: int
    seeder_class: CapacityClass = SEEDER
    max_connections: int = 80
    tracker_list_size: int = 40

    def __post_init__(self):
        if sum(c for _, c in self.classes) != self.m_leechers:
            raise ConfigError("class counts must sum to the leecher count")
        if self.n_seeders < 0 or self.m_leechers < 0:
            raise ConfigError("population sizes must be non-negative")

    @property
    def population(self) -> int:
        return self.n_seeders + self.m_leechers

    def leecher_classes(self) -> list[CapacityClass]:
        """One class per leecher slot, in a fixed order."""
        return [cls for cls, count in self.classes for _ in range(count)]

    def mean_capacity_ratio(self) -> float:
        if not self.m_leechers:
            return 0.0
        total = sum(cls.up_bps * c for cls, c in self.classes)
        return total / self.m_leechers / self.media.reproduction_rate_bps


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat run configuration; field names mirror the config-file keys."""

    content_size: int = 20 * MiB
    piece_size: int = 256 * KiB
    block_size: int = 16 * KiB
    rate: float = 240_000.0
    seeders: int = 1
    leechers: int = 20
    provision: str = "lp"
    profile: str = "hi"
    kind: str = "qbps"
    max_quota: int = 2
    x: int = 4
    k: int = 3
    delta: float = 10.0
    window: int = 7
    theta: int = 3
    duration: float = 7200.0
    seed: int = 1
    replications: int = 30

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Validate a config and instantiate the class mix."""
    try:
        provision = Provision(config.provision.lower())
    except ValueError:
        raise ConfigError(f"unknown provision {config.provision!r}") from None
    profile = PROFILES.get(config.profile.lower())
    if profile is None:
        raise ConfigError(f"unknown profile {config.profile!r}")
    try:
        kind = PolicyKind(config.kind.lower())
    except ValueError:
        raise ConfigError(f"unknown policy {config.kind!r}") from None
    media = MediaFile(config.content_size, config.piece_size, config.block_size, config.rate)
    params = policy_params(kind, x=config.x, max_quota=config.max_quota, k=config.k,
                           delta_s=config.delta, w_adwis=config.window, theta=config.theta)
    if not config.duration > 0:
        raise ConfigError("run duration must be positive")
    return Scenario(
        media=media,
        n_seeders=config.seeders,
        m_leechers=config.leechers,
        provision=provision,
        classes=tuple(class_mix(provision, config.leechers)),
        profile=profile,
        params=params,
        sim_duration_s=float(config.duration),
        rng_seed=int(config.seed),
    )


# -- config file ----------------------------------------------------------

CONFIG_KEYS = {
    "media.content_size": "content_size",
    "media.piece_size": "piece_size",
    "media.block_size": "block_size",
    "media.rate": "rate",
    "swarm.seeders": "seeders",
    "swarm.leechers": "leechers",
    "swarm.provision": "provision",
    "workload.profile": "profile",
    "policy.kind": "kind",
    "policy.max_quota": "max_quota",
    "policy.x": "x",
    "policy.k": "k",
    "policy.delta": "delta",
    "adwis.window": "window",
    "adwis.theta": "theta",
    "run.duration": "duration",
    "run.seed": "seed",
    "run.replications": "replications",
}

_UNITS = {
    "": 1, "b": 1, "kib": KiB, "mib": MiB, "kb": KiB, "mb": MiB,
    "bps": 1, "kbps": 1000, "mbps": 1_000_000, "s": 1,
}
_QUANTITY = re.compile(r"^([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]*)$")


def _parse_value(key: str, raw: str, kind: type):
    if kind is str:
        return raw
    m = _QUANTITY.match(raw)
    if not m or m.group(2).lower() not in _UNITS:
        raise ConfigError(f"{key}: malformed value {raw!r}")
    value = float(m.group(1)) * _UNITS[m.group(2).lower()]
    if kind is int:
        if value != int(value):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(value)
    return value


def parse_config_entries(text: str) -> dict:
    """``{field_name: value}`` for every key set in a ``key = value`` text.

    ``#`` starts a comment. Sizes accept KiB/MiB suffixes (``kB``/``MB`` are
    read as binary units); rates accept bps/kbps/Mbps.
    """
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    pytypes = {"int": int, "float": float, "str": str}
    seen: dict[str, str] = {}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen and seen[key] != raw:
            raise ConfigError(f"line {lineno}: conflicting values for {key!r}")
        seen[key] = raw
        name = CONFIG_KEYS[key]
        updates[name] = _parse_value(key, raw, pytypes[types[name]])
    return updates


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse a config text over ``base`` defaults."""
    return replace(base or ScenarioConfig(), **parse_config_entries(text))


def load_config(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(), base)
