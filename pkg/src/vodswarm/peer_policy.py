"""Unchoke policies: original BitTorrent, SBNP and quota-based (QBPS).

Every policy hands out at most ``x`` upload slots, and only to remotes
interested in the local peer. Regular slots reward the remotes with the best
recent rates. The other slots differ by policy: optimistic (random) slots for
Original and SBNP, quota slots for QBPS.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .model import PolicyKind, PolicyParams

LEECHER, SEEDER = "leecher", "seeder"
REGULAR_TICK, OPTIMISTIC_TICK = "regular", "optimistic"

NEVER = float("-inf")


class RateEstimator:
    """Rolling byte counters per remote over a fixed horizon (20 s)."""

    __slots__ = ("horizon", "_received", "_sent", "_down", "_down_total",
                 "_received_total", "_sent_total")

    def __init__(self, horizon: float = 20.0):
        self.horizon = horizon
        self._received: dict = {}
        self._sent: dict = {}
        self._received_total: dict = {}
        self._sent_total: dict = {}
        self._down: deque = deque()
        self._down_total = 0

    def record_received(self, remote, nbytes: int, t: float):
        q = self._received.get(remote)
        if q is None:
            q = self._received[remote] = deque()
            self._received_total[remote] = 0
        q.append((t, nbytes))
        self._received_total[remote] += nbytes
        self._down.append((t, nbytes))
        self._down_total += nbytes

    def record_sent(self, remote, nbytes: int, t: float):
        q = self._sent.get(remote)
        if q is None:
            q = self._sent[remote] = deque()
            self._sent_total[remote] = 0
        q.append((t, nbytes))
        self._sent_total[remote] += nbytes

    def _window_sum(self, queues, totals, remote, now):
        q = queues.get(remote)
        if not q:
            return 0
        cutoff = now - self.horizon
        total = totals[remote]
        while q and q[0][0] < cutoff:
            total -= q.popleft()[1]
        totals[remote] = total
        return total

    def received_from_bps(self, remote, now: float) -> float:
        return self._window_sum(self._received, self._received_total, remote, now) * 8 / self.horizon

    def sent_to_bps(self, remote, now: float) -> float:
        return self._window_sum(self._sent, self._sent_total, remote, now) * 8 / self.horizon

    def download_bps(self, now: float) -> float:
        cutoff = now - self.horizon
        q = self._down
        while q and q[0][0] < cutoff:
            self._down_total -= q.popleft()[1]
        return self._down_total * 8 / self.horizon

    def forget(self, remote):
        for d in (self._received, self._sent, self._received_total, self._sent_total):
            d.pop(remote, None)


def estimate_rates(estimator: RateEstimator, remotes, now: float) -> dict:
    """``{remote: (received_from_bps, sent_to_bps)}``; unseen remotes report 0."""
    return {r: (estimator.received_from_bps(r, now), estimator.sent_to_bps(r, now))
            for r in remotes}


@dataclass
class SlotAssignment:
    regular: list = field(default_factory=list)
    altruistic: list = field(default_factory=list)
    role: str = LEECHER

    def unchoked(self) -> list:
        return self.regular + self.altruistic

    def __len__(self):
        return len(self.regular) + len(self.altruistic)


def _top_by_rate(candidates, rate_of, n, rng):
    """``n`` highest-rate candidates; equal rates are ordered at random."""
    if n <= 0 or not candidates:
        return []
    keyed = sorted((-rate_of(c), rng.random(), c) for c in candidates)
    return [c for _, _, c in keyed[:n]]


def _random_fill(pool_first, pool_rest, n, rng):
    """Draw ``n`` distinct remotes uniformly, exhausting ``pool_first`` first."""
    chosen = []
    for pool in (list(pool_first), list(pool_rest)):
        while pool and len(chosen) < n:
            chosen.append(pool.pop(rng.randrange(len(pool))))
    return chosen


def _rotate_optimistic(interested, regular, current, n, tick_kind, rng):
    """Keep or redraw ``n`` optimistic slots.

    On optimistic ticks every slot is redrawn, preferring remotes not already
    unchoked. On regular ticks surviving occupants stay and only vacancies
    are filled.
    """
    reg = set(regular)
    free = [r for r in interested if r not in reg]
    if tick_kind == OPTIMISTIC_TICK:
        busy = set(current.unchoked())
        return _random_fill([r for r in free if r not in busy],
                            [r for r in free if r in busy], n, rng)
    alive = set(interested)
    keep = [r for r in current.altruistic if r in alive and r not in reg][:n]
    kept = set(keep)
    return keep + _random_fill([r for r in free if r not in kept], [], n - len(keep), rng)


def original_unchoke(role, interested, estimator, tick_kind, now, rng,
                     params: PolicyParams, current: SlotAssignment | None = None) -> SlotAssignment:
    """Tit-for-tat regular slots plus one rotating optimistic slot.

    Leechers rank remotes by the rate received from them, seeders by the rate
    sent to them.
    """
    current = current or SlotAssignment(role=role)
    n_reg = params.x - 1
    if role == SEEDER:
        rate_of = lambda r: estimator.sent_to_bps(r, now)
    else:
        rate_of = lambda r: estimator.received_from_bps(r, now)
    regular = _top_by_rate(interested, rate_of, n_reg, rng)
    if role != current.role:
        current = SlotAssignment(role=role)
    opt = _rotate_optimistic(interested, regular, current, 1, tick_kind, rng)
    return SlotAssignment(regular, opt, role)


def sbnp_unchoke(role, interested, estimator, last_unchoke_times, tick_kind, now, rng,
                 params: PolicyParams, current: SlotAssignment | None = None) -> SlotAssignment:
    """Balanced split between regular and optimistic slots.

    Seeders ignore rates and keep serving whoever they unchoked most
    recently; remotes never unchoked rank last.
    """
    current = current or SlotAssignment(role=role)
    if role == SEEDER:
        keyed = sorted((-last_unchoke_times.get(r, NEVER), rng.random(), r) for r in interested)
        chosen = [r for _, _, r in keyed[:params.x]]
        return SlotAssignment(chosen, [], role)
    if role != current.role:
        current = SlotAssignment(role=role)
    regular = _top_by_rate(interested, lambda r: estimator.received_from_bps(r, now),
                           params.x_1, rng)
    opt = _rotate_optimistic(interested, regular, current, params.x - params.x_1, tick_kind, rng)
    return SlotAssignment(regular, opt, role)


def quota_candidates(interested, estimator, now):
    """Interested remotes that have been delivering slower than we download."""
    local = estimator.download_bps(now)
    return [r for r in interested if estimator.received_from_bps(r, now) < local]


def rank_by_playback(candidates, playback_points, own_piece):
    """Candidates ordered by playback distance from ours, then by peer id."""
    return sorted(candidates, key=lambda r: (abs(playback_points.get(r, 0) - own_piece), r))


def qbps_unchoke(role, interested, estimator, playback_points, own_piece, tick_kind, now, rng,
                 params: PolicyParams, current: SlotAssignment | None = None) -> SlotAssignment:
    """Quota slots for slower remotes near our playback point, rest tit-for-tat.

    Quota slots are only re-chosen on optimistic (k*delta) ticks; between
    them, occupants that are still interested keep their slot. Seeders behave
    exactly like original BitTorrent seeders.
    """
    if role == SEEDER:
        return original_unchoke(role, interested, estimator, tick_kind, now, rng, params,
                                current)
    current = current or SlotAssignment(role=role)
    if tick_kind == OPTIMISTIC_TICK or current.role != role:
        ranked = rank_by_playback(quota_candidates(interested, estimator, now),
                                  playback_points, own_piece)
        quota = ranked[:params.max_quota]
    else:
        alive = set(interested)
        quota = [r for r in current.altruistic if r in alive]
    taken = set(quota)
    regular = _top_by_rate([r for r in interested if r not in taken],
                           lambda r: estimator.received_from_bps(r, now),
                           params.x - len(quota), rng)
    return SlotAssignment(regular, quota, role)


def diff_assignment(old: SlotAssignment, new: SlotAssignment):
    """``(chokes, unchokes)`` turning ``old`` into ``new``; slot moves are silent."""
    before, after = set(old.unchoked()), set(new.unchoked())
    return sorted(before - after), sorted(after - before)


class PeerSelector:
    """Per-peer policy state: current slots, tick counter, unchoke history."""

    def __init__(self, params: PolicyParams):
        self.params = params
        self.current = SlotAssignment()
        self.last_unchoke: dict = {}
        self.ticks = 0

    def select(self, role, interested, estimator, now, rng, tick_kind,
               playback_points=None, own_piece=0) -> SlotAssignment:
        kind = self.params.kind
        if kind is PolicyKind.ORIGINAL:
            new = original_unchoke(role, interested, estimator, tick_kind, now, rng,
                                   self.params, self.current)
        elif kind is PolicyKind.SBNP:
            new = sbnp_unchoke(role, interested, estimator, self.last_unchoke, tick_kind, now,
                               rng, self.params, self.current)
        else:
            new = qbps_unchoke(role, interested, estimator, playback_points or {}, own_piece,
                               tick_kind, now, rng, self.params, self.current)
        return new

    def on_tick(self, role, interested, estimator, now, rng, tick_kind,
                playback_points=None, own_piece=0):
        """Re-evaluate slots; returns ``(assignment, chokes, unchokes)``."""
        new = self.select(role, interested, estimator, now, rng, tick_kind,
                          playback_points, own_piece)
        chokes, unchokes = diff_assignment(self.current, new)
        for r in new.unchoked():
            self.last_unchoke[r] = now
        self.current = new
        self.ticks += 1
        return new, chokes, unchokes

    def drop(self, remote):
        """Forget a departed remote."""
        self.current.regular = [r for r in self.current.regular if r != remote]
        self.current.altruistic = [r for r in self.current.altruistic if r != remote]
        self.last_unchoke.pop(remote, None)
