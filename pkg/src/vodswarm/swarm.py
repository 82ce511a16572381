"""Swarm simulation: peers, connections, signalling and steady-state churn.

Control messages (have, interested, choke, unchoke, request, playback
position) take effect instantly. Block payloads move through the fluid
:class:`~vodswarm.engine.FlowGraph`. Each downloading connection keeps at
most one block in flight.
"""

from __future__ import annotations

import logging
import random
from collections import Counter
from dataclasses import dataclass, field

from . import piece_policy as pp
from .engine import Engine, EventKind, FlowGraph, SimulationError
from .metrics import PeerLedger
from .model import JB, JF, PAUSE, PLAY, STOP, PolicyKind, Scenario
from .peer_policy import (LEECHER, OPTIMISTIC_TICK, REGULAR_TICK, SEEDER, PeerSelector,
                          RateEstimator, quota_candidates)
from .playback import Session, advance, apply_jump, next_action, sample_dwell

log = logging.getLogger(__name__)

_EPS = 1e-9


@dataclass(frozen=True)
class Message:
    kind: str
    src: int
    dst: int
    detail: object = None


class Link:
    """Directed connection: ``dst`` downloads from ``src``."""

    __slots__ = ("src", "dst", "unchoked", "interested", "lacking", "transfer", "block")

    def __init__(self, src, dst):
        self.src = src
        self.dst = dst
        self.unchoked = False
        self.interested = False
        self.lacking = 0  # pieces src holds that dst lacks
        self.transfer = None
        self.block = None


class Peer:
    __slots__ = ("id", "cls", "role", "bitfield", "session", "selector", "estimator",
                 "uploads", "downloads", "rarity", "window", "join_time", "playback_points",
                 "ledger", "permanent", "tick_event", "play_event", "action_event",
                 "play_mark", "est_mark", "est_acc", "leech_end", "announced")

    def __init__(self, pid, cls, role, bitfield, params, join_time):
        self.id = pid
        self.cls = cls
        self.role = role
        self.bitfield = bitfield
        self.session = None
        self.selector = PeerSelector(params)
        self.estimator = RateEstimator()
        self.uploads: dict[int, Link] = {}
        self.downloads: dict[int, Link] = {}
        self.rarity = [0] * bitfield.piece_count
        self.window = pp.AdwisWindow.initial(params.w_adwis, params.theta, bitfield.piece_count)
        self.join_time = join_time
        self.playback_points: dict[int, int] = {}
        self.ledger = None
        self.permanent = False
        self.tick_event = self.play_event = self.action_event = None
        self.play_mark = join_time
        self.est_mark = join_time
        self.est_acc = 0.0
        self.leech_end = None
        self.announced = 0

    @property
    def playback_piece(self) -> int:
        return self.session.piece if self.session is not None else 0

    def __repr__(self):
        return f"Peer({self.id}, {self.cls.label}, {self.role})"


@dataclass
class RunResult:
    scenario: Scenario
    ledgers: list
    served: int
    violations: Counter = field(default_factory=Counter)
    checks: Counter = field(default_factory=Counter)
    trace: list | None = None
    events: int = 0
    active_at_end: int = 0


class Swarm:
    """One replication of a scenario.

    ``check_invariants`` turns on the (slower) runtime monitors whose
    violation counts end up in :attr:`RunResult.violations`. ``trace`` keeps
    an append-only list of ``(time, kind, peer, detail)`` observations.
    """

    def __init__(self, scenario: Scenario, *, check_invariants=False, trace=False,
                 warmup_s: float = 0.0):
        self.scenario = scenario
        self.media = scenario.media
        self.params = scenario.params
        self.profile = scenario.profile
        self.engine = Engine()
        self.flow = FlowGraph(self.engine)
        seeds = random.Random(scenario.rng_seed)
        self.rng = random.Random(seeds.getrandbits(64))       # protocol decisions
        self.rng_work = random.Random(seeds.getrandbits(64))  # user behaviour
        self.peers: dict[int, Peer] = {}
        self._next_id = 0
        self.ledgers: list[PeerLedger] = []
        self.served = 0
        self.check = check_invariants
        self.violations: Counter = Counter()
        self.checks: Counter = Counter()
        self.trace: list | None = [] if trace else None
        self.warmup_s = warmup_s
        self.piece_count = self.media.piece_count
        self.block_bits = self.media.block_bits
        self.block_bytes = self.media.block_size_bytes
        self.x = self.params.x

    # -- bookkeeping --------------------------------------------------------

    def _record(self, kind, peer, detail=None):
        if self.trace is not None:
            self.trace.append((self.engine.now, kind, peer, detail))

    def _violation(self, name, detail=""):
        self.violations[name] += 1
        log.warning("invariant %s violated at t=%.6f: %s", name, self.engine.now, detail)

    def _touch_slots(self, peer: Peer):
        """Integrate idle upload-slot fraction up to now."""
        now = self.engine.now
        busy = len(self.flow.outgoing[peer.id])
        peer.est_acc += (self.x - busy) / self.x * (now - peer.est_mark)
        peer.est_mark = now

    # -- population ---------------------------------------------------------

    def _new_peer(self, cls, role, complete=False) -> Peer:
        pid = self._next_id
        self._next_id += 1
        bf = pp.Bitfield(self.piece_count, self.media.blocks_per_piece, complete=complete)
        peer = Peer(pid, cls, role, bf, self.params, self.engine.now)
        return peer

    def tracker_join(self, new_peer: Peer) -> list[int]:
        """Random sample of at most ``tracker_list_size`` existing peers."""
        population = sorted(self.peers)
        k = min(self.scenario.tracker_list_size, len(population))
        return self.rng.sample(population, k) if k else []

    def _connect(self, a: Peer, b: Peer):
        for src, dst in ((a, b), (b, a)):
            link = Link(src, dst)
            src_held, dst_held = src.bitfield.held, dst.bitfield.held
            link.lacking = sum(1 for s, d in zip(src_held, dst_held) if s and not d)
            link.interested = link.lacking > 0
            src.uploads[dst.id] = link
            dst.downloads[src.id] = link
            rarity = dst.rarity
            for p, h in enumerate(src_held):
                if h:
                    rarity[p] += 1
            # handshake carries the current playback position
            dst.playback_points[src.id] = src.playback_piece

    def join(self, peer: Peer):
        now = self.engine.now
        invited = self.tracker_join(peer)
        self.peers[peer.id] = peer
        self.flow.add_node(peer.id, peer.cls.up_bps, peer.cls.down_bps)
        cap = self.scenario.max_connections
        for rid in invited:
            remote = self.peers[rid]
            if len(peer.uploads) >= cap:
                break
            if len(remote.uploads) < cap:
                self._connect(peer, remote)
        peer.est_mark = now
        self._record("join", peer.id, peer.cls.label)
        peer.tick_event = self.engine.schedule(now, EventKind.REEVAL_TICK, peer)
        if peer.role == LEECHER:
            peer.ledger = PeerLedger(peer.id, peer.cls.label, peer.cls.down_bps, now)
            s = Session(self.piece_count, self.media.piece_play_duration_s,
                        self.params.theta, now)
            s.play_left = sample_dwell(self.profile, PLAY, self.rng_work)
            peer.session = s
            peer.play_mark = now
            self._settle_playback(peer)

    def depart(self, peer: Peer):
        """Remove ``peer`` and immediately replace it with a fresh leecher."""
        now = self.engine.now
        self._touch_slots(peer)
        eng = self.engine
        for ev in (peer.tick_event, peer.play_event, peer.action_event):
            eng.cancel(ev)
        touched = []
        for rid, link in list(peer.uploads.items()):
            remote = link.dst
            if link.transfer is not None:
                self._abort(link)
            del remote.downloads[peer.id]
            rarity = remote.rarity
            for p, h in enumerate(peer.bitfield.held):
                if h:
                    rarity[p] -= 1
            remote.playback_points.pop(peer.id, None)
            remote.estimator.forget(peer.id)
            touched.append(remote)
        for rid, link in list(peer.downloads.items()):
            remote = link.src
            if link.transfer is not None:
                self._touch_slots(remote)
                self.flow.stop(link.transfer)
                link.transfer = None
            del remote.uploads[peer.id]
            remote.selector.drop(peer.id)
        self.flow.remove_node(peer.id)
        del self.peers[peer.id]
        led = peer.ledger
        if led is not None:
            led.departure = now
            led.leech_end = peer.leech_end if peer.leech_end is not None else now
            led.empty_slot_time = peer.est_acc
            s = peer.session
            led.startup_delay = s.startup_delay
            led.stall_waits = list(s.stall_waits)
            led.interruptions = s.stall_count
            if self.check and led.interruptions != len(led.stall_waits):
                self._violation("ni_tr_count", f"peer {peer.id}")
            if now >= self.warmup_s:
                self.ledgers.append(led)
            self.served += 1
        self._record("depart", peer.id)
        for remote in touched:
            self._fill_idle(remote)
        if not peer.permanent:
            self.churn_replace(peer)

    def churn_replace(self, departed: Peer) -> Peer:
        """A fresh leecher of the departed peer's capacity class."""
        fresh = self._new_peer(departed.cls, LEECHER)
        self.join(fresh)
        return fresh

    # -- transfers ------------------------------------------------------------

    def _abort(self, link: Link):
        """Cancel the block in flight on ``link``; its bytes are lost."""
        self._touch_slots(link.src)
        self.flow.stop(link.transfer)
        p, b = link.block
        link.dst.bitfield.cancel_request(p, b)
        link.transfer = None
        link.block = None

    def _try_request(self, link: Link) -> bool:
        dst = link.dst
        if (link.transfer is not None or not link.unchoked or not link.interested
                or dst.role != LEECHER):
            return False
        choice = pp.next_request(dst.bitfield, dst.window, link.src.bitfield.held,
                                 dst.rarity, self.rng)
        if choice is None:
            return False
        dst.bitfield.mark_requested(*choice)
        self._touch_slots(link.src)
        link.block = choice
        link.transfer = self.flow.start(link.src.id, dst.id, self.block_bits, link)
        return True

    def _fill_idle(self, peer: Peer):
        if peer.role != LEECHER:
            return
        for link in peer.downloads.values():
            if link.transfer is None and link.unchoked and link.interested:
                self._try_request(link)

    def _on_block(self, ev):
        t = ev.subject
        link: Link = t.payload
        src, dst = link.src, link.dst
        self._touch_slots(src)
        delivered = self.flow.complete(t)
        if self.check:
            self.checks["conservation"] += 1
            if abs(delivered - t.bits) > 1e-6 * t.bits:
                self._violation("conservation", f"{delivered} of {t.bits} bits")
        link.transfer = None
        p, b = link.block
        link.block = None
        self.on_block_received(dst, src, p, b)
        if dst.id not in self.peers:
            return  # resumed playback ran into Stop and the peer left
        if link.unchoked and link.interested and dst.role == LEECHER:
            choice = pp.next_request(dst.bitfield, dst.window, src.bitfield.held,
                                     dst.rarity, self.rng)
            if choice is not None:
                dst.bitfield.mark_requested(*choice)
                link.block = choice
                link.transfer = self.flow.restart(t, self.block_bits, link)

    def on_block_received(self, dst: Peer, src: Peer, piece: int, block: int):
        now = self.engine.now
        if dst.bitfield.add_block(piece, block):
            self._piece_completed(dst, piece)
        nbytes = self.block_bytes
        dst.estimator.record_received(src.id, nbytes, now)
        src.estimator.record_sent(dst.id, nbytes, now)
        dst.ledger.bytes_downloaded += nbytes

    def _piece_completed(self, peer: Peer, piece: int):
        self._record("have", peer.id, piece)
        for link in peer.uploads.values():
            remote = link.dst
            remote.rarity[piece] += 1
            if not remote.bitfield.held[piece]:
                link.lacking += 1
                if link.lacking == 1:
                    link.interested = True
                    if link.unchoked:
                        self._try_request(link)
        for link in peer.downloads.values():
            if link.src.bitfield.held[piece]:
                link.lacking -= 1
                if link.lacking == 0:
                    link.interested = False
        pp.update_window(peer.window, peer.bitfield, pp.PIECE_COMPLETED, peer.playback_piece)
        if peer.bitfield.complete:
            peer.role = SEEDER
            peer.leech_end = self.engine.now
            self._record("seeder", peer.id)
        if peer.session is not None:
            s = peer.session
            if (s.stalled and piece == s.piece) or s.buffering:
                self._settle_playback(peer)

    # -- choking ----------------------------------------------------------------

    def _on_tick(self, ev):
        peer: Peer = ev.subject
        now = self.engine.now
        kind = OPTIMISTIC_TICK if peer.selector.ticks % self.params.k == 0 else REGULAR_TICK
        self.on_tick(peer, kind)
        peer.tick_event = self.engine.schedule(now + self.params.delta_s,
                                               EventKind.REEVAL_TICK, peer)

    def on_tick(self, peer: Peer, tick_kind) -> list[Message]:
        now = self.engine.now
        interested = [rid for rid, link in peer.uploads.items() if link.interested]
        interested.sort()
        assignment, chokes, unchokes = peer.selector.on_tick(
            peer.role, interested, peer.estimator, now, self.rng, tick_kind,
            peer.playback_points, peer.playback_piece)
        msgs = []
        for rid in chokes:
            link = peer.uploads[rid]
            link.unchoked = False
            msgs.append(Message("choke", peer.id, rid))
            if link.transfer is not None:
                self._abort(link)
                self._fill_idle(link.dst)
        for rid in unchokes:
            link = peer.uploads[rid]
            link.unchoked = True
            msgs.append(Message("unchoke", peer.id, rid))
            self._try_request(link)
        if self.trace is not None:
            for m in msgs:
                self._record(m.kind, m.src, m.dst)
        if self.check:
            self._check_tick(peer, assignment, interested, tick_kind)
        return msgs

    def _check_tick(self, peer, assignment, interested, tick_kind):
        now = self.engine.now
        self.checks["slot_cap"] += 1
        unchoked = [rid for rid, link in peer.uploads.items() if link.unchoked]
        if len(unchoked) > self.x or len(assignment) > self.x:
            self._violation("slot_cap", f"peer {peer.id} unchokes {len(unchoked)}")
        alive = set(interested)
        if any(r not in alive for r in assignment.unchoked()):
            self._violation("unchoke_uninterested", f"peer {peer.id}")
        for link in peer.uploads.values():
            if link.transfer is not None and not link.unchoked:
                self._violation("request_across_choke", f"{peer.id}->{link.dst.id}")
        if self.params.kind is PolicyKind.QBPS and peer.role == LEECHER:
            quota = assignment.altruistic
            self.checks["quota"] += 1
            if len(quota) > self.params.max_quota:
                self._violation("quota_size", f"peer {peer.id}")
            if tick_kind == OPTIMISTIC_TICK:
                self._check_quota_order(peer, quota, interested, now)

    def _check_quota_order(self, peer, quota, interested, now):
        """Brute-force recheck of quota eligibility and playback ordering."""
        est = peer.estimator
        local = est.download_bps(now)
        eligible = [r for r in interested if est.received_from_bps(r, now) < local]
        if any(r not in eligible for r in quota):
            self._violation("quota_eligibility", f"peer {peer.id}")
        own = peer.playback_piece
        key = {r: (abs(peer.playback_points.get(r, 0) - own), r) for r in eligible}
        if len(quota) != min(self.params.max_quota, len(eligible)):
            self._violation("quota_fill", f"peer {peer.id}")
        chosen = set(quota)
        worst = max((key[r] for r in quota), default=None)
        for r in eligible:
            if r not in chosen and worst is not None and key[r] < worst:
                self._violation("quota_order", f"peer {peer.id}")
                break

    # -- playback ---------------------------------------------------------------

    def announce_playback(self, peer: Peer) -> list[Message]:
        piece = peer.playback_piece
        peer.announced = piece
        msgs = []
        for rid, link in peer.uploads.items():
            link.dst.playback_points[peer.id] = piece
            msgs.append(Message("playback", peer.id, rid, piece))
        return msgs

    def _settle_playback(self, peer: Peer):
        """Re-run the playback step at the current instant (after new data)."""
        s = peer.session
        now = self.engine.now
        obs = advance(s, peer.bitfield.held, 0.0, now)
        self._observe(peer, obs)
        if s.playing and peer.play_event is None:
            peer.play_mark = now
            self._schedule_play(peer)

    def _observe(self, peer, obs):
        for kind, value in obs:
            if kind == "NI":
                pp.update_window(peer.window, peer.bitfield, pp.STALL, peer.playback_piece)
            elif kind == "PIECE":
                pp.update_window(peer.window, peer.bitfield, pp.PLAYBACK_ADVANCED, value)
                self.announce_playback(peer)
            if self.trace is not None:
                self._record(kind.lower(), peer.id, value)

    def _schedule_play(self, peer: Peer):
        s = peer.session
        if s.play_left <= _EPS:
            self._leave_play(peer)
            return
        dt = min(s.play_left, s.time_to_boundary())
        peer.play_event = self.engine.schedule(self.engine.now + dt,
                                               EventKind.PLAYBACK_BOUNDARY, peer)

    def _on_play(self, ev):
        peer: Peer = ev.subject
        peer.play_event = None
        s = peer.session
        now = self.engine.now
        dt = now - peer.play_mark
        peer.play_mark = now
        obs = advance(s, peer.bitfield.held, dt, now)
        if any(kind == "END" for kind, _ in obs):
            self._record("end", peer.id)
            self.depart(peer)
            return
        self._observe(peer, obs)
        if s.playing:
            self._schedule_play(peer)
        elif s.stalled and s.play_left <= _EPS:
            pass  # dwell ran out on the stall; the transition happens on resume

    def _leave_play(self, peer: Peer):
        s = peer.session
        action = next_action(self.profile, PLAY, self.rng_work)
        self._record("action", peer.id, action.name)
        if action.kind == PLAY:
            s.play_left = action.dwell_s
            self._schedule_play(peer)
            return
        if action.kind == STOP:
            s.state = STOP
            self.depart(peer)
            return
        if action.kind in (JB, JF):
            before = s.piece
            if apply_jump(s, action.kind, self.rng_work) == before:
                # nowhere to jump: the action degenerates to Play in place
                s.play_left = sample_dwell(self.profile, PLAY, self.rng_work)
                self._schedule_play(peer)
                return
            pp.update_window(peer.window, peer.bitfield, pp.JUMP, s.piece)
            self.announce_playback(peer)
        s.state = action.kind
        peer.action_event = self.engine.schedule(self.engine.now + action.dwell_s,
                                                 EventKind.INTERACTIVE_ACTION, peer)

    def _on_action(self, ev):
        peer: Peer = ev.subject
        peer.action_event = None
        s = peer.session
        action = next_action(self.profile, s.state, self.rng_work)
        s.state = action.kind
        s.play_left = action.dwell_s
        self._settle_playback(peer)

    # -- run ----------------------------------------------------------------------

    def _after_event(self):
        self.flow.reallocate()
        if self.check:
            self.checks["population"] += 1
            if len(self.peers) != self.scenario.population:
                self._violation("population", f"{len(self.peers)} peers")
            self.checks["caps"] += 1
            problems = self.flow.check_caps()
            if problems:
                self._violation("bandwidth_cap", problems[0])

    def populate(self):
        sc = self.scenario
        for _ in range(sc.n_seeders):
            seeder = self._new_peer(sc.seeder_class, SEEDER, complete=True)
            seeder.permanent = True
            self.join(seeder)
        for cls in sc.leecher_classes():
            self.join(self._new_peer(cls, LEECHER))
        self.flow.reallocate()

    def run(self) -> RunResult:
        self.populate()
        handlers = {
            EventKind.BLOCK_COMPLETE: self._on_block,
            EventKind.REEVAL_TICK: self._on_tick,
            EventKind.PLAYBACK_BOUNDARY: self._on_play,
            EventKind.INTERACTIVE_ACTION: self._on_action,
        }
        self.engine.run(self.scenario.sim_duration_s, handlers, self._after_event)
        return RunResult(self.scenario, self.ledgers, self.served, self.violations,
                         self.checks, self.trace, self.engine.processed, len(self.peers))


def simulate(scenario: Scenario, **kw) -> RunResult:
    """Run one replication of ``scenario``."""
    return Swarm(scenario, **kw).run()
