"""Discrete-event core and fluid bandwidth model.

Block transfers progress at piecewise-constant rates. Rates follow a two
stage rule: every sender splits its upload capacity equally among its busy
upload slots, then every receiver whose offered inflow exceeds its download
capacity scales all inflows down proportionally. Capacity freed by the
second stage is not handed back to senders.
"""

from __future__ import annotations

import heapq
import itertools
from enum import IntEnum


class SimulationError(RuntimeError):
    """Logic error raised while processing an event."""

    def __init__(self, message, event=None):
        super().__init__(message if event is None else f"{message} [at {event!r}]")
        self.event = event


class EventKind(IntEnum):
    BLOCK_COMPLETE = 0
    REEVAL_TICK = 1
    OPTIMISTIC_TICK = 2
    INTERACTIVE_ACTION = 3
    PLAYBACK_BOUNDARY = 4
    ARRIVAL = 5
    DEPARTURE = 6


class Event:
    __slots__ = ("time", "seq", "kind", "subject", "cancelled")

    def __init__(self, time, seq, kind, subject):
        self.time = time
        self.seq = seq
        self.kind = kind
        self.subject = subject
        self.cancelled = False

    def __repr__(self):
        kind = EventKind(self.kind).name if self.kind in EventKind._value2member_map_ else self.kind
        return f"Event(t={self.time:.6f}, seq={self.seq}, kind={kind}, subject={self.subject!r})"


class Engine:
    """Clock plus a (time, sequence)-ordered queue of cancelable events."""

    def __init__(self):
        self.now = 0.0
        self._queue: list = []
        self._seq = itertools.count()
        self.processed = 0

    def schedule(self, time: float, kind: int, subject=None) -> Event:
        if time < self.now:
            raise SimulationError(f"event scheduled in the past: {time} < {self.now}")
        ev = Event(time, next(self._seq), kind, subject)
        heapq.heappush(self._queue, (time, ev.seq, ev))
        return ev

    def cancel(self, ev: Event | None):
        if ev is not None:
            ev.cancelled = True

    def __len__(self):
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def pop(self) -> Event | None:
        """Next live event, or None when the queue is drained."""
        queue = self._queue
        while queue:
            ev = heapq.heappop(queue)[2]
            if not ev.cancelled:
                return ev
        return None

    def peek_time(self) -> float | None:
        queue = self._queue
        while queue and queue[0][2].cancelled:
            heapq.heappop(queue)
        return queue[0][0] if queue else None

    def run(self, until: float, handlers, after_event=None):
        """Dispatch events in order until the clock would pass ``until``.

        ``handlers`` maps event kinds to callables taking the event.
        ``after_event`` runs after every handler (rate reallocation hook).
        Errors raised by handlers are re-raised with the event attached.
        """
        queue = self._queue
        pop = heapq.heappop
        while queue:
            time, _, ev = queue[0]
            if ev.cancelled:
                pop(queue)
                continue
            if time > until:
                break
            pop(queue)
            self.now = time
            try:
                handlers[ev.kind](ev)
                if after_event is not None:
                    after_event()
            except SimulationError as exc:
                if exc.event is None:
                    raise SimulationError(str(exc), ev) from exc
                raise
            except Exception as exc:
                raise SimulationError(f"{type(exc).__name__}: {exc}", ev) from exc
            self.processed += 1
        self.now = max(self.now, until)


# -- fluid transfers ---------------------------------------------------------

class Transfer:
    """One block in flight from ``sender`` to ``receiver``."""

    __slots__ = ("sender", "receiver", "bits", "remaining", "rate", "t_last",
                 "delivered", "event", "payload")

    def __init__(self, sender, receiver, bits, payload=None):
        self.sender = sender
        self.receiver = receiver
        self.bits = bits
        self.remaining = float(bits)
        self.rate = 0.0
        self.t_last = 0.0
        self.delivered = 0.0
        self.event = None
        self.payload = payload

    def __repr__(self):
        return f"Transfer({self.sender}->{self.receiver}, {self.remaining:.1f}/{self.bits} bits @ {self.rate:.1f} bps)"


def allocate_rates(transfers, up_bps, down_bps):
    """Two-stage rate assignment for ``transfers`` (sender, receiver) pairs.

    Returns a list of rates aligned with ``transfers``. Pure function used as
    the reference the incremental :class:`FlowGraph` must agree with.
    """
    busy: dict = {}
    for s, _ in transfers:
        busy[s] = busy.get(s, 0) + 1
    offered = [up_bps[s] / busy[s] for s, _ in transfers]
    inflow: dict = {}
    for (_, r), o in zip(transfers, offered):
        inflow[r] = inflow.get(r, 0.0) + o
    rates = []
    for (_, r), o in zip(transfers, offered):
        total = inflow[r]
        rates.append(o * down_bps[r] / total if total > down_bps[r] else o)
    return rates


class FlowGraph:
    """Active transfers plus per-node caps, with incremental reallocation.

    Only senders whose busy-slot count changed and receivers whose inflow set
    changed are revisited; a transfer's rate depends on nothing else, so the
    result equals a full :func:`allocate_rates` pass.
    """

    def __init__(self, engine: Engine, complete_kind=EventKind.BLOCK_COMPLETE):
        self.engine = engine
        self.complete_kind = complete_kind
        self.up: dict = {}
        self.down: dict = {}
        self.outgoing: dict = {}
        self.incoming: dict = {}
        self._dirty_senders: set = set()
        self._dirty_receivers: set = set()
        self._released: dict = {}
        self.reallocations = 0

    def add_node(self, node, up_bps, down_bps):
        self.up[node] = float(up_bps)
        self.down[node] = float(down_bps)
        # insertion-ordered dicts used as sets: iteration order must not
        # depend on object addresses, or float sums lose determinism
        self.outgoing[node] = {}
        self.incoming[node] = {}

    def remove_node(self, node):
        if self.outgoing[node] or self.incoming[node]:
            raise SimulationError(f"node {node} removed with transfers in flight")
        del self.up[node], self.down[node], self.outgoing[node], self.incoming[node]
        self._dirty_senders.discard(node)
        self._dirty_receivers.discard(node)
        self._released = {t: None for t in self._released
                          if t.sender != node and t.receiver != node}

    def busy(self, node) -> int:
        return len(self.outgoing[node])

    def transfers(self):
        for out in self.outgoing.values():
            yield from out

    def start(self, sender, receiver, bits, payload=None) -> Transfer:
        t = Transfer(sender, receiver, bits, payload)
        t.t_last = self.engine.now
        self.outgoing[sender][t] = None
        self.incoming[receiver][t] = None
        self._dirty_senders.add(sender)
        self._dirty_receivers.add(receiver)
        return t

    def restart(self, t: Transfer, bits, payload=None) -> Transfer:
        """Reuse a just-completed transfer's slot for the next block.

        Busy counts and inflow sets are unchanged, so the rate carries over
        and nothing needs reallocating.
        """
        now = self.engine.now
        self._released.pop(t, None)
        t.bits = bits
        t.remaining = float(bits)
        t.delivered = 0.0
        t.t_last = now
        t.payload = payload
        self.outgoing[t.sender][t] = None
        self.incoming[t.receiver][t] = None
        if t.rate > 0:
            t.event = self.engine.schedule(now + t.remaining / t.rate, self.complete_kind, t)
        return t

    def _detach(self, t: Transfer):
        self.outgoing[t.sender].pop(t, None)
        self.incoming[t.receiver].pop(t, None)

    def stop(self, t: Transfer):
        """Abort a transfer; its partial progress is discarded."""
        self.engine.cancel(t.event)
        t.event = None
        self._detach(t)
        self._dirty_senders.add(t.sender)
        self._dirty_receivers.add(t.receiver)

    def complete(self, t: Transfer) -> float:
        """Detach a finished transfer and return the bits it delivered.

        The slot only counts as changed if no :meth:`restart` follows before
        the next reallocation.
        """
        now = self.engine.now
        t.delivered += t.rate * (now - t.t_last)
        t.remaining = 0.0
        t.t_last = now
        t.event = None
        self._detach(t)
        self._released[t] = None
        return t.delivered

    def reallocate(self):
        if self._released:
            for t in self._released:
                self._dirty_senders.add(t.sender)
                self._dirty_receivers.add(t.receiver)
            self._released = {}
        if not self._dirty_senders and not self._dirty_receivers:
            return
        self.reallocations += 1
        receivers = self._dirty_receivers
        outgoing = self.outgoing
        for s in self._dirty_senders:
            for t in outgoing.get(s, ()):
                receivers.add(t.receiver)
        self._dirty_senders = set()
        self._dirty_receivers = set()
        up, down, incoming = self.up, self.down, self.incoming
        engine = self.engine
        now = engine.now
        kind = self.complete_kind
        for r in sorted(receivers):
            inflows = incoming.get(r)
            if not inflows:
                continue
            offers = [(t, up[t.sender] / len(outgoing[t.sender])) for t in inflows]
            total = 0.0
            for _, o in offers:
                total += o
            cap = down[r]
            scale = cap / total if total > cap else 1.0
            for t, o in offers:
                rate = o * scale if scale != 1.0 else o
                if rate == t.rate and t.event is not None:
                    continue
                if t.rate > 0:
                    done = t.rate * (now - t.t_last)
                    t.delivered += done
                    t.remaining -= done
                    if t.remaining < 0:
                        t.remaining = 0.0
                t.t_last = now
                t.rate = rate
                engine.cancel(t.event)
                t.event = engine.schedule(now + t.remaining / rate, kind, t)

    def check_caps(self, rel_tol=1e-6) -> list[str]:
        """Cap violations in the current assignment (empty when all respected)."""
        problems = []
        for node, out in self.outgoing.items():
            total = sum(t.rate for t in out)
            if total > self.up[node] * (1 + rel_tol):
                problems.append(f"node {node} outflow {total} > up {self.up[node]}")
        for node, inc in self.incoming.items():
            total = sum(t.rate for t in inc)
            if total > self.down[node] * (1 + rel_tol):
                problems.append(f"node {node} inflow {total} > down {self.down[node]}")
            if any(t.rate < 0 for t in inc):
                problems.append(f"node {node} has a negative rate")
        return problems
