"""Interactive viewing sessions.

A session starts in Play, buffering until ``theta`` contiguous pieces from
the playback point are held. While playing, media time advances one
second per second. Reaching a piece that is not held stalls playback until
that piece arrives. From Play the user moves to Play/Stop/Pause/JB/JF with
the profile's probabilities; Pause and the jump states always return to
Play. The Play dwell timer only runs while media actually plays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import JB, JF, PAUSE, PLAY, STATE_NAMES, STOP, InteractiveProfile

_EPS = 1e-9


@dataclass(frozen=True)
class InteractiveAction:
    kind: int
    dwell_s: float

    @property
    def name(self) -> str:
        return STATE_NAMES[self.kind]


def sample_dwell(profile: InteractiveProfile, kind: int, rng) -> float:
    mean = profile.mean_durations_s[kind]
    return rng.expovariate(1.0 / mean) if mean > 0 else 0.0


def next_action(profile: InteractiveProfile, state: int, rng) -> InteractiveAction:
    """Draw the next interactive state and its dwell time."""
    if state == STOP:
        raise ValueError("a stopped session has no next action")
    if state == PLAY:
        u = rng.random()
        acc = 0.0
        kind = JF
        for i, p in enumerate(profile.transition_probs):
            acc += p
            if u < acc:
                kind = i
                break
    else:
        kind = PLAY
    return InteractiveAction(kind, sample_dwell(profile, kind, rng))


def jump_target(kind: int, piece: int, piece_count: int, rng) -> int:
    """Uniform target after ``piece`` (JF) or before it (JB); stays put if none."""
    if kind == JF:
        lo, hi = piece + 1, piece_count - 1
    elif kind == JB:
        lo, hi = 0, piece - 1
    else:
        raise ValueError("jump_target needs JF or JB")
    if lo > hi:
        return piece
    return lo + rng.randrange(hi - lo + 1)


@dataclass
class Session:
    """Playback state of one viewer."""

    piece_count: int
    piece_duration: float
    theta: int
    join_time: float
    state: int = PLAY
    piece: int = 0
    offset: float = 0.0
    play_left: float = 0.0
    startup_complete: bool = False
    buffering: bool = True
    stalled: bool = False
    wait_since: float = 0.0
    startup_delay: float | None = None
    stall_waits: list = field(default_factory=list)
    stall_count: int = 0

    @property
    def playing(self) -> bool:
        return self.state == PLAY and not self.buffering and not self.stalled

    def ready(self, held) -> bool:
        """The ``theta`` pieces from the playback point (or up to the end) are held."""
        end = min(self.piece + self.theta, self.piece_count)
        for p in range(self.piece, end):
            if not held[p]:
                return False
        return True

    def time_to_boundary(self) -> float:
        return self.piece_duration - self.offset


def apply_jump(session: Session, kind: int, rng) -> int:
    """Move the playback point for a JF/JB action; playback rebuffers there.

    With nowhere to jump to the session is left untouched.
    """
    target = jump_target(kind, session.piece, session.piece_count, rng)
    if target == session.piece:
        return target
    session.piece = target
    session.offset = 0.0
    session.stalled = False
    session.buffering = True
    return target


def advance(session: Session, held, dt: float, now: float) -> list:
    """Play ``dt`` seconds (never across a piece boundary) and settle waits.

    Returns observations: ``("SD", delay)`` when startup completes,
    ``("TR", wait)`` when a stall ends, ``("NI", piece)`` when playback hits
    a missing piece, ``("PIECE", piece)`` when the playback piece changes and
    ``("END", None)`` when the media runs out.
    """
    obs = []
    if session.stalled and held[session.piece]:
        session.stalled = False
        wait = now - session.wait_since
        session.stall_waits.append(wait)
        obs.append(("TR", wait))
    if session.buffering and session.state == PLAY and session.ready(held):
        session.buffering = False
        if not session.startup_complete:
            session.startup_complete = True
            session.startup_delay = now - session.join_time
            obs.append(("SD", session.startup_delay))
    if dt <= 0 or not session.playing:
        return obs
    session.offset += dt
    session.play_left -= dt
    if session.play_left < _EPS:
        session.play_left = 0.0
    if session.offset >= session.piece_duration - _EPS:
        session.piece += 1
        session.offset = 0.0
        if session.piece >= session.piece_count:
            session.piece = session.piece_count - 1
            obs.append(("END", None))
            return obs
        obs.append(("PIECE", session.piece))
        if not held[session.piece]:
            session.stalled = True
            session.wait_since = now
            session.stall_count += 1
            obs.append(("NI", session.piece))
    return obs
