"""Block selection: rarest-first with an adaptive playback-window overlay.

Request priority toward one remote peer:

1. missing blocks of pieces already started locally, lowest piece first;
2. fresh pieces inside the playback window, rarest first, then by index;
3. fresh pieces outside the window, rarest first, random among ties.

Within a piece the lowest free block index is taken.
"""

from __future__ import annotations

from dataclasses import dataclass

# Piece-level states reported by Bitfield.state().
MISSING, PARTIAL, HELD = 0, 1, 2


class Bitfield:
    """Per-piece block masks of one peer, plus blocks requested but not yet in.

    ``held`` is a bytearray of piece flags so remote peers can index it
    directly; ``blocks`` and ``inflight`` are per-piece integer bit masks.
    """

    __slots__ = ("piece_count", "blocks_per_piece", "full_mask", "held", "blocks",
                 "inflight", "started", "held_count")

    def __init__(self, piece_count: int, blocks_per_piece: int, complete: bool = False):
        self.piece_count = piece_count
        self.blocks_per_piece = blocks_per_piece
        self.full_mask = (1 << blocks_per_piece) - 1
        self.held = bytearray([1 if complete else 0] * piece_count)
        self.blocks = [self.full_mask if complete else 0] * piece_count
        self.inflight = [0] * piece_count
        # pieces with a block held or requested but not yet Held
        self.started: set[int] = set()
        self.held_count = piece_count if complete else 0

    @classmethod
    def from_pieces(cls, piece_count, blocks_per_piece, pieces):
        bf = cls(piece_count, blocks_per_piece)
        for p in pieces:
            bf.blocks[p] = bf.full_mask
            bf.held[p] = 1
            bf.held_count += 1
        return bf

    def state(self, piece: int) -> int:
        if self.held[piece]:
            return HELD
        return PARTIAL if self.blocks[piece] else MISSING

    @property
    def complete(self) -> bool:
        return self.held_count == self.piece_count

    def contiguity(self, start: int) -> int:
        """Length of the run of Held pieces beginning at ``start``."""
        held = self.held
        n = 0
        for p in range(start, self.piece_count):
            if not held[p]:
                break
            n += 1
        return n

    def mark_requested(self, piece: int, block: int):
        bit = 1 << block
        if (self.blocks[piece] | self.inflight[piece]) & bit:
            raise ValueError(f"block {piece}:{block} already held or in flight")
        self.inflight[piece] |= bit
        self.started.add(piece)

    def cancel_request(self, piece: int, block: int):
        self.inflight[piece] &= ~(1 << block)
        if not self.inflight[piece] and not self.blocks[piece]:
            self.started.discard(piece)

    def add_block(self, piece: int, block: int) -> bool:
        """Store a delivered block; returns True when it completes the piece."""
        bit = 1 << block
        if self.blocks[piece] & bit:
            raise ValueError(f"duplicate delivery of block {piece}:{block}")
        self.inflight[piece] &= ~bit
        self.blocks[piece] |= bit
        if self.blocks[piece] == self.full_mask:
            self.held[piece] = 1
            self.held_count += 1
            self.started.discard(piece)
            return True
        self.started.add(piece)
        return False


@dataclass
class AdwisWindow:
    """Priority window of pieces starting at the playback piece."""

    base: int
    size: int
    w_init: int
    theta: int
    piece_count: int

    @classmethod
    def initial(cls, w_init: int, theta: int, piece_count: int, base: int = 0):
        return cls(base, w_init, w_init, theta, piece_count)

    @property
    def last(self) -> int:
        return min(self.base + self.size - 1, self.piece_count - 1)

    def pieces(self) -> range:
        return range(self.base, self.last + 1)


# update_window event kinds
PIECE_COMPLETED, PLAYBACK_ADVANCED, JUMP, STALL = range(4)


def update_window(window: AdwisWindow, bitfield: Bitfield, event: int,
                  playback_piece: int | None = None) -> AdwisWindow:
    """Apply one window event in place and return the window.

    The base follows the playback piece. A completed piece grows the window
    by one when at least ``theta`` contiguous pieces are held from the base;
    jumps and stalls shrink it back to its initial size.
    """
    if playback_piece is not None:
        window.base = playback_piece
    remaining = window.piece_count - window.base
    if event == JUMP or event == STALL:
        window.size = window.w_init
    elif event == PIECE_COMPLETED:
        if bitfield.contiguity(window.base) >= window.theta:
            window.size += 1
    window.size = max(1, min(window.size, max(remaining, 1)))
    return window


def rarity(piece: int, neighborhood) -> int:
    """Number of neighbour bitfields (``held`` flag sequences) holding ``piece``."""
    return sum(1 for held in neighborhood if held[piece])


def rarity_counts(piece_count: int, neighborhood) -> list[int]:
    counts = [0] * piece_count
    for held in neighborhood:
        for p in range(piece_count):
            if held[p]:
                counts[p] += 1
    return counts


def next_request(local: Bitfield, window: AdwisWindow, remote_held, rarity_of, rng):
    """Pick the next ``(piece, block)`` to request from a remote, or None.

    ``remote_held`` indexes the remote's held-piece flags, ``rarity_of`` gives
    the local view of per-piece replication and ``rng`` breaks ties between
    equally rare pieces outside the window.
    """
    blocks, inflight, full = local.blocks, local.inflight, local.full_mask

    if local.started:
        for p in sorted(local.started):
            if remote_held[p]:
                free = full & ~(blocks[p] | inflight[p])
                if free:
                    return p, (free & -free).bit_length() - 1

    held = local.held
    lo, hi = window.base, window.last
    best = None
    best_rarity = None
    for p in range(lo, hi + 1):
        if remote_held[p] and not held[p] and not blocks[p] and not inflight[p]:
            r = rarity_of[p]
            if best is None or r < best_rarity:
                best, best_rarity = p, r
    if best is not None:
        return best, 0

    ties: list[int] = []
    best_rarity = None
    for p in range(local.piece_count):
        if lo <= p <= hi:
            continue
        if remote_held[p] and not held[p] and not blocks[p] and not inflight[p]:
            r = rarity_of[p]
            if best_rarity is None or r < best_rarity:
                best_rarity = r
                ties = [p]
            elif r == best_rarity:
                ties.append(p)
    if not ties:
        return None
    p = ties[0] if len(ties) == 1 else ties[rng.randrange(len(ties))]
    return p, 0


def has_useful(local: Bitfield, remote_held) -> bool:
    """True when the remote holds a piece the local peer lacks."""
    held = local.held
    return any(r and not h for r, h in zip(remote_held, held))
