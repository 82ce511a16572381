"""
Choosing the next block
=======================

A viewer finishes pieces it has already started first, then fetches pieces
inside its priority window just ahead of the playback point (rarest first),
and only then looks further out. The window grows by one piece each time
the first few pieces from the playback point are all in hand, and snaps
back to its initial size after a jump or a stall.
"""

import random

from vodswarm import piece_policy as pp
from vodswarm.piece_policy import AdwisWindow, Bitfield, next_request, update_window

rng = random.Random(1)
local = Bitfield(20, 4)
window = AdwisWindow.initial(7, 3, 20)

# Three neighbours; a remote holding everything stands in for the seeder.
neighbours = [bytearray([1] * 20),
              bytearray(1 if p % 2 else 0 for p in range(20)),
              bytearray(1 if p > 10 else 0 for p in range(20))]
rarity = pp.rarity_counts(20, neighbours)
print("rarity:", rarity)

# Fetch from the seeder block by block and watch the window move.
for step in range(40):
    choice = next_request(local, window, neighbours[0], rarity, rng)
    if choice is None:
        break
    local.mark_requested(*choice)
    if local.add_block(*choice):
        update_window(window, local, pp.PIECE_COMPLETED, playback_piece=0)
        print(f"piece {choice[0]:2d} done; window covers {window.base}..{window.last}")

# A jump forward resets the window at the new playback point.
update_window(window, local, pp.JUMP, playback_piece=12)
print("after a jump to 12 the window covers", window.base, "to", window.last)
print("next request:", next_request(local, window, neighbours[0], rarity, rng))
