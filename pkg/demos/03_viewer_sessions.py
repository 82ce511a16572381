"""
The interactive viewer model
============================

Viewers move between Play, Stop, Pause, jump-back and jump-forward. From
Play the next state is random; every other state returns to Play. Here we
sample sessions from the three profiles and check how often each
transition happens.
"""

import random

import numpy as np

from vodswarm.model import JF, PLAY, PROFILES, STATE_NAMES
from vodswarm.playback import jump_target, next_action

rng = random.Random(0)

# Transition frequencies out of Play against the profile's probabilities.
n = 50_000
for label, profile in PROFILES.items():
    counts = np.zeros(5)
    for _ in range(n):
        counts[next_action(profile, PLAY, rng).kind] += 1
    row = "  ".join(f"{STATE_NAMES[i]} {counts[i] / n:.3f}/{p:.2f}"
                    for i, p in enumerate(profile.transition_probs))
    print(f"{label}: {row}")


# How many Play visits does a session get before Stop? Stop is the only
# exit, so the count is geometric with mean 1 / p(Stop).
def plays_until_stop(profile):
    plays, state = 1, PLAY  # sessions open in Play
    while True:
        action = next_action(profile, state, rng)
        if action.kind == PLAY:
            plays += 1
        if action.name == "Stop":
            return plays
        state = action.kind


for label, profile in PROFILES.items():
    sample = [plays_until_stop(profile) for _ in range(2000)]
    print(f"{label}: mean Play visits {np.mean(sample):6.1f} "
          f"(1/p(Stop) = {1 / profile.transition_probs[1]:.1f})")

# Jump targets are uniform over the pieces ahead of (or behind) the viewer.
targets = [jump_target(JF, 60, 80, rng) for _ in range(10_000)]
print("forward jumps from piece 60 land on", min(targets), "to", max(targets),
      "with counts", np.bincount(targets)[61:].tolist())
