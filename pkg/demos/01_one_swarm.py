"""
One swarm, one replication
==========================

Twenty viewers and one seeder share a 20 MiB video. We watch a single
replication of the low-provisioned scenario under the quota-based policy
and read off the per-run metrics.
"""

from collections import Counter

from vodswarm import ScenarioConfig, build_scenario, finalize_run, simulate
from vodswarm.metrics import erc

# A scenario is a flat config plus validation. Twenty minutes is enough to
# see a few generations of viewers come and go.
config = ScenarioConfig(provision="lp", profile="hi", kind="qbps", duration=1200, seed=3)
scenario = build_scenario(config)
print("pieces:", scenario.media.piece_count,
      "blocks per piece:", scenario.media.blocks_per_piece,
      "seconds per piece: %.3f" % scenario.media.piece_play_duration_s)
print("class mix:", {c.label: n for c, n in scenario.classes if n})

# Run it. The trace records joins, departures, stalls and so on.
result = simulate(scenario, trace=True)
print("events processed:", result.events, "viewers served:", result.served)
print("trace kinds:", dict(Counter(kind for _, kind, _, _ in result.trace)))

# Every departed viewer leaves a ledger behind.
for led in result.ledgers[:5]:
    print(f"peer {led.peer_id:3d} {led.capacity:8s} stayed {led.residence:7.1f} s, "
          f"startup {led.startup_delay or float('nan'):6.1f} s, "
          f"ERC {erc(led) or 0:.3f}")

# The run-level metrics are plain means over those ledgers.
for name, value in finalize_run(result.ledgers, result.served).items():
    print(f"{name:4s} {value:10.4f}")
