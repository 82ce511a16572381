"""
How bandwidth is shared
=======================

Transfers are fluid flows. A sender splits its upload evenly over its busy
slots; a receiver that is offered more than its download capacity scales
every inflow down by the same factor. Nothing left over is handed back, so
the result can fall short of a max-min fair allocation.
"""

from vodswarm.engine import Engine, FlowGraph, allocate_rates

# A 240 kbps seeder feeding four viewers: each gets 60 kbps.
print(allocate_rates([("seed", v) for v in "abcd"], {"seed": 240_000},
                     {v: 480_000 for v in "abcd"}))

# Two fast senders into one slow receiver: the receiver's cap binds and
# both flows are halved.
print(allocate_rates([("h1", "low"), ("h2", "low")],
                     {"h1": 480_000, "h2": 480_000}, {"low": 120_000}))

# Where the two-stage rule loses throughput: "a" splits its upload between
# a capped receiver and an open one, and the capped receiver's refusal is
# not redirected.
pairs = [("a", "slow"), ("a", "fast"), ("b", "slow")]
up = {"a": 480_000, "b": 480_000}
down = {"slow": 120_000, "fast": 480_000}
rates = allocate_rates(pairs, up, down)
print(dict(zip(pairs, rates)), "total", sum(rates))

# Inside the simulator the same rule runs incrementally. When a second
# viewer joins half way through, the first transfer's finish time moves.
engine = Engine()
graph = FlowGraph(engine)
for node, cap in (("seed", 240_000), ("a", 480_000), ("b", 480_000)):
    graph.add_node(node, cap, cap)
first = graph.start("seed", "a", 240_000)
graph.reallocate()
print("first transfer due at", first.event.time)
engine.now = 0.5
graph.start("seed", "b", 240_000)
graph.reallocate()
print("after the second starts it is due at", first.event.time)
