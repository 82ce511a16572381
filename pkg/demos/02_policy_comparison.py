"""
Comparing the three unchoke policies
====================================

Original BitTorrent, SBNP and QBPS side by side in one cell of the grid,
with Student-t intervals across replications. Five short replications keep
this quick; the command-line front end runs the full 30.
"""

from vodswarm import ScenarioConfig, aggregate, build_scenario, finalize_run, simulate

REPS = 5
summaries = {}
for kind in ("original", "sbnp", "qbps"):
    reports = []
    for rep in range(REPS):
        cfg = ScenarioConfig(provision="lp", profile="hi", kind=kind, duration=1800,
                             seed=100 + rep)
        r = simulate(build_scenario(cfg))
        reports.append(finalize_run(r.ledgers, r.served))
    summaries[kind] = aggregate(reports)

# Means with 95% half-widths. A trailing * marks a half-width above 5% of
# the mean; with five replications that is common.
print(f"{'metric':6s}" + "".join(f"{k:>22s}" for k in summaries))
for name in ("ERC", "PS", "EST", "SD", "NI", "TR"):
    cells = []
    for s in summaries.values():
        m = s[name]
        cells.append(f"{m.mean:10.3f} +- {m.half_width:7.3f}{'*' if m.flagged else ' '}")
    print(f"{name:6s}" + "".join(f"{c:>22s}" for c in cells))

# The same comparison for the whole grid, with byte-stable CSV output:
#
#   python -m vodswarm --out results/
