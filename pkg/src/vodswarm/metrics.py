"""Per-run metrics and cross-replication confidence intervals.

Six metrics per run:

* ERC, download efficiency against an unshared channel at the peer's own
  download capacity, averaged over served peers that received data;
* PS, peers served (departures during the run);
* EST, per-peer integral of idle upload-slot fraction, averaged;
* SD, mean startup delay;
* NI, mean interruption count per peer;
* TR, mean wait over every interruption of every served peer.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

METRICS = ("ERC", "PS", "EST", "SD", "NI", "TR")
CI_THRESHOLD = 0.05


@dataclass
class PeerLedger:
    peer_id: int
    capacity: str
    down_bps: float
    join_time: float
    departure: float | None = None
    leech_end: float | None = None
    bytes_downloaded: int = 0
    empty_slot_time: float = 0.0
    startup_delay: float | None = None
    interruptions: int = 0
    stall_waits: list = field(default_factory=list)

    @property
    def residence(self) -> float:
        return (self.departure or self.join_time) - self.join_time


def erc(ledger: PeerLedger) -> float | None:
    """Dedicated-channel download time over time actually spent leeching.

    None for peers that received nothing.
    """
    if ledger.bytes_downloaded <= 0:
        return None
    end = ledger.leech_end if ledger.leech_end is not None else ledger.departure
    active = end - ledger.join_time
    ideal = ledger.bytes_downloaded * 8 / ledger.down_bps
    if active <= 0:
        return None
    return ideal / active


def finalize_run(ledgers, served: int | None = None) -> dict | None:
    """Metric point estimates for one run; None when nobody was served."""
    if served is None:
        served = len(ledgers)
    if not ledgers:
        log.warning("run served no peers; metrics absent")
        return None
    ercs = [e for e in (erc(l) for l in ledgers) if e is not None]
    waits = [w for l in ledgers for w in l.stall_waits]
    delays = [l.startup_delay for l in ledgers if l.startup_delay is not None]
    return {
        "ERC": float(np.mean(ercs)) if ercs else 0.0,
        "PS": int(served),
        "EST": float(np.mean([l.empty_slot_time for l in ledgers])),
        "SD": float(np.mean(delays)) if delays else float("nan"),
        "NI": float(np.mean([l.interruptions for l in ledgers])),
        # no interruption means no waiting
        "TR": float(np.mean(waits)) if waits else 0.0,
    }


@dataclass
class MetricSummary:
    name: str
    mean: float
    ci_low: float
    ci_high: float
    half_width: float
    rel_halfwidth: float
    n_runs: int

    @property
    def flagged(self) -> bool:
        """Relative half-width wider than 5% (or undefined)."""
        return not (self.rel_halfwidth <= CI_THRESHOLD)


def t_interval(samples, confidence: float = 0.95):
    """``(mean, half_width)`` of the Student-t interval; infinite for n < 2."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        return float("nan"), float("inf")
    mean = float(x.mean())
    if n < 2:
        return mean, float("inf")
    s = float(x.std(ddof=1))
    q = float(stats.t.ppf(0.5 + confidence / 2, n - 1))
    return mean, q * s / math.sqrt(n)


def summarize(name, samples, confidence=0.95) -> MetricSummary:
    mean, hw = t_interval(samples, confidence)
    if hw == 0:
        rel = 0.0
    elif mean == 0 or math.isnan(mean):
        rel = float("inf")
    else:
        rel = hw / abs(mean)
    return MetricSummary(name, mean, mean - hw, mean + hw, hw, rel, len(samples))


def aggregate(reports, confidence: float = 0.95) -> dict[str, MetricSummary]:
    """Fold per-run metric dicts into per-metric t-interval summaries.

    Runs missing a metric (absent reports) are skipped. The result does not
    depend on report order beyond floating-point summation.
    """
    out = {}
    valid = [r for r in reports if r is not None]
    for name in METRICS:
        samples = sorted(r[name] for r in valid if name in r and not _isnan(r[name]))
        out[name] = summarize(name, samples, confidence)
    return out


def _isnan(v) -> bool:
    return isinstance(v, float) and math.isnan(v)


def fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return f"{v:.10g}"


SUMMARY_COLUMNS = ("name", "mean", "ci_low", "ci_high", "rel_halfwidth", "n_runs")


def summary_csv(summary: dict[str, MetricSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for name in METRICS:
        s = summary[name]
        w.writerow([name, fmt(s.mean), fmt(s.ci_low), fmt(s.ci_high),
                    fmt(s.rel_halfwidth), s.n_runs])
    return buf.getvalue()


def per_run_csv(reports, seeds=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("run", "seed") + METRICS)
    for i, r in enumerate(reports):
        seed = seeds[i] if seeds is not None else ""
        if r is None:
            w.writerow([i, seed] + [""] * len(METRICS))
        else:
            w.writerow([i, seed] + [fmt(r[m]) for m in METRICS])
    return buf.getvalue()


def summary_json(summary: dict[str, MetricSummary], **meta) -> str:
    body = {"meta": meta,
            "metrics": {k: {**asdict(v), "flagged": v.flagged} for k, v in summary.items()}}
    return json.dumps(body, indent=2, sort_keys=True, default=str) + "\n"
