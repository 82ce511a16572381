import itertools
import random

import pytest

from vodswarm.model import policy_params
from vodswarm.peer_policy import (LEECHER, NEVER, OPTIMISTIC_TICK, REGULAR_TICK, SEEDER,
                                  PeerSelector, RateEstimator, SlotAssignment, diff_assignment,
                                  estimate_rates, original_unchoke, qbps_unchoke,
                                  quota_candidates, sbnp_unchoke)


class StubRates:
    """Fixed per-remote rates, standing in for a live estimator."""

    def __init__(self, received=None, sent=None, download=0.0):
        self.received = received or {}
        self.sent = sent or {}
        self.download = download

    def received_from_bps(self, r, now):
        return self.received.get(r, 0.0)

    def sent_to_bps(self, r, now):
        return self.sent.get(r, 0.0)

    def download_bps(self, now):
        return self.download


ORIGINAL = policy_params("original")
SBNP = policy_params("sbnp")
QBPS = policy_params("qbps")


# -- estimator ----------------------------------------------------------------

def test_unseen_remote_reports_zero():
    est = RateEstimator()
    assert est.received_from_bps("a", 5.0) == 0 and est.sent_to_bps("a", 5.0) == 0
    assert estimate_rates(est, ["a"], 5.0) == {"a": (0, 0)}


def test_rate_over_twenty_second_horizon():
    est = RateEstimator()
    for i in range(10):
        est.record_received("a", 60_000, 1.0 + i)
    assert est.received_from_bps("a", 15.0) == pytest.approx(240_000)
    assert est.download_bps(15.0) == pytest.approx(240_000)


def test_old_bytes_fall_out_of_the_horizon():
    est = RateEstimator()
    est.record_received("a", 600_000, 1.0)
    est.record_sent("b", 600_000, 1.0)
    assert est.received_from_bps("a", 30.0) == 0
    assert est.sent_to_bps("b", 30.0) == 0
    assert est.download_bps(30.0) == 0


# -- original -----------------------------------------------------------------

def test_original_top_three_plus_optimistic():
    rates = StubRates({i: r for i, r in enumerate([100, 90, 80, 70, 60])})
    for seed in range(20):
        a = original_unchoke(LEECHER, list(range(5)), rates, OPTIMISTIC_TICK, 0.0,
                             random.Random(seed), ORIGINAL)
        assert sorted(a.regular) == [0, 1, 2]
        assert len(a.altruistic) == 1 and a.altruistic[0] in (3, 4)


def test_original_seeder_ranks_by_sent_rate():
    rates = StubRates(received={0: 999}, sent={1: 30, 2: 20, 3: 10, 4: 5})
    a = original_unchoke(SEEDER, [0, 1, 2, 3, 4], rates, OPTIMISTIC_TICK, 0.0,
                         random.Random(1), ORIGINAL)
    assert sorted(a.regular) == [1, 2, 3]
    assert a.altruistic == [0] or a.altruistic == [4]


@pytest.mark.parametrize("n", [0, 2])
def test_original_with_few_interested(n):
    a = original_unchoke(LEECHER, list(range(n)), StubRates(), OPTIMISTIC_TICK, 0.0,
                         random.Random(0), ORIGINAL)
    assert sorted(a.unchoked()) == list(range(n))


def test_optimistic_slot_kept_between_optimistic_ticks():
    rates = StubRates({0: 100, 1: 90, 2: 80})
    rng = random.Random(3)
    first = original_unchoke(LEECHER, list(range(8)), rates, OPTIMISTIC_TICK, 0.0, rng, ORIGINAL)
    again = original_unchoke(LEECHER, list(range(8)), rates, REGULAR_TICK, 10.0, rng, ORIGINAL,
                             first)
    assert again.altruistic == first.altruistic


# -- sbnp -----------------------------------------------------------------------

def test_sbnp_leecher_splits_evenly():
    rates = StubRates({i: 100 - i for i in range(6)})
    a = sbnp_unchoke(LEECHER, list(range(6)), rates, {}, OPTIMISTIC_TICK, 0.0,
                     random.Random(0), SBNP)
    assert sorted(a.regular) == [0, 1]
    assert len(a.altruistic) == 2 and not set(a.altruistic) & {0, 1}


def test_sbnp_seeder_prefers_recent_unchokes():
    last = {"a": 50.0, "b": 40.0, "c": 10.0}
    seen = set()
    for seed in range(50):
        a = sbnp_unchoke(SEEDER, ["a", "b", "c", "d", "e"], StubRates(), last, REGULAR_TICK,
                         60.0, random.Random(seed), SBNP)
        assert set(a.unchoked()) >= {"a", "b", "c"} and len(a) == 4
        seen |= set(a.unchoked()) - {"a", "b", "c"}
    assert seen == {"d", "e"}
    assert last.get("d", NEVER) == NEVER


def test_sbnp_single_interested():
    a = sbnp_unchoke(LEECHER, [7], StubRates(), {}, OPTIMISTIC_TICK, 0.0, random.Random(0), SBNP)
    assert a.unchoked() == [7]


# -- qbps -----------------------------------------------------------------------

def test_quota_goes_to_nearest_slow_candidates():
    # remotes 1..3 are slow, 4..5 fast
    rates = StubRates({1: 10, 2: 10, 3: 10, 4: 500, 5: 400}, download=200)
    points = {1: 22, 2: 35, 3: 24}
    a = qbps_unchoke(LEECHER, [1, 2, 3, 4, 5], rates, points, 20, OPTIMISTIC_TICK, 0.0,
                     random.Random(0), QBPS)
    assert a.altruistic == [1, 3]
    assert sorted(a.regular) == [4, 5]


def test_no_slow_remotes_means_pure_tit_for_tat():
    rates = StubRates({i: 500 for i in range(6)}, download=100)
    a = qbps_unchoke(LEECHER, list(range(6)), rates, {}, 0, OPTIMISTIC_TICK, 0.0,
                     random.Random(0), QBPS)
    assert a.altruistic == [] and len(a.regular) == 4


def test_newcomer_is_quota_eligible():
    rates = StubRates({"old": 300_000}, download=200_000)
    assert quota_candidates(["old", "new"], rates, 0.0) == ["new"]


def test_qbps_seeder_acts_like_original():
    rates = StubRates(sent={1: 30, 2: 20, 3: 10})
    q = qbps_unchoke(SEEDER, [1, 2, 3, 4], rates, {}, 0, OPTIMISTIC_TICK, 0.0,
                     random.Random(5), QBPS)
    o = original_unchoke(SEEDER, [1, 2, 3, 4], rates, OPTIMISTIC_TICK, 0.0,
                         random.Random(5), QBPS)
    assert q == o


def test_quota_held_between_quota_ticks():
    rates = StubRates({1: 0, 2: 0, 3: 0}, download=100)
    first = qbps_unchoke(LEECHER, [1, 2, 3], rates, {1: 0, 2: 1, 3: 50}, 0, OPTIMISTIC_TICK,
                         0.0, random.Random(0), QBPS)
    moved = qbps_unchoke(LEECHER, [1, 2, 3], rates, {1: 50, 2: 50, 3: 0}, 0, REGULAR_TICK,
                         10.0, random.Random(0), QBPS, first)
    assert moved.altruistic == first.altruistic == [1, 2]


def test_quota_matches_brute_force_on_small_candidate_sets():
    rng = random.Random(99)
    for _ in range(500):
        n = rng.randint(0, 10)
        remotes = list(range(n))
        received = {r: rng.choice([0, 50, 100, 150, 300]) for r in remotes}
        local = rng.choice([0, 100, 200])
        points = {r: rng.randrange(80) for r in remotes if rng.random() < 0.8}
        own = rng.randrange(80)
        a = qbps_unchoke(LEECHER, remotes, StubRates(received, download=local), points, own,
                         OPTIMISTIC_TICK, 0.0, random.Random(1), QBPS)
        eligible = [r for r in remotes if received[r] < local]
        size = min(QBPS.max_quota, len(eligible))
        best = min(itertools.combinations(eligible, size),
                   key=lambda c: sorted((abs(points.get(r, 0) - own), r) for r in c))
        assert sorted(a.altruistic) == sorted(best)
        assert len(a) <= QBPS.x and not set(a.regular) & set(a.altruistic)


# -- ticks ------------------------------------------------------------------------

def test_diff_of_unchanged_assignment_is_empty():
    a = SlotAssignment([1, 2, 3], [4])
    assert diff_assignment(a, SlotAssignment([1, 2, 3], [4])) == ([], [])


def test_slot_move_is_silent():
    assert diff_assignment(SlotAssignment([1, 2, 3], [4]),
                           SlotAssignment([1, 2, 4], [3])) == ([], [])


def test_full_turnover():
    chokes, unchokes = diff_assignment(SlotAssignment([1, 2, 3], [4]),
                                       SlotAssignment([5, 6, 7], [8]))
    assert chokes == [1, 2, 3, 4] and unchokes == [5, 6, 7, 8]


def test_selector_tracks_ticks_and_last_unchoke():
    sel = PeerSelector(SBNP)
    rates = StubRates({i: i for i in range(6)})
    a, chokes, unchokes = sel.on_tick(LEECHER, list(range(6)), rates, 10.0, random.Random(0),
                                      OPTIMISTIC_TICK)
    assert chokes == [] and sorted(unchokes) == sorted(a.unchoked())
    assert sel.ticks == 1 and all(sel.last_unchoke[r] == 10.0 for r in a.unchoked())
    gone = a.regular[0]
    sel.drop(gone)
    assert gone not in sel.current.unchoked() and gone not in sel.last_unchoke
