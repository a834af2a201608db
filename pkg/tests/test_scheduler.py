import itertools
import random

import pytest

from conftest import make_scheduler, req, rv

from orchsim.resources import ResourceVector
from orchsim.scheduler import (DECISION_QUEUED, DECISION_REJECTED_QUOTA,
                               DECISION_STARTED, DuplicateRequestError,
                               InfeasiblePreemptionError, InstanceRequest,
                               SchedulerError, UnknownInstanceError, UsageLedger)

# -- priority -----------------------------------------------------------------


def test_priority_new_user_equals_weight():
    ledger = UsageLedger(half_life_s=3600)
    assert ledger.priority("nobody", t=100) == 1.0
    ledger.set_weight("vip", 2.5)
    assert ledger.priority("vip", t=100) == 2.5


def test_priority_one_half_life_closed_form():
    ledger = UsageLedger(half_life_s=3600)
    ledger.accrue("u", 100.0, t=0)
    # closed form: U(3600) = 100 * 2**(-1) = 50
    assert ledger.usage("u", 3600) == pytest.approx(50.0)
    assert ledger.priority("u", 3600) == pytest.approx(1.0 / 51.0)

    # step-by-step decay oracle: apply the per-step factor repeatedly
    value = 100.0
    for _ in range(36):
        value *= 2.0 ** (-100.0 / 3600.0)
    assert ledger.usage("u", 3600) == pytest.approx(value, rel=1e-9)


def test_priority_strictly_monotone_in_usage():
    ledger = UsageLedger(half_life_s=3600)
    ledger.accrue("a", 500.0, t=0)
    ledger.accrue("b", 100.0, t=0)
    assert ledger.priority("a", 10) < ledger.priority("b", 10)


def test_priority_argmax_invariant_under_weight_scaling():
    rng = random.Random(31)
    for _ in range(100):
        users = ["u%d" % i for i in range(4)]
        base = UsageLedger(3600, {u: rng.uniform(0.5, 3) for u in users})
        scaled = UsageLedger(3600, {u: base.weight(u) * 7.5 for u in users})
        for u in users:
            usage = rng.uniform(0, 1000)
            base.accrue(u, usage, 0)
            scaled.accrue(u, usage, 0)
        t = rng.randrange(0, 5000)
        order_base = sorted(users, key=lambda u: (-base.priority(u, t), u))
        order_scaled = sorted(users, key=lambda u: (-scaled.priority(u, t), u))
        assert order_base == order_scaled


# -- submit -------------------------------------------------------------------


def test_submit_empty_cluster_starts():
    sched = make_scheduler(rv(4, 4096, 40))
    decision = sched.submit(req(res=rv(2, 1024, 10)), t=0)
    assert decision.kind == DECISION_STARTED
    assert decision.instance.node_id == "n1"


def test_submit_duplicate_id_rejected():
    sched = make_scheduler(rv(4, 4096, 40))
    sched.submit(req(rid="same"), t=0)
    with pytest.raises(DuplicateRequestError):
        sched.submit(req(rid="same"), t=1)


def test_normal_preempts_full_cluster_of_preemptibles():
    sched = make_scheduler(rv(2, 2048, 20))
    sched.submit(req(user="spot", res=rv(2, 2048, 20), bid=0.1), t=0)
    assert sched.free() == rv(0, 0, 0)
    decision = sched.submit(req(user="prio", res=rv(2, 2048, 20)), t=5)
    assert decision.kind == DECISION_STARTED
    assert len(sched.running) == 1
    assert next(iter(sched.running.values())).request.user == "prio"


def test_normal_request_queues_behind_normals():
    sched = make_scheduler(rv(2, 2048, 20))
    sched.submit(req(res=rv(2, 2048, 20)), t=0)
    decision = sched.submit(req(res=rv(1, 512, 5)), t=1)
    assert decision.kind == DECISION_QUEUED
    assert decision.position == 0


def test_quota_rejects_only_never_satisfiable():
    quotas = {"g": rv(2, 2048, 20)}
    sched = make_scheduler(rv(8, 8192, 80), quotas=quotas)
    too_big = req(group="g", res=rv(3, 1024, 10))
    assert sched.submit(too_big, t=0).kind == DECISION_REJECTED_QUOTA
    ok = req(group="g", res=rv(2, 1024, 10))
    assert sched.submit(ok, t=0).kind == DECISION_STARTED
    # group at cap: the next request queues instead of being rejected
    waiting = req(group="g", res=rv(1, 512, 5))
    assert sched.submit(waiting, t=1).kind == DECISION_QUEUED
    sched.release(ok.request_id, 10)
    assert waiting.request_id in sched.running


def test_quota_respected_at_dispatch():
    quotas = {"g": rv(2, 2048, 20)}
    sched = make_scheduler(rv(8, 8192, 80), quotas=quotas)
    first = req(group="g", res=rv(2, 1024, 10))
    sched.submit(first, t=0)
    other = req(group="other", res=rv(4, 1024, 10))
    assert sched.submit(other, t=0).kind == DECISION_STARTED
    blocked = req(group="g", res=rv(1, 512, 5))
    assert sched.submit(blocked, t=1).kind == DECISION_QUEUED
    for _ in range(3):
        sched.dispatch(2)
        used = sched.group_running.get("g")
        assert used.fits(quotas["g"])


# -- select_victims -------------------------------------------------------------


def brute_force_min_cardinality(free, eligible, request):
    """Smallest victim-set size over exhaustive subsets, or None."""
    for size in range(len(eligible) + 1):
        for combo in itertools.combinations(eligible, size):
            freed = ResourceVector.total(i.request.resources for i in combo)
            if request.resources.fits(free + freed):
                return size
    return None


def test_select_victims_empty_when_fits():
    sched = make_scheduler(rv(4, 4096, 40))
    assert sched.select_victims(req(res=rv(1, 512, 5))) == []


def test_select_victims_unique_minimal_set():
    sched = make_scheduler(rv(4, 4096, 20))
    x = req(user="x", res=rv(1, 1024, 5), bid=0.1, rid="x")
    y = req(user="y", res=rv(1, 1024, 5), bid=0.2, rid="y")
    z = req(user="z", res=rv(2, 2048, 10), bid=0.3, rid="z")
    for r in (x, y, z):
        assert sched.submit(r, t=0).kind == DECISION_STARTED
    assert sched.free() == rv(0, 0, 0)
    probe = req(user="p", res=rv(2, 2048, 10), rid="probe")
    victims = sched.select_victims(probe)
    assert [v.request_id for v in victims] == ["z"]
    # brute-force over all subsets confirms {z} is the unique minimal set
    eligible = list(sched.running.values())
    assert brute_force_min_cardinality(sched.free(), eligible, probe) == 1
    for combo in itertools.combinations(eligible, 1):
        freed = ResourceVector.total(i.request.resources for i in combo)
        if probe.resources.fits(sched.free() + freed):
            assert [i.request_id for i in combo] == ["z"]


def test_select_victims_needs_both():
    sched = make_scheduler(rv(2, 2048, 10))
    x = req(user="x", res=rv(1, 1024, 5), bid=0.1, rid="x")
    y = req(user="y", res=rv(1, 1024, 5), bid=0.2, rid="y")
    for r in (x, y):
        assert sched.submit(r, t=0).kind == DECISION_STARTED
    probe = req(user="p", res=rv(2, 2048, 10), rid="probe")
    victims = sched.select_victims(probe)
    assert sorted(v.request_id for v in victims) == ["x", "y"]
    assert brute_force_min_cardinality(rv(0, 0, 0), list(sched.running.values()),
                                       probe) == 2


def test_select_victims_prefers_lowest_bids_then_youngest():
    sched = make_scheduler(rv(4, 4096, 40))
    old_cheap = req(user="a", res=rv(1, 1024, 10), bid=0.1, rid="old-cheap")
    sched.submit(old_cheap, t=0)
    young_cheap = req(user="b", res=rv(1, 1024, 10), bid=0.1, rid="young-cheap")
    sched.submit(young_cheap, t=5)
    rich = req(user="c", res=rv(2, 2048, 20), bid=0.9, rid="rich")
    sched.submit(rich, t=6)
    probe = req(user="p", res=rv(1, 512, 5), rid="probe")
    victims = sched.select_victims(probe)
    assert [v.request_id for v in victims] == ["young-cheap"]


def test_preemptible_may_only_displace_strictly_lower_bids():
    sched = make_scheduler(rv(2, 2048, 20))
    incumbent = req(user="x", res=rv(2, 2048, 20), bid=0.5, rid="incumbent")
    sched.submit(incumbent, t=0)
    equal_bid = req(user="y", res=rv(1, 512, 5), bid=0.5, rid="equal")
    with pytest.raises(InfeasiblePreemptionError):
        sched.select_victims(equal_bid)
    higher = req(user="z", res=rv(1, 512, 5), bid=0.6, rid="higher")
    assert [v.request_id for v in sched.select_victims(higher)] == ["incumbent"]


def test_higher_bid_preemptible_displaces_lower_on_submit():
    sched = make_scheduler(rv(2, 2048, 20))
    sched.submit(req(user="low", res=rv(2, 2048, 20), bid=0.1, rid="low"), t=0)
    decision = sched.submit(req(user="high", res=rv(2, 2048, 20), bid=0.4,
                                rid="high"), t=3)
    assert decision.kind == DECISION_STARTED
    assert set(sched.running) == {"high"}


# -- dispatch -------------------------------------------------------------------


def test_dispatch_empty_queue():
    sched = make_scheduler(rv(2, 2048, 20))
    assert sched.dispatch(0) == []


def test_dispatch_fifo_among_equal_priorities():
    sched = make_scheduler(rv(2, 2048, 20))
    blocker = req(user="w", res=rv(2, 2048, 20), rid="blocker")
    sched.submit(blocker, t=0)
    first = req(user="a", res=rv(2, 2048, 20), t=1, rid="first")
    second = req(user="b", res=rv(2, 2048, 20), t=2, rid="second")
    sched.submit(first, t=1)
    sched.submit(second, t=2)
    sched.release("blocker", 10)
    assert "first" in sched.running
    assert "second" not in sched.running


def test_backfill_starts_smaller_request_behind_big_head():
    for backfill, expect_started in ((True, True), (False, False)):
        sched = make_scheduler(rv(2, 2048, 20), backfill=backfill)
        huge = req(user="big", res=rv(2, 2048, 20), rid="huge-%s" % backfill)
        small = req(user="small", res=rv(1, 512, 5), rid="small-%s" % backfill)
        sched.submit(req(user="w", res=rv(2, 2048, 20), rid="w-%s" % backfill), t=0)
        sched.release("w-%s" % backfill, 1)
        # occupy half so the huge head cannot start but the small one could
        sched.submit(req(user="z", res=rv(1, 1024, 10), rid="z-%s" % backfill), t=1)
        sched.submit(huge, t=2)
        decision = sched.submit(small, t=3)
        assert (decision.kind == DECISION_STARTED) is expect_started


# -- release --------------------------------------------------------------------


def test_release_accrues_cpu_seconds():
    sched = make_scheduler(rv(2, 2048, 20))
    r = req(user="u", res=rv(2, 1024, 10), rid="r")
    sched.submit(r, t=0)
    sched.release("r", 10)
    # 2 cpus for 10 s
    assert sched.ledger.usage("u", 10) == pytest.approx(20.0)


def test_release_restores_free_capacity_exactly():
    sched = make_scheduler(rv(4, 4096, 40))
    before = sched.free()
    r = req(res=rv(3, 2048, 30), rid="r")
    sched.submit(r, t=0)
    sched.release("r", 7)
    assert sched.free() == before


def test_double_release_rejected():
    sched = make_scheduler(rv(2, 2048, 20))
    sched.submit(req(rid="r"), t=0)
    sched.release("r", 1)
    with pytest.raises(UnknownInstanceError):
        sched.release("r", 2)


def test_release_triggers_dispatch():
    sched = make_scheduler(rv(2, 2048, 20))
    sched.submit(req(user="a", res=rv(2, 2048, 20), rid="a"), t=0)
    sched.submit(req(user="b", res=rv(2, 2048, 20), rid="b"), t=1)
    sched.release("a", 5)
    assert "b" in sched.running


def test_zero_resource_request_invalid():
    with pytest.raises(SchedulerError):
        InstanceRequest(request_id="r", user="u", group="g",
                        resources=rv(0, 0, 0))


# -- invariants -----------------------------------------------------------------


def test_conservation_under_random_churn():
    rng = random.Random(77)
    sched = make_scheduler(rv(4, 4096, 40), rv(4, 4096, 40))
    capacity = sched.capacity()
    live = []
    n = 0
    for t in range(0, 400):
        if rng.random() < 0.5:
            n += 1
            r = req(user=rng.choice("abc"),
                    res=rv(rng.randrange(1, 4), rng.randrange(256, 2048),
                           rng.randrange(1, 20)),
                    bid=rng.choice([None, 0.1, 0.5]), t=t,
                    rid="c%05d" % n)
            sched.submit(r, t)
        if live and rng.random() < 0.4:
            victim = rng.choice(live)
            if victim in sched.running:
                sched.release(victim, t)
            live.remove(victim)
        live = [rid for rid in sched.running]
        running_total = ResourceVector.total(
            i.request.resources for i in sched.running.values())
        assert sched.free() + running_total == capacity
        sched.audit(t)


def test_normal_instances_never_preempted():
    rng = random.Random(13)
    for _ in range(100):
        sched = make_scheduler(rv(4, 2048, 40))
        normals = set()
        for i in range(rng.randrange(1, 4)):
            r = req(user="n%d" % i, res=rv(1, 256, 4),
                    bid=rng.choice([None, 0.2]), t=0, rid=None)
            if sched.submit(r, 0).kind == DECISION_STARTED and r.bid is None:
                normals.add(r.request_id)
        probe = req(user="p", res=rv(rng.randrange(1, 5), 256, 4), t=1)
        sched.submit(probe, 1)
        assert normals <= set(sched.running)
