"""Per-site admission, fair-share queueing and preemption.

Capacity is pooled over the site's schedulable nodes.  Queued requests are
ordered by a fair-share priority w / (1 + U) where U is the user's
exponentially decayed historical cpu-seconds; among equal priorities FIFO by
arrival, then request id.  Normal requests may terminate preemptible
instances to make room; preemptible requests may only terminate strictly
lower bids.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .elasticity import NodePool
from .errors import DomainError
from .resources import ResourceVector

# Above this many eligible victims the exact minimal-set search switches to a
# greedy cover with redundancy elimination; desk-scale sites stay well below.
_EXACT_VICTIM_LIMIT = 16

DECISION_STARTED = "started"
DECISION_QUEUED = "queued"
DECISION_REJECTED_QUOTA = "rejected_quota"


class SchedulerError(DomainError):
    pass


class DuplicateRequestError(SchedulerError):
    pass


class UnknownInstanceError(SchedulerError):
    pass


class InfeasiblePreemptionError(SchedulerError):
    pass


@dataclass(frozen=True)
class InstanceRequest:
    """A schedulable unit; bid None means a normal (non-preemptible) instance."""

    request_id: str
    user: str
    group: str
    resources: ResourceVector
    bid: float | None = None
    arrival_time: int = 0

    def __post_init__(self):
        if self.resources.is_zero():
            raise SchedulerError("request %s has no positive resource component"
                                 % self.request_id)
        if self.bid is not None and self.bid < 0:
            raise SchedulerError("bid must be >= 0")

    @property
    def is_preemptible(self) -> bool:
        return self.bid is not None


@dataclass
class RunningInstance:
    request: InstanceRequest
    start_time: int
    node_id: str

    @property
    def request_id(self) -> str:
        return self.request.request_id


@dataclass(frozen=True)
class Decision:
    kind: str
    instance: RunningInstance | None = None
    position: int | None = None


class UsageLedger:
    """Per-user decayed usage (cpu-seconds) and static weights.

    Usage decays by half every half_life_s simulation seconds; an accrual of
    c at time t_i contributes c * 2**((t_i - t) / H) when read at time t.
    Unknown users auto-register with weight 1.
    """

    def __init__(self, half_life_s: float = 3600.0, weights: dict[str, float] | None = None):
        if half_life_s <= 0:
            raise SchedulerError("half_life_s must be > 0")
        self.half_life_s = float(half_life_s)
        self._weights: dict[str, float] = dict(weights or {})
        self._usage: dict[str, tuple[float, int]] = {}  # user -> (value, stamp)

    def set_weight(self, user: str, weight: float):
        if weight <= 0:
            raise SchedulerError("weight must be > 0")
        self._weights[user] = weight

    def weight(self, user: str) -> float:
        return self._weights.get(user, 1.0)

    def usage(self, user: str, t: int) -> float:
        value, stamp = self._usage.get(user, (0.0, t))
        if value == 0.0:
            return 0.0
        return value * 2.0 ** ((stamp - t) / self.half_life_s)

    def accrue(self, user: str, cpu_seconds: float, t: int):
        if cpu_seconds < 0:
            raise SchedulerError("cannot accrue negative usage")
        self._usage[user] = (self.usage(user, t) + cpu_seconds, t)

    def priority(self, user: str, t: int) -> float:
        return self.weight(user) / (1.0 + self.usage(user, t))

    def users(self) -> list[str]:
        return sorted(set(self._usage) | set(self._weights))


class SiteScheduler:
    """Single-writer scheduler for one site's pooled cloud capacity."""

    def __init__(self, site_id: str, pool: NodePool, *,
                 half_life_s: float = 3600.0,
                 backfill: bool = True,
                 weights: dict[str, float] | None = None,
                 quotas: dict[str, ResourceVector] | None = None,
                 log=None):
        self.site_id = site_id
        self.pool = pool
        self.backfill = backfill
        self.ledger = UsageLedger(half_life_s, weights)
        self.quotas: dict[str, ResourceVector] = dict(quotas or {})
        self.running: dict[str, RunningInstance] = {}
        self.queue: list[InstanceRequest] = []
        self.group_running: dict[str, ResourceVector] = {}
        self._seen_ids: set[str] = set()
        self._log = log

    # -- capacity ---------------------------------------------------------

    def capacity(self) -> ResourceVector:
        return self.pool.cloud_capacity()

    def free(self) -> ResourceVector:
        return self.pool.cloud_free()

    def queued_demand(self) -> ResourceVector:
        return ResourceVector.total(r.resources for r in self.queue)

    def priority(self, user: str, t: int) -> float:
        return self.ledger.priority(user, t)

    def _emit(self, t, kind, **payload):
        if self._log is not None:
            self._log.emit(t, kind, site=self.site_id, **payload)

    # -- admission --------------------------------------------------------

    def submit(self, request: InstanceRequest, t: int) -> Decision:
        """Queue the request and try to start it at the same event time.

        A request whose resources exceed its group cap on their own can never
        run and is rejected; anything else queues and competes.
        """
        if request.request_id in self._seen_ids:
            raise DuplicateRequestError("request id %r already used" % request.request_id)
        self._seen_ids.add(request.request_id)
        cap = self.quotas.get(request.group)
        self._emit(t, "request_submitted", request_id=request.request_id,
                   user=request.user, group=request.group,
                   cpus=request.resources.cpus, mem_mb=request.resources.mem_mb,
                   disk_gb=request.resources.disk_gb,
                   bid=request.bid, arrival=request.arrival_time)
        if cap is not None and not request.resources.fits(cap):
            self._emit(t, "request_rejected", request_id=request.request_id,
                       reason="exceeds_group_quota")
            return Decision(DECISION_REJECTED_QUOTA)
        self.queue.append(request)
        started = self.dispatch(t)
        for instance in started:
            if instance.request_id == request.request_id:
                return Decision(DECISION_STARTED, instance=instance)
        position = self.ordered_queue(t).index(request)
        return Decision(DECISION_QUEUED, position=position)

    def ordered_queue(self, t: int) -> list[InstanceRequest]:
        return sorted(self.queue, key=lambda r: (-self.ledger.priority(r.user, t),
                                                 r.arrival_time, r.request_id))

    def quota_allows(self, request: InstanceRequest) -> bool:
        cap = self.quotas.get(request.group)
        if cap is None:
            return True
        used = self.group_running.get(request.group, ResourceVector.zero())
        return (used + request.resources).fits(cap)

    # -- preemption -------------------------------------------------------

    def _eligible_victims(self, request: InstanceRequest) -> list[RunningInstance]:
        """Running preemptibles this request may displace, preference-ordered.

        Order: lowest bid, then youngest start, then request id.  Instances on
        draining nodes are excluded because terminating them frees capacity
        outside the cloud pool.
        """
        victims = []
        for instance in self.running.values():
            if not instance.request.is_preemptible:
                continue
            node = self.pool.nodes.get(instance.node_id)
            if node is None or not self.pool.is_schedulable(node):
                continue
            if request.is_preemptible and not instance.request.bid < request.bid:
                continue
            victims.append(instance)
        return sorted(victims, key=lambda i: (i.request.bid, -i.start_time, i.request_id))

    def select_victims(self, request: InstanceRequest, t: int | None = None) -> list[RunningInstance]:
        """Pick a minimal set of preemptible instances freeing room for request.

        Empty when free capacity already fits.  Among minimum-cardinality
        feasible sets, prefers lower bids, then younger instances, then ids.
        Raises InfeasiblePreemptionError when no eligible set is enough.
        """
        free = self.free()
        if request.resources.fits(free):
            return []
        eligible = self._eligible_victims(request)
        total = free + ResourceVector.total(i.request.resources for i in eligible)
        if not request.resources.fits(total):
            raise InfeasiblePreemptionError(
                "no victim set can free enough capacity for %s" % request.request_id)

        if len(eligible) > _EXACT_VICTIM_LIMIT:
            return self._greedy_victims(request, free, eligible)

        deficit = request.resources.monus(free)
        for k in range(1, len(eligible) + 1):
            if not self._cardinality_feasible(eligible, k, deficit):
                continue
            for combo in itertools.combinations(eligible, k):
                freed = ResourceVector.total(i.request.resources for i in combo)
                if request.resources.fits(free + freed):
                    return list(combo)
        raise InfeasiblePreemptionError("unreachable: feasibility pre-check passed")

    @staticmethod
    def _cardinality_feasible(eligible, k, deficit) -> bool:
        # The k largest contributions per component bound what any k-subset frees.
        def top_sum(get):
            return sum(sorted((get(i.request.resources) for i in eligible), reverse=True)[:k])
        return (top_sum(lambda r: r.cpus) >= deficit.cpus
                and top_sum(lambda r: r.mem_mb) >= deficit.mem_mb
                and top_sum(lambda r: r.disk_gb) >= deficit.disk_gb)

    @staticmethod
    def _greedy_victims(request, free, eligible) -> list[RunningInstance]:
        chosen = list(eligible)
        freed = ResourceVector.total(i.request.resources for i in chosen)
        # Drop victims we never needed, worst preference first.
        for instance in reversed(eligible):
            without = freed.monus(instance.request.resources)
            if request.resources.fits(free + without):
                chosen.remove(instance)
                freed = without
        return chosen

    def _preempt(self, victim: RunningInstance, t: int, by: str):
        if not victim.request.is_preemptible:
            raise SchedulerError("refusing to preempt normal instance %s"
                                 % victim.request_id)
        elapsed = t - victim.start_time
        self.ledger.accrue(victim.request.user, victim.request.resources.cpus * elapsed, t)
        self._drop_running(victim, t)
        self._emit(t, "instance_preempted", request_id=victim.request_id,
                   user=victim.request.user, cpus=victim.request.resources.cpus,
                   node=victim.node_id, bid=victim.request.bid, preempted_by=by)

    def _drop_running(self, instance: RunningInstance, t: int):
        del self.running[instance.request_id]
        group = instance.request.group
        self.group_running[group] = self.group_running[group] - instance.request.resources
        transition = self.pool.unassign(instance.request_id, instance.request.resources,
                                        instance.node_id, t)
        if transition is not None:
            self._emit(t, "role_changed", node=transition.node_id,
                       from_role=transition.from_role, to_role=transition.to_role,
                       state=transition.state)

    # -- dispatch ---------------------------------------------------------

    def _start(self, request: InstanceRequest, t: int) -> RunningInstance:
        node_id = self.pool.assign(request.request_id, request.resources, t)
        instance = RunningInstance(request=request, start_time=t, node_id=node_id)
        self.running[request.request_id] = instance
        group = request.group
        self.group_running[group] = (
            self.group_running.get(group, ResourceVector.zero()) + request.resources)
        self._emit(t, "instance_started", request_id=request.request_id,
                   user=request.user, group=request.group,
                   cpus=request.resources.cpus, mem_mb=request.resources.mem_mb,
                   disk_gb=request.resources.disk_gb, node=node_id,
                   bid=request.bid, waited_s=t - request.arrival_time)
        return instance

    def _startable(self, request: InstanceRequest, t: int):
        """(True, victims) when the request can run now, else (False, None)."""
        if not self.quota_allows(request):
            return False, None
        if request.resources.fits(self.free()):
            return True, []
        try:
            return True, self.select_victims(request, t)
        except InfeasiblePreemptionError:
            return False, None

    def dispatch(self, t: int) -> list[RunningInstance]:
        """Start queued work, highest fair-share priority first.

        With backfill on, lower-priority requests that fit may start while a
        bigger head waits; with backfill off dispatch stops at the first head
        that cannot start.
        """
        started: list[RunningInstance] = []
        while self.queue:
            order = self.ordered_queue(t)
            chosen = None
            if self.backfill:
                for request in order:
                    ok, victims = self._startable(request, t)
                    if ok:
                        chosen = (request, victims)
                        break
            else:
                ok, victims = self._startable(order[0], t)
                if ok:
                    chosen = (order[0], victims)
            if chosen is None:
                break
            request, victims = chosen
            for victim in victims:
                self._preempt(victim, t, by=request.request_id)
            self.queue.remove(request)
            started.append(self._start(request, t))
        return started

    # -- lifecycle --------------------------------------------------------

    def release(self, request_id: str, t: int, reason: str = "released"):
        """Return capacity, accrue cpus x elapsed to the owner, re-dispatch."""
        instance = self.running.get(request_id)
        if instance is None:
            raise UnknownInstanceError("no running instance %r" % request_id)
        elapsed = t - instance.start_time
        self.ledger.accrue(instance.request.user, instance.request.resources.cpus * elapsed, t)
        self._drop_running(instance, t)
        self._emit(t, "instance_released", request_id=request_id,
                   user=instance.request.user, cpus=instance.request.resources.cpus,
                   node=instance.node_id, reason=reason)
        self.dispatch(t)

    def kill_running(self, t: int) -> list[RunningInstance]:
        """Terminate everything running (site failure); usage still accrues."""
        killed = []
        for request_id in sorted(self.running):
            instance = self.running[request_id]
            elapsed = t - instance.start_time
            self.ledger.accrue(instance.request.user,
                               instance.request.resources.cpus * elapsed, t)
            self._drop_running(instance, t)
            self._emit(t, "instance_killed", request_id=request_id,
                       user=instance.request.user, cpus=instance.request.resources.cpus,
                       node=instance.node_id)
            killed.append(instance)
        return killed

    def cancel_queued(self, request_id: str, t: int) -> bool:
        for request in self.queue:
            if request.request_id == request_id:
                self.queue.remove(request)
                self._emit(t, "request_cancelled", request_id=request_id)
                return True
        return False

    # -- audits -----------------------------------------------------------

    def audit(self, t: int):
        """Cross-check incremental accounting against first principles."""
        by_node: dict[str, ResourceVector] = {}
        for instance in self.running.values():
            by_node[instance.node_id] = (
                by_node.get(instance.node_id, ResourceVector.zero())
                + instance.request.resources)
        for node_id, node in self.pool.nodes.items():
            expected = by_node.get(node_id, ResourceVector.zero())
            if node.used != expected:
                raise SchedulerError(
                    "node %s used %s but running instances sum to %s"
                    % (node_id, node.used, expected))
        running_on_cloud = ResourceVector.total(
            i.request.resources for i in self.running.values()
            if self.pool.is_schedulable(self.pool.nodes[i.node_id]))
        if self.free() + running_on_cloud != self.capacity():
            raise SchedulerError(
                "conservation violated at t=%d: free %s + running %s != capacity %s"
                % (t, self.free(), running_on_cloud, self.capacity()))
        for group, used in self.group_running.items():
            cap = self.quotas.get(group)
            if cap is not None and not used.fits(cap):
                raise SchedulerError("group %s exceeds quota: %s > %s" % (group, used, cap))
