"""One simulated IaaS site: node pool, scheduler, elasticity, monitoring."""

from __future__ import annotations

from dataclasses import dataclass

from .elasticity import ElasticityManager, ElasticPolicy, NodePool, PartitionDirector
from .resources import ResourceVector
from .scheduler import SiteScheduler


@dataclass
class Site:
    site_id: str
    pool: NodePool
    scheduler: SiteScheduler
    elastic: ElasticityManager
    director: PartitionDirector
    availability: float = 1.0
    latency_ms: float = 0.0
    failed_until: int | None = None

    def failed(self, t: int) -> bool:
        return self.failed_until is not None and t < self.failed_until

    def potential_free_capacity(self) -> ResourceVector:
        """What the site could offer a new deployment.

        Counts current free space, nodes that elasticity could power on, and
        capacity held by preemptible instances (reclaimable by normal work).
        """
        reclaimable = ResourceVector.total(
            i.request.resources for i in self.scheduler.running.values()
            if i.request.is_preemptible
            and self.pool.is_schedulable(self.pool.nodes[i.node_id]))
        return self.pool.potential_capacity() + reclaimable


def make_site(site_id: str, nodes, *, availability: float = 1.0,
              latency_ms: float = 0.0, policy: ElasticPolicy | None = None,
              half_life_s: float = 3600.0, backfill: bool = True,
              weights: dict[str, float] | None = None,
              quotas: dict[str, ResourceVector] | None = None,
              log=None, t: int = 0) -> Site:
    pool = NodePool(list(nodes), t=t)
    scheduler = SiteScheduler(site_id, pool, half_life_s=half_life_s,
                              backfill=backfill, weights=weights,
                              quotas=quotas, log=log)
    return Site(site_id=site_id, pool=pool, scheduler=scheduler,
                elastic=ElasticityManager(policy),
                director=PartitionDirector(pool),
                availability=availability, latency_ms=latency_ms)
