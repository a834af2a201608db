"""Shared builders for scheduler/pool fixtures."""

from __future__ import annotations

import pytest

from orchsim.elasticity import NodePool, NodeRecord
from orchsim.resources import ResourceVector
from orchsim.scheduler import InstanceRequest, SiteScheduler


def rv(cpus=0, mem=0, disk=0) -> ResourceVector:
    return ResourceVector(cpus, mem, disk)


def make_pool(*capacities, t=0, prefix="n", power="on") -> NodePool:
    nodes = [NodeRecord(node_id="%s%d" % (prefix, i + 1), capacity=c, power=power)
             for i, c in enumerate(capacities)]
    return NodePool(nodes, t=t)


def make_scheduler(*capacities, **kwargs) -> SiteScheduler:
    pool = make_pool(*capacities)
    return SiteScheduler("site-t", pool, **kwargs)


_COUNTER = {"n": 0}


def req(user="u", group="g", res=None, bid=None, t=0, rid=None) -> InstanceRequest:
    if rid is None:
        _COUNTER["n"] += 1
        rid = "r%06d" % _COUNTER["n"]
    return InstanceRequest(request_id=rid, user=user, group=group,
                           resources=res or rv(1, 1024, 10), bid=bid, arrival_time=t)


@pytest.fixture(autouse=True)
def _reset_request_counter():
    _COUNTER["n"] = 0
    yield
