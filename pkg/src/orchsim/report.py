"""Run reports: ordered event log, metrics, serialization and replay checks.

A report serializes to line-delimited JSON records with fixed field order so
two runs of the same scenario compare byte for byte.  The replay verifier
re-derives every metric from the event log alone and must match the metrics
the simulator accumulated incrementally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DomainError

# Record kinds that end a running instance's occupancy.
_STOP_KINDS = ("instance_released", "instance_preempted", "instance_killed")


class ReportError(DomainError):
    pass


class VerificationError(ReportError):
    pass


class EventLog:
    """Append-only, totally ordered by (t, seq); seq is the append index."""

    def __init__(self):
        self.records: list[dict] = []
        self._listeners = []

    def listen(self, callback):
        self._listeners.append(callback)

    def emit(self, t: int, kind: str, **payload):
        record = {"t": t, "seq": len(self.records), "kind": kind}
        record.update(payload)
        self.records.append(record)
        for listener in self._listeners:
            listener(record)
        return record


def render_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=True)


@dataclass
class RunReport:
    seed: int
    horizon_s: int
    records: list[dict] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def event_log_text(self) -> str:
        return "\n".join(render_record(r) for r in self.records) + "\n"

    def to_text(self) -> str:
        lines = [render_record({"record": "header", "seed": self.seed,
                                "horizon_s": self.horizon_s})]
        lines.extend(render_record(r) for r in self.records)
        lines.append(render_record({"record": "metrics", "metrics": self.metrics}))
        return "\n".join(lines) + "\n"


def write_report(report: RunReport, path: str):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(report.to_text())


def load_report(path: str) -> RunReport:
    try:
        with open(path, encoding="utf-8") as handle:
            return parse_report(handle.read())
    except OSError as exc:
        raise ReportError("cannot read report %r: %s" % (path, exc)) from exc


def parse_report(text: str) -> RunReport:
    header = None
    metrics = None
    records = []
    for line in text.splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        if data.get("record") == "header":
            header = data
        elif data.get("record") == "metrics":
            metrics = data["metrics"]
        else:
            records.append(data)
    if header is None or metrics is None:
        raise ReportError("report is missing header or metrics record")
    return RunReport(seed=header["seed"], horizon_s=header["horizon_s"],
                     records=records, metrics=metrics)


class MetricsAccumulator:
    """Incremental metrics kept during a run (one of the two derivations)."""

    def __init__(self, horizon_s: int):
        self.horizon_s = horizon_s
        self.site_cpus: dict[str, int] = {}
        self._running_cpus: dict[str, int] = {}
        self._last_t: dict[str, int] = {}
        self.cpu_area: dict[str, int] = {}
        self.series: dict[str, list[list[int]]] = {}
        self.user_cpu_seconds: dict[str, int] = {}
        self._starts: dict[tuple[str, str], tuple[int, int, str]] = {}
        self.preemptions = 0
        self.wait_total_s = 0
        self.wait_count = 0
        self.deployments: dict[str, dict] = {}

    def define_site(self, site_id: str, cpus: int):
        self.site_cpus[site_id] = self.site_cpus.get(site_id, 0) + cpus
        self._running_cpus.setdefault(site_id, 0)
        self._last_t.setdefault(site_id, 0)
        self.cpu_area.setdefault(site_id, 0)
        self.series.setdefault(site_id, [])

    def _advance(self, site_id: str, t: int):
        self.cpu_area[site_id] += self._running_cpus[site_id] * (t - self._last_t[site_id])
        self._last_t[site_id] = t

    def observe(self, record: dict):
        kind = record.get("kind")
        if kind == "site_node":
            self.define_site(record["site"], record["cpus"])
        elif kind == "instance_started":
            site, t = record["site"], record["t"]
            self._advance(site, t)
            self._running_cpus[site] += record["cpus"]
            self.series[site].append([t, self._running_cpus[site]])
            self.wait_total_s += record["waited_s"]
            self.wait_count += 1
            self._starts[(site, record["request_id"])] = (t, record["cpus"], record["user"])
        elif kind in _STOP_KINDS:
            site, t = record["site"], record["t"]
            start = self._starts.pop((site, record["request_id"]), None)
            if start is None:
                return
            started_at, cpus, user = start
            self._advance(site, t)
            self._running_cpus[site] -= cpus
            self.series[site].append([t, self._running_cpus[site]])
            self.user_cpu_seconds[user] = (
                self.user_cpu_seconds.get(user, 0) + cpus * (t - started_at))
            if kind == "instance_preempted":
                self.preemptions += 1
        elif kind == "deployment_state":
            self.deployments[record["uuid"]] = {
                "state": record["state"], "site": record.get("site")}

    def finalize(self) -> dict:
        horizon = self.horizon_s
        for (site, _request_id), (started_at, cpus, user) in sorted(self._starts.items()):
            # Still running at the horizon: count the elapsed fraction.
            self.user_cpu_seconds[user] = (
                self.user_cpu_seconds.get(user, 0) + cpus * (horizon - started_at))
        per_site = {}
        for site in sorted(self.site_cpus):
            self._advance(site, horizon)
            capacity_area = self.site_cpus[site] * horizon
            per_site[site] = {
                "cpu_capacity": self.site_cpus[site],
                "cpu_seconds_used": self.cpu_area[site],
                "cpu_capacity_seconds": capacity_area,
                "cpu_utilization": (self.cpu_area[site] / capacity_area
                                    if capacity_area else 0.0),
                "series": self.series[site],
            }
        return {
            "per_site": per_site,
            "per_user_cpu_seconds": {u: self.user_cpu_seconds[u]
                                     for u in sorted(self.user_cpu_seconds)},
            "preemptions": self.preemptions,
            "wait": {
                "count": self.wait_count,
                "total_s": self.wait_total_s,
                "mean_s": (self.wait_total_s / self.wait_count
                           if self.wait_count else 0.0),
            },
            "deployments": {u: self.deployments[u] for u in sorted(self.deployments)},
        }


def derive_metrics(records: list[dict], horizon_s: int) -> dict:
    """Re-derive the metrics from an event log alone.

    This is a deliberately separate implementation from MetricsAccumulator:
    it reconstructs per-instance intervals rather than accumulating live, so
    a bookkeeping bug in either path shows up as a verification mismatch.
    """
    site_cpus: dict[str, int] = {}
    submitted: dict[tuple[str, str], int] = {}
    open_runs: dict[tuple[str, str], dict] = {}
    intervals: list[dict] = []
    changes: dict[str, list[tuple[int, int]]] = {}
    deployments: dict[str, dict] = {}
    preemptions = 0

    for record in records:
        kind = record.get("kind")
        if kind == "site_node":
            site_cpus[record["site"]] = site_cpus.get(record["site"], 0) + record["cpus"]
            changes.setdefault(record["site"], [])
        elif kind == "request_submitted":
            submitted[(record["site"], record["request_id"])] = record["t"]
        elif kind == "instance_started":
            key = (record["site"], record["request_id"])
            open_runs[key] = {"site": record["site"], "user": record["user"],
                              "cpus": record["cpus"], "start": record["t"],
                              "submitted": submitted.get(key, record["t"])}
            changes.setdefault(record["site"], []).append((record["t"], record["cpus"]))
        elif kind in _STOP_KINDS:
            key = (record["site"], record["request_id"])
            run = open_runs.pop(key, None)
            if run is None:
                raise VerificationError("stop without a start: %r" % (record,))
            run["stop"] = record["t"]
            intervals.append(run)
            changes.setdefault(record["site"], []).append((record["t"], -run["cpus"]))
            if kind == "instance_preempted":
                preemptions += 1
        elif kind == "deployment_state":
            deployments[record["uuid"]] = {"state": record["state"],
                                           "site": record.get("site")}

    for key in sorted(open_runs):
        run = open_runs[key]
        run["stop"] = None  # still running at the horizon
        intervals.append(run)

    per_user: dict[str, int] = {}
    used_area: dict[str, int] = {site: 0 for site in site_cpus}
    wait_total = 0
    for run in intervals:
        stop = horizon_s if run["stop"] is None else run["stop"]
        cpu_seconds = run["cpus"] * (stop - run["start"])
        per_user[run["user"]] = per_user.get(run["user"], 0) + cpu_seconds
        used_area[run["site"]] = used_area.get(run["site"], 0) + cpu_seconds
        wait_total += run["start"] - run["submitted"]
    wait_count = len(intervals)

    per_site = {}
    for site in sorted(site_cpus):
        level = 0
        series = []
        for t, delta in changes[site]:
            level += delta
            series.append([t, level])
        capacity_area = site_cpus[site] * horizon_s
        per_site[site] = {
            "cpu_capacity": site_cpus[site],
            "cpu_seconds_used": used_area.get(site, 0),
            "cpu_capacity_seconds": capacity_area,
            "cpu_utilization": (used_area.get(site, 0) / capacity_area
                                if capacity_area else 0.0),
            "series": series,
        }
    return {
        "per_site": per_site,
        "per_user_cpu_seconds": {u: per_user[u] for u in sorted(per_user)},
        "preemptions": preemptions,
        "wait": {
            "count": wait_count,
            "total_s": wait_total,
            "mean_s": wait_total / wait_count if wait_count else 0.0,
        },
        "deployments": {u: deployments[u] for u in sorted(deployments)},
    }


def verify_report(report: RunReport):
    """Re-derive metrics from the event log; any mismatch is an error."""
    derived = derive_metrics(report.records, report.horizon_s)
    if derived != report.metrics:
        raise VerificationError("metrics do not match the event log")
    for earlier, later in zip(report.records, report.records[1:]):
        if (earlier["t"], earlier["seq"]) >= (later["t"], later["seq"]):
            raise VerificationError("event log is not totally ordered")
