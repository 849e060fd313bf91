"""Interaction instrumentation: session recording, replay, and the study
metrics -- Hausdorff composition error, completion time, command count.

Session logs are JSON-lines, one event per line, appendable and
diff-friendly. Stamps are sim-clock seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EVENT_KINDS = (
    "target_command",
    "mission_status",
    "pose_sample",
    "anchor_change",
    "task_begin",
    "task_end",
)


class EmptySet(ValueError):
    """Hausdorff distance of an empty point set is undefined."""


class UnmatchedTask(ValueError):
    """task_begin/task_end events do not pair up."""


class LogFormatError(ValueError):
    """Malformed session log."""


@dataclass(frozen=True)
class SessionEvent:
    stamp: float
    kind: str
    payload: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise LogFormatError(f"unknown event kind {self.kind!r}")

    def to_json(self) -> str:
        return json.dumps({"stamp": self.stamp, "kind": self.kind, **self.payload}, sort_keys=True)


@dataclass
class SessionLog:
    events: list[SessionEvent] = field(default_factory=list)

    def append(self, event: SessionEvent) -> None:
        if self.events and event.stamp < self.events[-1].stamp - 1e-12:
            raise LogFormatError("event stamps must be non-decreasing")
        self.events.append(event)

    def add(self, stamp: float, kind: str, **payload) -> None:
        self.append(SessionEvent(stamp, kind, payload))

    def of_kind(self, kind: str) -> list[SessionEvent]:
        return [e for e in self.events if e.kind == kind]

    def save(self, path) -> None:
        Path(path).write_text("".join(e.to_json() + "\n" for e in self.events))

    @classmethod
    def load(cls, path) -> "SessionLog":
        log = cls()
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                stamp = float(doc.pop("stamp"))
                kind = doc.pop("kind")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise LogFormatError(f"line {lineno}: {e}") from e
            log.append(SessionEvent(stamp, kind, doc))
        return log


@dataclass(frozen=True)
class TaskSpec:
    """Pre-designated target positions, map frame meters."""

    positions: np.ndarray  # (N, 3)

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if len(p) == 0:
            raise ValueError("task spec must contain at least one position")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @classmethod
    def load(cls, path) -> "TaskSpec":
        doc = json.loads(Path(path).read_text())
        return cls(np.asarray(doc["positions"], dtype=float))


def hausdorff_distance(a, b) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet("point sets must be non-empty")
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def composition_error(designated, user_set) -> float:
    """Set-level discrepancy between designated and user-set positions."""
    return hausdorff_distance(designated, user_set)


def paired_error(designated, user_set) -> float:
    """Secondary statistic: sum of per-task Euclidean errors, index-paired."""
    a = np.asarray(designated, dtype=float).reshape(-1, 3)
    b = np.asarray(user_set, dtype=float).reshape(-1, 3)
    if len(a) != len(b):
        raise ValueError("paired error needs equally many designated and user positions")
    if len(a) == 0:
        raise EmptySet("point sets must be non-empty")
    return float(np.linalg.norm(a - b, axis=1).sum())


def _task_spans(log: SessionLog) -> list[tuple[float, float, dict]]:
    open_stack: list[SessionEvent] = []
    spans = []
    for e in log.events:
        if e.kind == "task_begin":
            open_stack.append(e)
        elif e.kind == "task_end":
            if not open_stack:
                raise UnmatchedTask(f"task_end at {e.stamp} without open task_begin")
            begin = open_stack.pop()
            spans.append((begin.stamp, e.stamp, begin.payload))
    if open_stack:
        raise UnmatchedTask(f"task_begin at {open_stack[-1].stamp} never ended")
    return spans


def completion_time(log: SessionLog) -> dict:
    """Trial timing: total span, per-task durations, first-task duration."""
    spans = _task_spans(log)
    if not spans:
        raise UnmatchedTask("log contains no task spans")
    total = spans[-1][1] - spans[0][0]
    per_task = [end - start for start, end, _ in spans]
    return {"total": total, "per_task": per_task, "first_target": per_task[0]}


def command_count(log: SessionLog) -> int:
    return len(log.of_kind("target_command"))


def final_targets_per_task(log: SessionLog) -> np.ndarray:
    """Last target command inside each task span (retries superseded)."""
    spans = _task_spans(log)
    out = []
    for start, end, _ in spans:
        last = None
        for e in log.of_kind("target_command"):
            if start - 1e-12 <= e.stamp <= end + 1e-12:
                last = e
        if last is not None:
            out.append(last.payload["position"])
    return np.asarray(out, dtype=float).reshape(-1, 3)


def session_report(log: SessionLog, tasks: TaskSpec | None = None) -> dict:
    """The study metrics for one session, JSON-serializable."""
    report: dict = {"command_count": command_count(log)}
    try:
        report["completion_time"] = completion_time(log)
    except UnmatchedTask:
        report["completion_time"] = None
    if tasks is not None:
        user = final_targets_per_task(log)
        if len(user):
            report["composition_error"] = composition_error(tasks.positions, user)
            if len(user) == len(tasks.positions):
                report["paired_error"] = paired_error(tasks.positions, user)
    return report


def format_report(report: dict) -> str:
    lines = [f"command_count (N_c): {report['command_count']}"]
    ct = report.get("completion_time")
    if ct:
        lines.append(f"completion_time (T_c): {ct['total']:.3f} s")
        lines.append(f"first_target time:     {ct['first_target']:.3f} s")
        per = " ".join(f"{t:.3f}" for t in ct["per_task"])
        lines.append(f"per_task:              [{per}]")
    if "composition_error" in report:
        lines.append(f"composition_error (eps_c): {report['composition_error']:.6f} m")
    if "paired_error" in report:
        lines.append(f"paired_error (secondary):  {report['paired_error']:.6f} m")
    return "\n".join(lines)


def replay_events(log: SessionLog, speed: float = 1.0):
    """Deterministic (emit_time, event) stream with stamps scaled by 1/speed.

    speed=math.inf is batch mode: all emit times are 0, ordering preserved,
    so stamp-based metrics are unchanged.
    """
    if not speed > 0:
        raise ValueError("speed must be > 0")
    if not log.events:
        return
    t0 = log.events[0].stamp
    for e in log.events:
        emit = 0.0 if math.isinf(speed) else (e.stamp - t0) / speed
        yield emit, e
