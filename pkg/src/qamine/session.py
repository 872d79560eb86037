"""Search-session event log: schema, parsing, sessionization, impressions.

Log lines are JSON objects::

    {"session": "s1", "ts": 0, "kind": "query", "text": "body temp"}
    {"session": "s1", "ts": 120, "kind": "serp", "qp": "qp00017"}
    {"session": "s1", "ts": 2400, "kind": "click", "target": "answer"}

An impression is one ``serp`` event. Its window runs from the serp event to
the next ``query`` event of the same session (exclusive) or to the end of the
session; clicks inside the window belong to the impression.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .errors import InvalidTarget, MalformedLine, OrphanEvent


class EventKind(enum.Enum):
    QUERY = "query"
    SERP = "serp"
    CLICK = "click"


class ClickTarget(enum.Enum):
    ANSWER = "answer"
    ANSWER_EXPANSION = "answer_expansion"
    OUTSIDE_ANSWER = "outside_answer"
    RELATED = "related"


_KINDS = {k.value: k for k in EventKind}
_TARGETS = {t.value: t for t in ClickTarget}


class SessionEvent(NamedTuple):
    session_id: str
    ts_ms: int
    kind: EventKind
    text: str | None = None
    qp_id: str | None = None
    target: ClickTarget | None = None

    def to_json(self) -> str:
        rec: dict[str, object] = {"session": self.session_id, "ts": self.ts_ms, "kind": self.kind.value}
        if self.kind is EventKind.QUERY:
            rec["text"] = self.text
        elif self.kind is EventKind.SERP:
            rec["qp"] = self.qp_id
        else:
            rec["target"] = self.target.value  # type: ignore[union-attr]
        return json.dumps(rec, ensure_ascii=False, separators=(",", ":"))


@dataclass(frozen=True, slots=True)
class Session:
    session_id: str
    events: tuple[SessionEvent, ...]


class TerminalClickPolicy(enum.Enum):
    """How to score a click that is the last event of its session."""

    SATISFIED = "satisfied"
    UNSATISFIED = "unsatisfied"


class ImpressionSignals(NamedTuple):
    qp_id: str
    answer_click: bool
    answer_exp_click: bool
    ot_answer_click: bool
    related_click: bool
    answer_only: bool
    ot_only: bool
    both_click: bool
    no_click: bool
    answer_sat_click: bool
    ot_sat_click: bool
    reformulated: bool
    abandoned: bool
    serp_dwell_ms: int
    source_dwell_ms: int | None

    def as_vector(self) -> list[float]:
        """Per-impression model input in ``IMPRESSION_VECTOR_FIELDS`` order."""
        v = [float(getattr(self, name)) for name in IMPRESSION_VECTOR_FIELDS[:-1]]
        v.append(float(self.source_dwell_ms or 0))
        return v


# Fixed per-impression vector order used by the label-aggregation strategy.
# source_dwell_ms is encoded as 0 when absent.
IMPRESSION_VECTOR_FIELDS = (
    "answer_click",
    "answer_exp_click",
    "ot_answer_click",
    "related_click",
    "answer_only",
    "ot_only",
    "both_click",
    "no_click",
    "answer_sat_click",
    "ot_sat_click",
    "reformulated",
    "abandoned",
    "serp_dwell_ms",
    "source_dwell_ms",
)
IMPRESSION_ORDER_VERSION = "impression-v1"


_decode = json.JSONDecoder().decode


def _field(obj: dict, key: str, typ: type, line_no: int):
    val = obj.get(key)
    # bool is an int subclass; a boolean timestamp is still malformed
    if type(val) is not typ:
        if val is None and key not in obj:
            raise MalformedLine(line_no, f"missing field {key!r}")
        raise MalformedLine(line_no, f"field {key!r} has wrong type")
    return val


def parse_line(line: str, line_no: int) -> SessionEvent:
    try:
        obj = _decode(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(line_no, "invalid JSON") from exc
    if type(obj) is not dict:
        raise MalformedLine(line_no, "not an object")
    sid = _field(obj, "session", str, line_no)
    ts = _field(obj, "ts", int, line_no)
    if ts < 0:
        raise MalformedLine(line_no, "negative ts")
    kind = _KINDS.get(_field(obj, "kind", str, line_no))
    if kind is None:
        raise MalformedLine(line_no, f"unknown kind {obj['kind']!r}")
    if kind is EventKind.QUERY:
        return SessionEvent(sid, ts, kind, _field(obj, "text", str, line_no), None, None)
    if kind is EventKind.SERP:
        return SessionEvent(sid, ts, kind, None, _field(obj, "qp", str, line_no), None)
    if "target" not in obj:
        raise MalformedLine(line_no, "missing field 'target'")
    raw = obj["target"]
    target = _TARGETS.get(raw) if type(raw) is str else None
    if target is None:
        raise InvalidTarget(line_no, raw)
    return SessionEvent(sid, ts, kind, None, None, target)


def iter_events(lines: Iterable[str]) -> Iterator[SessionEvent]:
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        yield parse_line(line, line_no)


def parse_log(lines: Iterable[str]) -> list[SessionEvent]:
    """Parse JSON Lines into events, preserving input order.

    Blank lines are skipped but still counted for line numbers (1-based).
    """
    return list(iter_events(lines))


def build_sessions(events: Iterable[SessionEvent]) -> list[Session]:
    groups: dict[str, list[SessionEvent]] = {}
    for ev in events:
        groups.setdefault(ev.session_id, []).append(ev)
    sessions = []
    for sid, evs in groups.items():
        # list.sort is stable, so equal timestamps keep input order
        evs.sort(key=lambda e: e.ts_ms)
        seen_query = False
        for ev in evs:
            if ev.kind is EventKind.QUERY:
                seen_query = True
            elif not seen_query:
                raise OrphanEvent(sid)
        sessions.append(Session(sid, tuple(evs)))
    return sessions


def extract_impressions(
    session: Session,
    sat_threshold_ms: int,
    terminal_policy: TerminalClickPolicy = TerminalClickPolicy.SATISFIED,
) -> list[ImpressionSignals]:
    if sat_threshold_ms <= 0:
        raise ValueError("sat_threshold_ms must be positive")
    events = session.events
    n = len(events)
    last_ts = events[-1].ts_ms

    # index of the next query strictly after each position, or n
    next_query = [n] * (n + 1)
    for i in range(n - 1, -1, -1):
        next_query[i] = i + 1 if i + 1 < n and events[i + 1].kind is EventKind.QUERY else next_query[i + 1]

    def click_dwell(i: int) -> int:
        if i + 1 < n:
            return events[i + 1].ts_ms - events[i].ts_ms
        return sat_threshold_ms if terminal_policy is TerminalClickPolicy.SATISFIED else 0

    out = []
    for i, ev in enumerate(events):
        if ev.kind is not EventKind.SERP:
            continue
        end = next_query[i]
        answer = exp = ot = related = False
        answer_sat = ot_sat = False
        source_dwell = None
        for j in range(i + 1, end):
            e = events[j]
            if e.kind is not EventKind.CLICK:
                continue
            t = e.target
            if t is ClickTarget.ANSWER:
                d = click_dwell(j)
                if not answer:
                    source_dwell = d
                answer = True
                answer_sat = answer_sat or d >= sat_threshold_ms
            elif t is ClickTarget.OUTSIDE_ANSWER:
                ot = True
                ot_sat = ot_sat or click_dwell(j) >= sat_threshold_ms
            elif t is ClickTarget.ANSWER_EXPANSION:
                exp = True
            else:
                related = True
        reformulated = end < n
        no_click = not (answer or exp or ot or related)
        serp_end = events[end].ts_ms if reformulated else last_ts
        out.append(
            ImpressionSignals(
                qp_id=ev.qp_id,  # type: ignore[arg-type]
                answer_click=answer,
                answer_exp_click=exp,
                ot_answer_click=ot,
                related_click=related,
                answer_only=answer and not ot,
                ot_only=ot and not answer,
                both_click=answer and ot,
                no_click=no_click,
                answer_sat_click=answer_sat,
                ot_sat_click=ot_sat,
                reformulated=reformulated,
                abandoned=no_click and not reformulated,
                serp_dwell_ms=serp_end - ev.ts_ms,
                source_dwell_ms=source_dwell,
            )
        )
    return out


def impressions_from_lines(
    lines: Iterable[str],
    sat_threshold_ms: int,
    terminal_policy: TerminalClickPolicy = TerminalClickPolicy.SATISFIED,
) -> list[ImpressionSignals]:
    """parse_log -> build_sessions -> extract_impressions, concatenated."""
    out: list[ImpressionSignals] = []
    for s in build_sessions(iter_events(lines)):
        out.extend(extract_impressions(s, sat_threshold_ms, terminal_policy))
    return out


def events_to_lines(events: Sequence[SessionEvent]) -> list[str]:
    return [e.to_json() for e in events]
