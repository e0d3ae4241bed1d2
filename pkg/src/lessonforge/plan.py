"""The Formatter: block model of a lesson plan and its markdown round trip.

Generated outlines arrive as markdown following a deliberately small
grammar: a section starts with ``# `` at column 0, its instructional
events are ``## `` lines naming an event, the planned time is a ``### ``
line like ``### 5 minutes``, and everything else is section content kept
verbatim.  The parser is total: malformed input degrades to warnings,
never to an exception, and the caller decides whether to re-prompt.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field, replace
from typing import Iterable

from .pedagogy import Event, Registry

PREAMBLE_TITLE = "Introduction"


class PlanError(Exception):
    """Base class for plan manipulation failures."""


class UnknownSection(PlanError):
    def __init__(self, section_id: str):
        super().__init__(f"no section with id {section_id!r}")
        self.section_id = section_id


class IndexOutOfRange(PlanError):
    def __init__(self, index: int, size: int):
        super().__init__(f"index {index} outside [0, {size}]")


class InvalidPlan(PlanError):
    """A plan or section invariant does not hold."""


def new_section_id() -> str:
    return "sec-" + uuid.uuid4().hex[:12]


@dataclass(frozen=True)
class LessonMeta:
    course_name: str
    lesson_topic: str
    student_stage: str


@dataclass(frozen=True)
class Section:
    """One h1-delimited block of the plan."""

    title: str
    events: tuple[Event, ...] = ()
    minutes: int | None = None
    content: str = ""
    ignored: bool = False
    edited: bool = False
    id: str = field(default_factory=new_section_id)


@dataclass(frozen=True)
class LessonPlan:
    meta: LessonMeta
    goals: str = ""
    sections: tuple[Section, ...] = ()

    def section(self, section_id: str) -> Section:
        for sec in self.sections:
            if sec.id == section_id:
                return sec
        raise UnknownSection(section_id)

    def index_of(self, section_id: str) -> int:
        for i, sec in enumerate(self.sections):
            if sec.id == section_id:
                return i
        raise UnknownSection(section_id)


@dataclass(frozen=True)
class ParseWarning:
    line: int
    code: str
    message: str


_MINUTES_RE_CACHE: dict[str, re.Pattern[str]] = {}


def _minutes_re(minutes_word: str) -> re.Pattern[str]:
    pattern = _MINUTES_RE_CACHE.get(minutes_word)
    if pattern is None:
        pattern = re.compile(r"^(\d+)\s*" + re.escape(minutes_word) + r"$", re.IGNORECASE)
        _MINUTES_RE_CACHE[minutes_word] = pattern
    return pattern


class _SectionBuilder:
    def __init__(self, title: str):
        self.title = title
        self.events: list[Event] = []
        self.minutes: int | None = None
        self.content_lines: list[str] = []

    def build(self) -> Section:
        return Section(
            title=self.title,
            events=tuple(self.events),
            minutes=self.minutes,
            content="\n".join(self.content_lines),
        )


def parse_outline(
    raw: str, registry: Registry, minutes_word: str = "minutes"
) -> tuple[list[Section], list[ParseWarning]]:
    """Split raw generated markdown into sections.

    Returns the parsed sections plus warnings for every place the input
    strayed from the grammar.  Text before the first ``# `` heading becomes
    a preamble section titled "Introduction".
    """
    warnings: list[ParseWarning] = []
    sections: list[Section] = []
    current: _SectionBuilder | None = None
    pending_blanks: list[str] = []
    saw_heading = False
    minutes_pattern = _minutes_re(minutes_word)

    def warn(line_no: int, code: str, message: str) -> None:
        warnings.append(ParseWarning(line=line_no, code=code, message=message))

    def flush() -> None:
        nonlocal current
        if current is not None:
            sections.append(current.build())
            current = None

    lines = raw.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    for line_no, line in enumerate(lines, start=1):
        if line.startswith("# "):
            title = line[2:].strip()
            if title:
                flush()
                current = _SectionBuilder(title)
                saw_heading = True
                pending_blanks.clear()
                continue
            warn(line_no, "empty_title", "section heading with empty title kept as content")
        if current is None:
            if not line.strip():
                pending_blanks.append(line)
                continue
            if not saw_heading:
                warn(line_no, "preamble", "content before the first section heading")
            current = _SectionBuilder(PREAMBLE_TITLE)
            current.content_lines.extend(pending_blanks)
            pending_blanks.clear()
        if line.startswith("## ") and not line.startswith("### "):
            heading = line[3:].strip()
            event = registry.match_heading(heading)
            if event is None:
                warn(line_no, "unknown_event", f"unrecognized event heading {heading!r}")
                current.content_lines.append(line)
            elif event in current.events:
                warn(line_no, "duplicate_event", f"event {heading!r} repeated in section")
            else:
                current.events.append(event)
            continue
        if line.startswith("### "):
            rest = line[4:].strip()
            match = minutes_pattern.match(rest)
            if match and int(match.group(1)) >= 1:
                if current.minutes is None:
                    current.minutes = int(match.group(1))
                else:
                    warn(line_no, "duplicate_minutes", "extra time heading ignored")
                continue
            warn(line_no, "bad_minutes", f"time heading without a whole number {rest!r}")
            current.content_lines.append(line)
            continue
        current.content_lines.append(line)
    flush()
    return sections, warnings


def serialize_section(section: Section, registry: Registry, minutes_word: str = "minutes") -> str:
    lines = [f"# {section.title}"]
    for event in section.events:
        lines.append(f"## {registry.display_name(event)}")
    if section.minutes is not None:
        lines.append(f"### {section.minutes} {minutes_word}")
    text = "\n".join(lines) + "\n"
    if section.content:
        text += section.content
        if not section.content.endswith("\n"):
            text += "\n"
    return text


def serialize_plan(
    plan: LessonPlan,
    registry: Registry,
    include_ignored: bool = True,
    minutes_word: str = "minutes",
) -> str:
    """Export markdown: LF endings, one blank line between sections.

    Ignored sections stay in the output by default; their content is kept
    unchanged in the final file.
    """
    blocks = [
        serialize_section(sec, registry, minutes_word)
        for sec in plan.sections
        if include_ignored or not sec.ignored
    ]
    return "\n".join(blocks)


# -- structural edits ---------------------------------------------------
#
# All edits are pure: they return a new plan or section and leave every
# other section untouched.


def insert_section(plan: LessonPlan, index: int, title: str) -> LessonPlan:
    if not title.strip():
        raise InvalidPlan("section title must be non-empty")
    if not 0 <= index <= len(plan.sections):
        raise IndexOutOfRange(index, len(plan.sections))
    section = Section(title=title, edited=True)
    sections = plan.sections[:index] + (section,) + plan.sections[index:]
    return replace(plan, sections=sections)


def delete_section(plan: LessonPlan, section_id: str) -> LessonPlan:
    index = plan.index_of(section_id)
    return replace(plan, sections=plan.sections[:index] + plan.sections[index + 1 :])


def set_ignored(plan: LessonPlan, section_id: str, flag: bool) -> LessonPlan:
    index = plan.index_of(section_id)
    updated = replace(plan.sections[index], ignored=flag)
    return _swap(plan, index, updated)


def replace_section(plan: LessonPlan, section: Section) -> LessonPlan:
    return _swap(plan, plan.index_of(section.id), section)


def _swap(plan: LessonPlan, index: int, section: Section) -> LessonPlan:
    sections = plan.sections[:index] + (section,) + plan.sections[index + 1 :]
    return replace(plan, sections=sections)


def set_events(section: Section, events: Iterable[Event]) -> Section:
    deduped: list[Event] = []
    for event in events:
        if event not in deduped:
            deduped.append(event)
    return replace(section, events=tuple(deduped), edited=True)


def edit_title(section: Section, title: str) -> Section:
    if not title.strip():
        raise InvalidPlan("section title must be non-empty")
    return replace(section, title=title, edited=True)


def edit_content(section: Section, markdown: str) -> Section:
    return replace(section, content=markdown, edited=True)


def set_minutes(section: Section, minutes: int | None) -> Section:
    if minutes is not None and minutes < 1:
        raise InvalidPlan("minutes must be at least 1")
    return replace(section, minutes=minutes, edited=True)


def validate_plan(plan: LessonPlan) -> None:
    """Raise InvalidPlan when any structural invariant is broken."""
    for name in ("course_name", "lesson_topic", "student_stage"):
        if not getattr(plan.meta, name):
            raise InvalidPlan(f"meta field {name} must be non-empty")
    seen: set[str] = set()
    for sec in plan.sections:
        if sec.id in seen:
            raise InvalidPlan(f"duplicate section id {sec.id}")
        seen.add(sec.id)
        if not sec.title:
            raise InvalidPlan("section title must be non-empty")
        if len(set(sec.events)) != len(sec.events):
            raise InvalidPlan(f"section {sec.id} has duplicate events")
        if sec.minutes is not None and sec.minutes < 1:
            raise InvalidPlan(f"section {sec.id} has minutes < 1")


# -- interchange documents ----------------------------------------------


def meta_to_doc(meta: LessonMeta) -> dict:
    return {
        "course_name": meta.course_name,
        "lesson_topic": meta.lesson_topic,
        "student_stage": meta.student_stage,
    }


def meta_from_doc(doc: dict) -> LessonMeta:
    return LessonMeta(
        course_name=str(doc.get("course_name", "")),
        lesson_topic=str(doc.get("lesson_topic", "")),
        student_stage=str(doc.get("student_stage", "")),
    )


def section_to_doc(section: Section) -> dict:
    return {
        "id": section.id,
        "title": section.title,
        "events": [e.value for e in section.events],
        "minutes": section.minutes,
        "content": section.content,
        "ignored": section.ignored,
        "edited": section.edited,
    }


def section_from_doc(doc: dict) -> Section:
    return Section(
        id=str(doc["id"]),
        title=str(doc["title"]),
        events=tuple(Event(v) for v in doc.get("events", [])),
        minutes=doc.get("minutes"),
        content=str(doc.get("content", "")),
        ignored=bool(doc.get("ignored", False)),
        edited=bool(doc.get("edited", False)),
    )


def plan_to_doc(plan: LessonPlan) -> dict:
    return {
        "meta": meta_to_doc(plan.meta),
        "goals": plan.goals,
        "sections": [section_to_doc(s) for s in plan.sections],
    }


def plan_from_doc(doc: dict) -> LessonPlan:
    return LessonPlan(
        meta=meta_from_doc(doc.get("meta", {})),
        goals=str(doc.get("goals", "")),
        sections=tuple(section_from_doc(s) for s in doc.get("sections", [])),
    )
