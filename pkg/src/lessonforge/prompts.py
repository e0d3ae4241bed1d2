"""Prompt rendering: slot substitution, course prefix, event restriction block.

Every prompt the system sends is assembled here, in a fixed order: course
prefix, event restriction block, body with slots substituted, exemplar.
Substitution is literal text replacement with no escaping; rendering is a
pure function of (template, slots).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterable

from .pedagogy import Event, EVENT_ORDER, Registry, TemplateSpec

PREFIX_START = "I will instruct the course of"

PREFIX_TEMPLATE = (
    "I will instruct the course of {course_name} - {lesson_topic} "
    "for students in {student_stage}. Here are my lesson goals: {lesson_goals}."
)

EVENT_BLOCK_SENTENCE = (
    "The educational theories involved in this section are as follows. "
    "Be sure to construct the lesson plan around the following events. "
    "Events that are not mentioned cannot be covered in this section."
)

COT_Q1_TEMPLATE = (
    "I will instruct the course of {course_name} for students in {student_stage}. "
    "Please provide the names of three key concepts that students may need to "
    "learn for this course."
)

COT_Q2_TEMPLATE = (
    "Provide the specific definition of the first concept that is suitable for "
    "the {student_stage}. The response must conform to the following format.\n"
    "Input:\n"
    "Context: the name of the concept\n"
    "Output:\n"
    "**the name of the concept**\n"
    "-Definition: The definition of the concept."
)

SLOT_NAMES = (
    "course_name",
    "lesson_topic",
    "student_stage",
    "lesson_goals",
    "outline",
    "selection",
)

_SLOT_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class PromptError(Exception):
    """Base class for prompt rendering failures."""


class MissingSlot(PromptError):
    def __init__(self, field_name: str):
        super().__init__(f"required slot {field_name!r} is empty")
        self.field = field_name


class EmptyEventSet(PromptError):
    def __init__(self) -> None:
        super().__init__("an event block needs at least one event")


class UnknownSlotReference(PromptError):
    def __init__(self, name: str):
        super().__init__(f"template references unknown slot {name!r}")
        self.name = name


@dataclass(frozen=True)
class Locale:
    """Deployment language settings for prompts and plan export."""

    code: str
    language_name: str
    minutes_word: str


LOCALES = {
    "en": Locale("en", "English", "minutes"),
    "zh": Locale("zh", "Chinese", "分钟"),
}


@dataclass(frozen=True)
class SlotSet:
    """One snapshot of every value a template may pull into a prompt.

    ``selection`` carries the working material of section-scoped prompts:
    the user's highlighted text, or the whole section content when nothing
    is selected.
    """

    course_name: str = ""
    lesson_topic: str = ""
    student_stage: str = ""
    lesson_goals: str = ""
    outline: str | None = None
    selection: str | None = None
    current_section_events: tuple[Event, ...] | None = None

    def value_of(self, name: str) -> str | None:
        if name not in SLOT_NAMES:
            raise UnknownSlotReference(name)
        return getattr(self, name)


# A segment is ("lit", text) or ("slot", slot_name).
Segment = tuple[str, str]


@dataclass(frozen=True)
class PromptTemplate:
    """A compiled template: literal/slot segments plus assembly flags."""

    id: str
    segments: tuple[Segment, ...]
    requires_prefix: bool = True
    requires_event_block: bool = False
    exemplar: str | None = None

    @classmethod
    def compile(
        cls,
        template_id: str,
        body: str,
        *,
        requires_prefix: bool = True,
        requires_event_block: bool = False,
        exemplar: str | None = None,
    ) -> "PromptTemplate":
        segments: list[Segment] = []
        pos = 0
        for match in _SLOT_RE.finditer(body):
            name = match.group(1)
            if name not in SLOT_NAMES:
                raise UnknownSlotReference(name)
            if match.start() > pos:
                segments.append(("lit", body[pos : match.start()]))
            segments.append(("slot", name))
            pos = match.end()
        if pos < len(body):
            segments.append(("lit", body[pos:]))
        return cls(
            id=template_id,
            segments=tuple(segments),
            requires_prefix=requires_prefix,
            requires_event_block=requires_event_block,
            exemplar=exemplar or None,
        )

    @classmethod
    def from_spec(cls, spec: TemplateSpec) -> "PromptTemplate":
        return cls.compile(
            spec.id,
            spec.prompt_body,
            requires_prefix=spec.requires_prefix,
            requires_event_block=spec.requires_event_block,
            exemplar=spec.exemplar,
        )

    def slot_names(self) -> list[str]:
        return [text for kind, text in self.segments if kind == "slot"]

    def without_event_block(self) -> "PromptTemplate":
        return replace(self, requires_event_block=False)


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    template_id: str
    slot_snapshot: SlotSet


def render_prefix(slots: SlotSet) -> str:
    """The course-context sentence placed at the start of every prompt."""
    for name in ("course_name", "lesson_topic", "student_stage", "lesson_goals"):
        if not getattr(slots, name):
            raise MissingSlot(name)
    return PREFIX_TEMPLATE.format(
        course_name=slots.course_name,
        lesson_topic=slots.lesson_topic,
        student_stage=slots.student_stage,
        lesson_goals=slots.lesson_goals,
    )


class PromptEngine:
    """Renders prompts against one registry and one deployment locale."""

    def __init__(self, registry: Registry, locale: Locale = LOCALES["en"]) -> None:
        self.registry = registry
        self.locale = locale

    def render_event_block(self, events: Iterable[Event]) -> str:
        wanted = set(events)
        if not wanted:
            raise EmptyEventSet()
        lines = [EVENT_BLOCK_SENTENCE]
        for name, definition in self.registry.event_definitions(wanted):
            lines.append(f"- {name}: {definition}")
        return "\n".join(lines)

    def render(self, template: PromptTemplate | TemplateSpec, slots: SlotSet) -> RenderedPrompt:
        if isinstance(template, TemplateSpec):
            template = PromptTemplate.from_spec(template)
        parts: list[str] = []
        if template.requires_prefix:
            parts.append(render_prefix(slots))
        if template.requires_event_block:
            if not slots.current_section_events:
                raise EmptyEventSet()
            parts.append(self.render_event_block(slots.current_section_events))
        if self.locale.code != "en":
            parts.append(f"Please respond in {self.locale.language_name}.")
        body: list[str] = []
        for kind, text in template.segments:
            if kind == "lit":
                body.append(text)
                continue
            value = slots.value_of(text)
            if not value:
                raise MissingSlot(text)
            body.append(value)
        if body:
            parts.append("".join(body))
        if template.exemplar:
            parts.append(template.exemplar)
        return RenderedPrompt(
            text="\n\n".join(parts), template_id=template.id, slot_snapshot=slots
        )

    def render_cot_sequence(self, slots: SlotSet) -> tuple[str, str]:
        """Two-step variant: elicit key concepts first, then ask for the
        first concept's stage-appropriate definition.  Opt-in per activity;
        the second prompt is sent as a follow-up turn in the same
        conversation, after the model answers the first."""
        for name in ("course_name", "student_stage"):
            if not getattr(slots, name):
                raise MissingSlot(name)
        q1 = COT_Q1_TEMPLATE.format(
            course_name=slots.course_name, student_stage=slots.student_stage
        )
        q2 = COT_Q2_TEMPLATE.format(student_stage=slots.student_stage)
        return q1, q2

    def compile_workflow(self, template_id: str) -> PromptTemplate:
        return PromptTemplate.from_spec(self.registry.workflow_template(template_id))


def event_names_in(text: str, registry: Registry) -> list[Event]:
    """Events whose display name occurs verbatim in *text*, canonical order."""
    return [e for e in EVENT_ORDER if registry.display_name(e) in text]
