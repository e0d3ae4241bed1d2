"""Instructional-event taxonomy, Bloom levels, and the preset activity registry.

Everything here is data: the nine events with their definitions, the six
Bloom levels, and the preset activities bound to events.  The bundled
defaults live in ``data/registry.yaml`` and deployments may swap in their
own config file with the same schema (see docs/config-format.md).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import yaml

CONFIG_SCHEMA_VERSION = 1


class ConfigError(Exception):
    """Raised when a registry config file is malformed."""


class Event(enum.Enum):
    """The closed nine-member taxonomy of instructional events."""

    GAIN_ATTENTION = "gain_attention"
    INFORM_OBJECTIVES = "inform_objectives"
    STIMULATE_RECALL = "stimulate_recall"
    PRESENT_STIMULUS = "present_stimulus"
    PROVIDE_GUIDANCE = "provide_guidance"
    ELICIT_PERFORMANCE = "elicit_performance"
    PROVIDE_FEEDBACK = "provide_feedback"
    ASSESS_PERFORMANCE = "assess_performance"
    ENHANCE_RETENTION_TRANSFER = "enhance_retention_transfer"

    @classmethod
    def from_slug(cls, slug: str) -> "Event":
        try:
            return cls(slug)
        except ValueError:
            raise ConfigError(f"unknown event slug: {slug!r}") from None


# Canonical teaching order; also the iteration order of the enum.
EVENT_ORDER: tuple[Event, ...] = tuple(Event)


class BloomLevel(enum.Enum):
    """The six cognitive levels, ordered from lowest to highest."""

    REMEMBERING = "remembering"
    UNDERSTANDING = "understanding"
    APPLYING = "applying"
    ANALYZING = "analyzing"
    EVALUATING = "evaluating"
    CREATING = "creating"

    @property
    def display_name(self) -> str:
        return self.value.capitalize()


BLOOM_ORDER: tuple[BloomLevel, ...] = tuple(BloomLevel)


@dataclass(frozen=True)
class EventInfo:
    """Display name, prompt definition, and heading aliases for one event."""

    event: Event
    display_name: str
    definition: str
    aliases: tuple[str, ...] = ()

    def matches(self, heading: str) -> bool:
        needle = _normalize(heading)
        if needle == _normalize(self.display_name):
            return True
        return any(needle == _normalize(a) for a in self.aliases)


@dataclass(frozen=True)
class ActivityTemplate:
    """One preset assistant action bound to a single instructional event."""

    id: str
    event: Event
    label: str
    prompt_body: str
    exemplar: str
    implemented: bool


@dataclass(frozen=True)
class TemplateSpec:
    """A workflow or core-action prompt template as stored in the config."""

    id: str
    label: str
    prompt_body: str
    exemplar: str = ""
    requires_prefix: bool = True
    requires_event_block: bool = False


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


class Registry:
    """Immutable view over one loaded config: events, activities, templates.

    Safe for unrestricted concurrent reads; mutating deployments reload a
    fresh instance from file.
    """

    def __init__(
        self,
        events: Iterable[EventInfo],
        activities: Iterable[ActivityTemplate],
        core_actions: Iterable[TemplateSpec],
        workflow: Iterable[TemplateSpec],
        version: int = CONFIG_SCHEMA_VERSION,
    ) -> None:
        self.version = version
        self._events = {info.event: info for info in events}
        missing = [e for e in EVENT_ORDER if e not in self._events]
        if missing:
            raise ConfigError(f"config missing events: {[e.value for e in missing]}")
        names = [info.display_name for info in self._events.values()]
        if len(set(names)) != len(names):
            raise ConfigError("event display names must be unique")
        for info in self._events.values():
            if not info.definition.strip():
                raise ConfigError(f"event {info.event.value} has an empty definition")

        self._activities: list[ActivityTemplate] = list(activities)
        seen: set[str] = set()
        for act in self._activities:
            if act.id in seen:
                raise ConfigError(f"duplicate activity id: {act.id}")
            seen.add(act.id)
            if act.implemented and not (act.prompt_body.strip() and act.exemplar.strip()):
                raise ConfigError(
                    f"activity {act.id} is implemented but lacks prompt_body or exemplar"
                )
        self._core = {spec.id: spec for spec in core_actions}
        self._workflow = {spec.id: spec for spec in workflow}

    # -- events ---------------------------------------------------------

    def event_info(self, event: Event) -> EventInfo:
        return self._events[event]

    def display_name(self, event: Event) -> str:
        return self._events[event].display_name

    def event_definitions(self, events: Iterable[Event]) -> list[tuple[str, str]]:
        """(display_name, definition) pairs in canonical nine-event order."""
        wanted = set(events)
        return [
            (self._events[e].display_name, self._events[e].definition)
            for e in EVENT_ORDER
            if e in wanted
        ]

    def match_heading(self, heading: str) -> Event | None:
        """Map an h2 heading text to an event, or None when unrecognized."""
        for event in EVENT_ORDER:
            if self._events[event].matches(heading):
                return event
        return None

    # -- activities -----------------------------------------------------

    def activities_for(
        self, events: Iterable[Event], include_unimplemented: bool = False
    ) -> list[ActivityTemplate]:
        """Registry entries for the given events, canonical event order first,
        registry order within an event."""
        wanted = set(events)
        out: list[ActivityTemplate] = []
        for event in EVENT_ORDER:
            if event not in wanted:
                continue
            for act in self._activities:
                if act.event is event and (act.implemented or include_unimplemented):
                    out.append(act)
        return out

    def all_activities(self) -> list[ActivityTemplate]:
        return list(self._activities)

    def activity(self, activity_id: str) -> ActivityTemplate | None:
        for act in self._activities:
            if act.id == activity_id:
                return act
        return None

    # -- prompt templates -----------------------------------------------

    def core_action(self, action_id: str) -> TemplateSpec | None:
        return self._core.get(action_id)

    def core_action_ids(self) -> list[str]:
        return list(self._core)

    def workflow_template(self, template_id: str) -> TemplateSpec:
        try:
            return self._workflow[template_id]
        except KeyError:
            raise ConfigError(f"config has no workflow template {template_id!r}") from None

    def workflow_ids(self) -> list[str]:
        return list(self._workflow)


def _require(record: dict, key: str, where: str) -> object:
    if key not in record:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return record[key]


def _load_template_spec(record: dict, where: str, default_event_block: bool) -> TemplateSpec:
    return TemplateSpec(
        id=str(_require(record, "id", where)),
        label=str(record.get("label", record["id"])),
        prompt_body=str(_require(record, "prompt_body", where)),
        exemplar=str(record.get("exemplar", "") or ""),
        requires_prefix=bool(record.get("requires_prefix", True)),
        requires_event_block=bool(record.get("requires_event_block", default_event_block)),
    )


def load_registry(source: str | Path) -> Registry:
    """Load a registry config from a YAML file path."""
    text = Path(source).read_text(encoding="utf-8")
    return parse_registry(text)


def parse_registry(text: str) -> Registry:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    version = doc.get("version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported config version {version!r}, expected {CONFIG_SCHEMA_VERSION}"
        )

    events = []
    for record in doc.get("events", []):
        event = Event.from_slug(str(_require(record, "id", "events")))
        events.append(
            EventInfo(
                event=event,
                display_name=str(_require(record, "display_name", "events")),
                definition=str(_require(record, "definition", "events")),
                aliases=tuple(str(a) for a in record.get("aliases", [])),
            )
        )

    activities = []
    for record in doc.get("activities", []):
        activities.append(
            ActivityTemplate(
                id=str(_require(record, "id", "activities")),
                event=Event.from_slug(str(_require(record, "event", "activities"))),
                label=str(_require(record, "label", "activities")),
                prompt_body=str(record.get("prompt_body", "") or ""),
                exemplar=str(record.get("exemplar", "") or ""),
                implemented=bool(record.get("implemented", False)),
            )
        )

    core = [
        _load_template_spec(record, "core_actions", default_event_block=True)
        for record in doc.get("core_actions", [])
    ]
    workflow = [
        _load_template_spec(record, "workflow", default_event_block=False)
        for record in doc.get("workflow", [])
    ]
    return Registry(events, activities, core, workflow, version=version)


def default_registry() -> Registry:
    """The bundled registry matching the preset activity table."""
    text = resources.files("lessonforge").joinpath("data/registry.yaml").read_text("utf-8")
    return parse_registry(text)
