"""Sidebar assistant orchestration: core actions, preset activities,
free queries, and multi-turn follow-ups.

Every trigger renders a complete prompt (course prefix, event restriction
block scoped to the section's events, working material, exemplar), starts
a streamed generation, and records an exchange in the session history.
History is append-only: clearing the output area never removes the record.
"""

from __future__ import annotations

import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Callable

from .gateway import CANCELLED, FAILED, ChatTurn, Gateway, GenerationHandle
from .pedagogy import Registry
from .plan import Section, serialize_plan
from .prompts import PromptEngine, PromptTemplate, SlotSet, render_prefix

if TYPE_CHECKING:
    from .store import Session, SessionStore

logger = logging.getLogger(__name__)

MAX_SELECTION_CHARS = 8000

CANCEL_MARKER = "[generation stopped]"
FAILURE_MARKER = "[generation failed]"

CORE_ACTION_IDS = (
    "regenerate_section",
    "evaluate_and_suggest",
    "presentation_advice",
    "slide_suggestions",
)


class AssistantError(Exception):
    """Base class for assistant orchestration failures."""


class UnknownAction(AssistantError):
    def __init__(self, action_id: str):
        super().__init__(f"no action or activity with id {action_id!r}")


class UnimplementedActivity(AssistantError):
    def __init__(self, activity_id: str):
        super().__init__(f"activity {activity_id!r} has no prompt configured")


class ActivityNotAvailable(AssistantError):
    def __init__(self, activity_id: str):
        super().__init__(
            f"activity {activity_id!r} belongs to an event not assigned to this section"
        )


class UnknownConversation(AssistantError):
    def __init__(self, conversation_id: str):
        super().__init__(f"no conversation with id {conversation_id!r}")


class UnknownExchange(AssistantError):
    def __init__(self, exchange_id: str):
        super().__init__(f"no exchange with id {exchange_id!r}")


class BusySection(AssistantError):
    def __init__(self, section_id: str):
        super().__init__(f"a generation is already running for section {section_id!r}")


class EmptyQuery(AssistantError):
    def __init__(self) -> None:
        super().__init__("query text must be non-empty")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class AssistantExchange:
    """One prompt/response turn with its provenance."""

    section_id: str
    trigger: str  # "core:<id>" | "activity:<id>" | "free_query" | "continuation"
    rendered_prompt: str
    user_text: str | None = None
    context_selection: str | None = None
    selection_truncated: bool = False
    response: str = ""
    status: str = "streaming"
    output_cleared: bool = False
    conversation_id: str | None = None
    warnings: list[str] = field(default_factory=list)
    created: str = field(default_factory=_now)
    id: str = field(default_factory=lambda: "ex-" + uuid.uuid4().hex[:12])

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "section_id": self.section_id,
            "trigger": self.trigger,
            "user_text": self.user_text,
            "context_selection": self.context_selection,
            "selection_truncated": self.selection_truncated,
            "rendered_prompt": self.rendered_prompt,
            "response": self.response,
            "status": self.status,
            "output_cleared": self.output_cleared,
            "conversation_id": self.conversation_id,
            "warnings": list(self.warnings),
            "created": self.created,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "AssistantExchange":
        return cls(
            id=str(doc["id"]),
            section_id=str(doc["section_id"]),
            trigger=str(doc["trigger"]),
            user_text=doc.get("user_text"),
            context_selection=doc.get("context_selection"),
            selection_truncated=bool(doc.get("selection_truncated", False)),
            rendered_prompt=str(doc.get("rendered_prompt", "")),
            response=str(doc.get("response", "")),
            status=str(doc.get("status", "done")),
            output_cleared=bool(doc.get("output_cleared", False)),
            conversation_id=doc.get("conversation_id"),
            warnings=list(doc.get("warnings", [])),
            created=str(doc.get("created", "")),
        )


@dataclass
class Conversation:
    """Turn history rooted at one exchange, scoped to one section."""

    section_id: str
    turns: list[ChatTurn] = field(default_factory=list)
    root_exchange_id: str = ""
    id: str = field(default_factory=lambda: "cv-" + uuid.uuid4().hex[:12])

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "section_id": self.section_id,
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
            "root_exchange_id": self.root_exchange_id,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Conversation":
        return cls(
            id=str(doc["id"]),
            section_id=str(doc["section_id"]),
            turns=[ChatTurn(t["role"], t["text"]) for t in doc.get("turns", [])],
            root_exchange_id=str(doc.get("root_exchange_id", "")),
        )


OnTerminal = Callable[[AssistantExchange, GenerationHandle], None]


class Assistant:
    """Stateless orchestrator over one registry, gateway, and store.

    At most one generation may be in flight per (session, section); a
    second trigger is rejected with BusySection by default, or cancels the
    running one when ``busy_policy="cancel"``.
    """

    def __init__(
        self,
        registry: Registry,
        engine: PromptEngine,
        gateway: Gateway,
        store: "SessionStore",
        busy_policy: str = "reject",
    ) -> None:
        if busy_policy not in ("reject", "cancel"):
            raise ValueError("busy_policy must be 'reject' or 'cancel'")
        self.registry = registry
        self.engine = engine
        self.gateway = gateway
        self.store = store
        self.busy_policy = busy_policy
        self._busy: dict[tuple[str, str], str] = {}
        self._busy_lock = threading.Lock()

    # -- action surface ----------------------------------------------------

    def actions_for_section(self, section: Section) -> dict[str, list[str]]:
        """Ids offered in the sidebar: core set plus event-filtered activities."""
        contextual = self.registry.activities_for(section.events, include_unimplemented=False)
        return {
            "core": [a for a in CORE_ACTION_IDS if self.registry.core_action(a)],
            "contextual": [a.id for a in contextual],
        }

    def run_core(
        self,
        session_id: str,
        section_id: str,
        action_id: str,
        context_selection: str | None = None,
        on_chunk: Callable[[str], None] | None = None,
        on_terminal: OnTerminal | None = None,
    ) -> tuple[AssistantExchange, GenerationHandle]:
        session = self.store.load(session_id)
        section = session.plan.section(section_id)
        spec = self.registry.core_action(action_id)
        if spec is None:
            raise UnknownAction(action_id)
        template = PromptTemplate.from_spec(spec)
        selection, truncated = _bound_selection(context_selection)
        material = selection or section.content or section.title
        slots = SlotSet(
            course_name=session.meta.course_name,
            lesson_topic=session.meta.lesson_topic,
            student_stage=session.meta.student_stage,
            lesson_goals=session.goals,
            outline=serialize_plan(session.plan, self.registry) or None,
            selection=material,
            current_section_events=section.events or None,
        )
        warnings: list[str] = []
        if template.requires_event_block and not section.events:
            template = template.without_event_block()
            warnings.append("section has no events; restriction block omitted")
            logger.info("core action %s on event-less section %s", action_id, section_id)
        rendered = self.engine.render(template, slots)
        exchange = AssistantExchange(
            section_id=section_id,
            trigger=f"core:{action_id}",
            rendered_prompt=rendered.text,
            context_selection=selection,
            selection_truncated=truncated,
            warnings=warnings,
        )
        return self._start(session_id, exchange, on_chunk, on_terminal)

    def run_activity(
        self,
        session_id: str,
        section_id: str,
        activity_id: str,
        context_selection: str | None = None,
        on_chunk: Callable[[str], None] | None = None,
        on_terminal: OnTerminal | None = None,
    ) -> tuple[AssistantExchange, GenerationHandle]:
        session = self.store.load(session_id)
        section = session.plan.section(section_id)
        activity = self.registry.activity(activity_id)
        if activity is None:
            raise UnknownAction(activity_id)
        if not activity.implemented:
            raise UnimplementedActivity(activity_id)
        if activity.event not in section.events:
            raise ActivityNotAvailable(activity_id)
        selection, truncated = _bound_selection(context_selection)
        material = selection or section.content or section.title
        slots = SlotSet(
            course_name=session.meta.course_name,
            lesson_topic=session.meta.lesson_topic,
            student_stage=session.meta.student_stage,
            lesson_goals=session.goals,
            selection=material,
            current_section_events=section.events,
        )
        template = PromptTemplate.compile(
            activity.id,
            activity.prompt_body,
            requires_prefix=True,
            requires_event_block=True,
            exemplar=activity.exemplar,
        )
        rendered = self.engine.render(template, slots)
        exchange = AssistantExchange(
            section_id=section_id,
            trigger=f"activity:{activity_id}",
            rendered_prompt=rendered.text,
            context_selection=selection,
            selection_truncated=truncated,
        )
        return self._start(session_id, exchange, on_chunk, on_terminal)

    def free_query(
        self,
        session_id: str,
        section_id: str,
        text: str,
        on_chunk: Callable[[str], None] | None = None,
        on_terminal: OnTerminal | None = None,
    ) -> tuple[AssistantExchange, GenerationHandle]:
        if not text.strip():
            raise EmptyQuery()
        session = self.store.load(session_id)
        session.plan.section(section_id)  # existence check
        slots = SlotSet(
            course_name=session.meta.course_name,
            lesson_topic=session.meta.lesson_topic,
            student_stage=session.meta.student_stage,
            lesson_goals=session.goals,
        )
        first_turn = render_prefix(slots) + "\n\n" + text
        exchange = AssistantExchange(
            section_id=section_id,
            trigger="free_query",
            rendered_prompt=first_turn,
            user_text=text,
        )
        return self._start(session_id, exchange, on_chunk, on_terminal)

    def continue_conversation(
        self,
        session_id: str,
        conversation_id: str,
        text: str,
        on_chunk: Callable[[str], None] | None = None,
        on_terminal: OnTerminal | None = None,
    ) -> tuple[AssistantExchange, GenerationHandle]:
        if not text.strip():
            raise EmptyQuery()
        session = self.store.load(session_id)
        conversation = find_conversation(session, conversation_id)
        turns = conversation.turns + [ChatTurn("user", text)]
        exchange = AssistantExchange(
            section_id=conversation.section_id,
            trigger="continuation",
            rendered_prompt="\n\n".join(t.text for t in turns),
            user_text=text,
            conversation_id=conversation_id,
        )
        return self._start(
            session_id, exchange, on_chunk, on_terminal, continue_id=conversation_id
        )

    # -- history -----------------------------------------------------------

    def history(self, session: "Session", section_id: str | None = None) -> list[AssistantExchange]:
        if section_id is None:
            return list(session.exchanges)
        return [e for e in session.exchanges if e.section_id == section_id]

    def clear_output(self, session_id: str, exchange_id: str) -> None:
        """Clear the presented output; the history record stays."""

        def mutate(session: "Session") -> None:
            find_exchange(session, exchange_id).output_cleared = True

        self.store.update(session_id, mutate)

    def copy_selection(
        self, session: "Session", exchange_id: str, selection: str | None = None
    ) -> str:
        exchange = find_exchange(session, exchange_id)
        return selection if selection else exchange.response

    # -- generation lifecycle -----------------------------------------------

    def _start(
        self,
        session_id: str,
        exchange: AssistantExchange,
        on_chunk: Callable[[str], None] | None,
        on_terminal: OnTerminal | None,
        continue_id: str | None = None,
    ) -> tuple[AssistantExchange, GenerationHandle]:
        key = (session_id, exchange.section_id)
        # entry[0] is filled with the generation id once the worker starts
        entry: list[str | None] = [None]
        with self._busy_lock:
            running = self._busy.get(key)
            if running is not None:
                if self.busy_policy == "reject" or running[0] is None:
                    raise BusySection(exchange.section_id)
                self.gateway.cancel(running[0])
            self._busy[key] = entry

        try:
            if continue_id is None:
                conversation = Conversation(
                    section_id=exchange.section_id,
                    turns=[ChatTurn("user", exchange.rendered_prompt)],
                    root_exchange_id=exchange.id,
                )
                exchange.conversation_id = conversation.id
            else:
                conversation = None

            def attach(session: "Session") -> None:
                if conversation is not None:
                    session.conversations.append(conversation)
                else:
                    find_conversation(session, continue_id).turns.append(
                        ChatTurn("user", exchange.user_text or "")
                    )
                session.exchanges.append(exchange)

            self.store.update(session_id, attach)

            if continue_id is None:
                turns = [ChatTurn("user", exchange.rendered_prompt)]
            else:
                turns = find_conversation(self.store.load(session_id), continue_id).turns

            def finalize(handle: GenerationHandle) -> None:
                self._finalize(session_id, exchange.id, key, entry, handle, on_terminal)

            handle = self.gateway.generate(turns, on_chunk=on_chunk, on_done=finalize)
            entry[0] = handle.id
            return exchange, handle
        except Exception:
            with self._busy_lock:
                if self._busy.get(key) is entry:
                    del self._busy[key]
            raise

    def _finalize(
        self,
        session_id: str,
        exchange_id: str,
        key: tuple[str, str],
        entry: list[str | None],
        handle: GenerationHandle,
        on_terminal: OnTerminal | None,
    ) -> None:
        # The handle is terminal, so the section is no longer in flight;
        # release before persisting so a fresh trigger is not rejected.
        with self._busy_lock:
            if self._busy.get(key) is entry:
                del self._busy[key]
        text = handle.text
        status = handle.status
        result: list[AssistantExchange] = []

        def mutate(session: "Session") -> None:
            exchange = find_exchange(session, exchange_id)
            exchange.response = text
            exchange.status = status
            if status == FAILED and handle.error is not None:
                exchange.warnings.append(str(handle.error))
            if exchange.conversation_id:
                turn_text = text
                if status == CANCELLED:
                    turn_text = (text + "\n" + CANCEL_MARKER).strip()
                elif status == FAILED:
                    turn_text = (text + "\n" + FAILURE_MARKER).strip()
                if turn_text:
                    find_conversation(session, exchange.conversation_id).turns.append(
                        ChatTurn("assistant", turn_text)
                    )
            result.append(exchange)

        try:
            self.store.update(session_id, mutate)
        except Exception:
            logger.exception("failed to persist exchange %s", exchange_id)
        if on_terminal is not None and result:
            on_terminal(result[0], handle)

    def busy_sections(self, session_id: str) -> list[str]:
        with self._busy_lock:
            return [sec for (sid, sec), _ in self._busy.items() if sid == session_id]


def _bound_selection(selection: str | None) -> tuple[str | None, bool]:
    if selection is None or selection == "":
        return None, False
    if len(selection) > MAX_SELECTION_CHARS:
        logger.warning("context selection truncated to %d chars", MAX_SELECTION_CHARS)
        return selection[:MAX_SELECTION_CHARS], True
    return selection, False


def find_exchange(session: "Session", exchange_id: str) -> AssistantExchange:
    for exchange in session.exchanges:
        if exchange.id == exchange_id:
            return exchange
    raise UnknownExchange(exchange_id)


def find_conversation(session: "Session", conversation_id: str) -> Conversation:
    for conversation in session.conversations:
        if conversation.id == conversation_id:
            return conversation
    raise UnknownConversation(conversation_id)
