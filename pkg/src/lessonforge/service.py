"""HTTP/JSON surface: sessions, plan edits, assistant triggers, streaming.

The streaming endpoints speak server-sent events: an initial ``meta``
frame naming the generation (and exchange, where one exists), one
``data:`` line per chunk carrying ``{"text": ...}``, and a terminal frame
whose event name is the final generation status (``done``, ``cancelled``,
or ``failed``).  The full contract is documented in docs/api.md.
"""

from __future__ import annotations

import json
import queue
import re
import threading
from dataclasses import replace

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import assistant as assistant_mod
from . import gateway as gateway_mod
from . import plan as plan_mod
from . import prompts as prompts_mod
from . import store as store_mod
from .assistant import Assistant
from .gateway import ChatTurn, Gateway, GenerationHandle, HttpProvider, Provider, ProviderConfig
from .mockdata import default_mock_provider
from .pedagogy import BLOOM_ORDER, EVENT_ORDER, Event, Registry, default_registry
from .plan import (
    LessonMeta,
    edit_content,
    edit_title,
    insert_section,
    parse_outline,
    plan_from_doc,
    plan_to_doc,
    section_to_doc,
    serialize_plan,
    set_events,
    set_ignored,
    set_minutes,
    validate_plan,
)
from .prompts import LOCALES, PromptEngine, SlotSet
from .store import Session, SessionStore


class ConfirmationRequired(Exception):
    """Regenerating the outline would discard user-edited sections."""


_ERROR_MAP: list[tuple[type[Exception], int, str]] = [
    (store_mod.NotFound, 404, "not_found"),
    (plan_mod.UnknownSection, 404, "not_found"),
    (gateway_mod.UnknownHandle, 404, "not_found"),
    (assistant_mod.UnknownConversation, 404, "not_found"),
    (assistant_mod.UnknownExchange, 404, "not_found"),
    (assistant_mod.UnknownAction, 404, "not_found"),
    (assistant_mod.BusySection, 409, "busy_section"),
    (ConfirmationRequired, 409, "confirmation_required"),
    (assistant_mod.ActivityNotAvailable, 422, "activity_not_available"),
    (assistant_mod.UnimplementedActivity, 422, "unimplemented_activity"),
    (assistant_mod.EmptyQuery, 400, "validation_error"),
    (prompts_mod.PromptError, 400, "validation_error"),
    (plan_mod.IndexOutOfRange, 400, "validation_error"),
    (plan_mod.InvalidPlan, 400, "validation_error"),
    (gateway_mod.GenerationTimeout, 502, "provider_timeout"),
    (gateway_mod.ProviderError, 502, "provider_error"),
    (store_mod.StorageFull, 500, "storage_error"),
    (store_mod.CorruptRecord, 500, "storage_error"),
]


def _error_response(status: int, code: str, message: str, detail: object = None) -> JSONResponse:
    body: dict = {"code": code, "message": message}
    if detail is not None:
        body["detail"] = detail
    return JSONResponse(status_code=status, content=body)


class MetaBody(BaseModel):
    course_name: str = Field(min_length=1)
    lesson_topic: str = Field(min_length=1)
    student_stage: str = Field(min_length=1)

    def to_meta(self) -> LessonMeta:
        return LessonMeta(self.course_name, self.lesson_topic, self.student_stage)


class CreateSessionBody(BaseModel):
    meta: MetaBody
    request_token: str | None = None


class GoalsBody(BaseModel):
    text: str


class OutlineGenerateBody(BaseModel):
    confirm: bool = False


class SectionCreateBody(BaseModel):
    index: int
    title: str = Field(min_length=1)
    request_token: str | None = None


class SectionPatchBody(BaseModel):
    title: str | None = None
    minutes: int | None = None
    content: str | None = None
    ignored: bool | None = None
    events: list[str] | None = None


class ActionBody(BaseModel):
    context_selection: str | None = None
    request_token: str | None = None


class TextBody(BaseModel):
    text: str
    request_token: str | None = None


def _sse(data: dict, event: str | None = None) -> str:
    lines = []
    if event:
        lines.append(f"event: {event}")
    lines.append("data: " + json.dumps(data, ensure_ascii=False))
    return "\n".join(lines) + "\n\n"


def _warning_docs(warnings) -> list[dict]:
    return [{"line": w.line, "code": w.code, "message": w.message} for w in warnings]


def _export_filename(meta: LessonMeta) -> str:
    stem = f"{meta.course_name}-{meta.lesson_topic}"
    stem = re.sub(r"[^A-Za-z0-9._-]+", "-", stem).strip("-") or "lesson-plan"
    return stem + ".md"


def create_app(
    store: SessionStore | None = None,
    provider: Provider | None = None,
    provider_config: ProviderConfig | None = None,
    registry: Registry | None = None,
    locale: str = "en",
    mock: bool = False,
    mock_delay: float = 0.0,
    busy_policy: str = "reject",
    ui_dir: str | None = None,
) -> FastAPI:
    registry = registry or default_registry()
    loc = LOCALES.get(locale) or prompts_mod.Locale(locale, locale, "minutes")
    engine = PromptEngine(registry, loc)
    if provider is None:
        if mock:
            provider = default_mock_provider(registry)
            provider.chunk_delay = mock_delay
        else:
            provider = HttpProvider()
    provider_config = provider_config or ProviderConfig.from_env()
    store = store if store is not None else SessionStore()
    gateway = Gateway(provider, provider_config)
    assistant = Assistant(registry, engine, gateway, store, busy_policy=busy_policy)

    app = FastAPI(title="lessonforge", version="0.1.0", docs_url=None, redoc_url=None)
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["x-generation-id", "x-exchange-id", "content-disposition"],
    )
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=ui_dir, html=True), name="ui")
    app.state.store = store
    app.state.registry = registry
    app.state.engine = engine
    app.state.gateway = gateway
    app.state.assistant = assistant
    # request_token -> replay payload, per process (safe-retry support)
    replay_cache: dict[tuple[str, str], dict] = {}
    replay_lock = threading.Lock()

    for exc_type, status, code in _ERROR_MAP:
        def handler(request: Request, exc: Exception, status=status, code=code):
            return _error_response(status, code, str(exc))

        app.add_exception_handler(exc_type, handler)

    @app.exception_handler(RequestValidationError)
    def validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(400, "validation_error", "invalid request body", exc.errors())

    def _remember(scope: str, token: str | None, payload: dict) -> None:
        if token:
            with replay_lock:
                replay_cache[(scope, token)] = payload

    def _replayed(scope: str, token: str | None) -> dict | None:
        if not token:
            return None
        with replay_lock:
            return replay_cache.get((scope, token))

    # -- generation streaming ---------------------------------------------

    def _stream(
        handle: GenerationHandle,
        events: queue.Queue,
        meta: dict,
        debug: str | None,
        rendered_prompt: str | None,
    ) -> StreamingResponse:
        if debug == "prompts" and rendered_prompt is not None:
            meta = {**meta, "rendered_prompt": rendered_prompt}

        def frames():
            yield _sse(meta, event="meta")
            budget = gateway.config.timeout * (gateway.config.max_retries + 1) + 10
            while True:
                try:
                    kind, payload = events.get(timeout=budget)
                except queue.Empty:
                    yield _sse({"code": "provider_timeout"}, event="failed")
                    return
                if kind == "chunk":
                    yield _sse({"text": payload})
                else:
                    status, data = payload
                    yield _sse(data, event=status)
                    return

        headers = {
            "cache-control": "no-cache",
            "x-generation-id": handle.id,
        }
        if "exchange_id" in meta:
            headers["x-exchange-id"] = meta["exchange_id"]
        return StreamingResponse(frames(), media_type="text/event-stream", headers=headers)

    def _run_assistant(start, debug: str | None) -> StreamingResponse:
        events: queue.Queue = queue.Queue()

        def on_chunk(text: str) -> None:
            events.put(("chunk", text))

        def on_terminal(exchange: assistant_mod.AssistantExchange, handle: GenerationHandle) -> None:
            events.put(("terminal", (handle.status, {"exchange": exchange.to_doc()})))

        exchange, handle = start(on_chunk, on_terminal)
        meta = {"exchange_id": exchange.id, "generation_id": handle.id}
        return _stream(handle, events, meta, debug, exchange.rendered_prompt)

    def _replay_exchange(session_id: str, payload: dict) -> StreamingResponse:
        session = store.load(session_id)
        exchange = assistant_mod.find_exchange(session, payload["exchange_id"])

        def frames():
            yield _sse(
                {"exchange_id": exchange.id, "generation_id": payload["generation_id"], "replayed": True},
                event="meta",
            )
            if exchange.response:
                yield _sse({"text": exchange.response})
            status = exchange.status if exchange.status != "streaming" else "done"
            yield _sse({"exchange": exchange.to_doc()}, event=status)

        return StreamingResponse(frames(), media_type="text/event-stream")

    # -- sessions -----------------------------------------------------------

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/registry")
    def registry_meta():
        return {
            "events": [
                {"id": e.value, "display_name": registry.display_name(e)} for e in EVENT_ORDER
            ],
            "bloom_levels": [
                {"id": b.value, "display_name": b.display_name} for b in BLOOM_ORDER
            ],
            "activities": [
                {
                    "id": a.id,
                    "event": a.event.value,
                    "label": a.label,
                    "implemented": a.implemented,
                }
                for a in registry.all_activities()
            ],
            "core_actions": [
                {"id": spec_id, "label": registry.core_action(spec_id).label}
                for spec_id in registry.core_action_ids()
            ],
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        cached = _replayed("sessions", body.request_token)
        if cached is not None:
            return cached
        session = store.create(body.meta.to_meta())
        summary = session.summary()
        _remember("sessions", body.request_token, summary)
        return summary

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.load(session_id).summary()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.delete(session_id)
        return Response(status_code=204)

    # -- goals ---------------------------------------------------------------

    @app.post("/sessions/{session_id}/goals/generate")
    def generate_goals(session_id: str, debug: str | None = Query(default=None)):
        session = store.load(session_id)
        template_id = "goals_refine" if session.goals else "goals"
        slots = SlotSet(
            course_name=session.meta.course_name,
            lesson_topic=session.meta.lesson_topic,
            student_stage=session.meta.student_stage,
            lesson_goals=session.goals,
        )
        rendered = engine.render(engine.compile_workflow(template_id), slots)
        events: queue.Queue = queue.Queue()

        def on_chunk(text: str) -> None:
            events.put(("chunk", text))

        def on_done(handle: GenerationHandle) -> None:
            if handle.status == gateway_mod.DONE:
                goals = handle.text.strip()
                store.update(session_id, lambda s: s.set_goals(goals))
                events.put(("terminal", ("done", {"goals": goals})))
            elif handle.status == gateway_mod.CANCELLED:
                events.put(("terminal", ("cancelled", {"text_so_far": handle.text})))
            else:
                events.put(("terminal", ("failed", {"message": str(handle.error)})))

        handle = gateway.generate(
            [ChatTurn("user", rendered.text)], on_chunk=on_chunk, on_done=on_done
        )
        return _stream(handle, events, {"generation_id": handle.id}, debug, rendered.text)

    @app.put("/sessions/{session_id}/goals")
    def put_goals(session_id: str, body: GoalsBody):
        session = store.update(session_id, lambda s: s.set_goals(body.text))
        return {"goals": session.goals}

    @app.get("/sessions/{session_id}/goals")
    def get_goals(session_id: str):
        return {"goals": store.load(session_id).goals}

    # -- outline ---------------------------------------------------------------

    @app.post("/sessions/{session_id}/outline/generate")
    def generate_outline(
        session_id: str,
        body: OutlineGenerateBody | None = None,
        debug: str | None = Query(default=None),
    ):
        body = body or OutlineGenerateBody()
        session = store.load(session_id)
        if any(sec.edited for sec in session.plan.sections) and not body.confirm:
            raise ConfirmationRequired(
                "the plan has user-edited sections; pass confirm=true to replace them"
            )
        slots = SlotSet(
            course_name=session.meta.course_name,
            lesson_topic=session.meta.lesson_topic,
            student_stage=session.meta.student_stage,
            lesson_goals=session.goals,
            current_section_events=EVENT_ORDER,
        )
        rendered = engine.render(engine.compile_workflow("outline"), slots)
        events: queue.Queue = queue.Queue()

        def on_chunk(text: str) -> None:
            events.put(("chunk", text))

        def on_done(handle: GenerationHandle) -> None:
            if handle.status == gateway_mod.DONE:
                sections, warnings = parse_outline(
                    handle.text, registry, minutes_word=loc.minutes_word
                )

                def mutate(s: Session) -> None:
                    s.plan = replace(s.plan, sections=tuple(sections))

                store.update(session_id, mutate)
                events.put(
                    (
                        "terminal",
                        (
                            "done",
                            {
                                "sections": [section_to_doc(s) for s in sections],
                                "warnings": _warning_docs(warnings),
                            },
                        ),
                    )
                )
            elif handle.status == gateway_mod.CANCELLED:
                events.put(("terminal", ("cancelled", {"text_so_far": handle.text})))
            else:
                events.put(("terminal", ("failed", {"message": str(handle.error)})))

        # Formatter-bound generation favours format stability.
        config = replace(gateway.config, temperature=0.0)
        handle = gateway.generate(
            [ChatTurn("user", rendered.text)], config=config, on_chunk=on_chunk, on_done=on_done
        )
        return _stream(handle, events, {"generation_id": handle.id}, debug, rendered.text)

    # -- plan and sections ----------------------------------------------------

    @app.get("/sessions/{session_id}/plan")
    def get_plan(session_id: str):
        return plan_to_doc(store.load(session_id).plan)

    @app.put("/sessions/{session_id}/plan")
    def put_plan(session_id: str, body: dict):
        try:
            new_plan = plan_from_doc(body)
        except (KeyError, ValueError, TypeError) as exc:
            raise plan_mod.InvalidPlan(f"malformed plan document: {exc}") from exc
        validate_plan(new_plan)

        def mutate(session: Session) -> None:
            session.plan = new_plan

        return plan_to_doc(store.update(session_id, mutate).plan)

    @app.post("/sessions/{session_id}/sections", status_code=201)
    def create_section(session_id: str, body: SectionCreateBody):
        cached = _replayed("sections", body.request_token)
        if cached is not None:
            return cached

        def mutate(session: Session) -> None:
            session.plan = insert_section(session.plan, body.index, body.title)

        session = store.update(session_id, mutate)
        doc = section_to_doc(session.plan.sections[body.index])
        _remember("sections", body.request_token, doc)
        return doc

    @app.patch("/sessions/{session_id}/sections/{section_id}")
    def patch_section(session_id: str, section_id: str, body: SectionPatchBody):
        fields = body.model_fields_set

        def mutate(session: Session) -> None:
            section = session.plan.section(section_id)
            if "title" in fields and body.title is not None:
                section = edit_title(section, body.title)
            if "content" in fields and body.content is not None:
                section = edit_content(section, body.content)
            if "minutes" in fields:
                section = set_minutes(section, body.minutes)
            if "events" in fields and body.events is not None:
                try:
                    events = [Event(v) for v in body.events]
                except ValueError as exc:
                    raise plan_mod.InvalidPlan(str(exc)) from exc
                section = set_events(section, events)
            if "ignored" in fields and body.ignored is not None:
                section = replace(section, ignored=body.ignored)
            session.plan = plan_mod.replace_section(session.plan, section)

        session = store.update(session_id, mutate)
        return section_to_doc(session.plan.section(section_id))

    @app.delete("/sessions/{session_id}/sections/{section_id}", status_code=204)
    def remove_section(session_id: str, section_id: str):
        def mutate(session: Session) -> None:
            session.plan = plan_mod.delete_section(session.plan, section_id)

        store.update(session_id, mutate)
        return Response(status_code=204)

    # -- assistant --------------------------------------------------------------

    @app.get("/sessions/{session_id}/sections/{section_id}/actions")
    def section_actions(session_id: str, section_id: str):
        section = store.load(session_id).plan.section(section_id)
        return assistant.actions_for_section(section)

    @app.post("/sessions/{session_id}/sections/{section_id}/actions/{action_id}")
    def trigger_action(
        session_id: str,
        section_id: str,
        action_id: str,
        body: ActionBody | None = None,
        debug: str | None = Query(default=None),
    ):
        body = body or ActionBody()
        cached = _replayed("actions", body.request_token)
        if cached is not None:
            return _replay_exchange(session_id, cached)
        if registry.core_action(action_id) is not None:
            def start(on_chunk, on_terminal):
                return assistant.run_core(
                    session_id, section_id, action_id,
                    context_selection=body.context_selection,
                    on_chunk=on_chunk, on_terminal=on_terminal,
                )
        else:
            def start(on_chunk, on_terminal):
                return assistant.run_activity(
                    session_id, section_id, action_id,
                    context_selection=body.context_selection,
                    on_chunk=on_chunk, on_terminal=on_terminal,
                )
        response = _run_assistant(start, debug)
        _remember(
            "actions",
            body.request_token,
            {
                "exchange_id": response.headers.get("x-exchange-id"),
                "generation_id": response.headers.get("x-generation-id"),
            },
        )
        return response

    @app.post("/sessions/{session_id}/sections/{section_id}/query")
    def free_query(
        session_id: str,
        section_id: str,
        body: TextBody,
        debug: str | None = Query(default=None),
    ):
        cached = _replayed("query", body.request_token)
        if cached is not None:
            return _replay_exchange(session_id, cached)

        def start(on_chunk, on_terminal):
            return assistant.free_query(
                session_id, section_id, body.text, on_chunk=on_chunk, on_terminal=on_terminal
            )

        response = _run_assistant(start, debug)
        _remember(
            "query",
            body.request_token,
            {
                "exchange_id": response.headers.get("x-exchange-id"),
                "generation_id": response.headers.get("x-generation-id"),
            },
        )
        return response

    @app.post("/conversations/{conversation_id}/continue")
    def continue_conversation(
        conversation_id: str,
        body: TextBody,
        debug: str | None = Query(default=None),
    ):
        session = _session_for_conversation(store, conversation_id)
        cached = _replayed("continue", body.request_token)
        if cached is not None:
            return _replay_exchange(session.id, cached)

        def start(on_chunk, on_terminal):
            return assistant.continue_conversation(
                session.id, conversation_id, body.text,
                on_chunk=on_chunk, on_terminal=on_terminal,
            )

        response = _run_assistant(start, debug)
        _remember(
            "continue",
            body.request_token,
            {
                "exchange_id": response.headers.get("x-exchange-id"),
                "generation_id": response.headers.get("x-generation-id"),
            },
        )
        return response

    @app.post("/generations/{generation_id}/stop")
    def stop_generation(generation_id: str):
        status = gateway.cancel(generation_id)
        return {"status": status, "generation_id": generation_id}

    @app.get("/sessions/{session_id}/history")
    def history(session_id: str, section: str | None = Query(default=None)):
        session = store.load(session_id)
        exchanges = assistant.history(session, section)
        return {"exchanges": [e.to_doc() for e in exchanges]}

    @app.post("/sessions/{session_id}/exchanges/{exchange_id}/clear-output")
    def clear_output(session_id: str, exchange_id: str):
        assistant.clear_output(session_id, exchange_id)
        return {"ok": True}

    # -- export -----------------------------------------------------------------

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, include_ignored: bool = Query(default=True)):
        session = store.load(session_id)
        markdown = serialize_plan(
            session.plan, registry, include_ignored=include_ignored,
            minutes_word=loc.minutes_word,
        )
        filename = _export_filename(session.meta)
        return Response(
            content=markdown.encode("utf-8"),
            media_type="text/markdown; charset=utf-8",
            headers={"content-disposition": f'attachment; filename="{filename}"'},
        )

    return app


def _session_for_conversation(store: SessionStore, conversation_id: str) -> Session:
    for summary in store.list():
        session = store.load(summary["id"])
        if any(c.id == conversation_id for c in session.conversations):
            return session
    raise assistant_mod.UnknownConversation(conversation_id)
