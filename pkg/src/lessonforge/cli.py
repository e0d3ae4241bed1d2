"""Headless driver: plan generation from a metadata file, registry audit,
and a server runner.

Exit codes for ``plan``: 0 when the generated outline parsed cleanly, 2
when it parsed with warnings (printed to stderr), 1 on validation or
provider failure.  ``audit`` exits 0 only when the registry matches the
preset-activity contract.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .gateway import ChatTurn, Gateway, GatewayError, HttpProvider, ProviderConfig
from .mockdata import default_mock_provider
from .pedagogy import (
    EVENT_ORDER,
    ConfigError,
    Event,
    Registry,
    default_registry,
    load_registry,
)
from .plan import LessonMeta, LessonPlan, parse_outline, serialize_plan
from .prompts import (
    LOCALES,
    Locale,
    PREFIX_START,
    PromptEngine,
    PromptTemplate,
    SlotSet,
    UnknownSlotReference,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_WARNINGS = 2

EXPECTED_IMPLEMENTED = 16
EXPECTED_UNIMPLEMENTED = 2


def _err(message: str) -> None:
    print(f"lessonforge: {message}", file=sys.stderr)


def _parse_events(raw: str) -> list[Event]:
    events = []
    for slug in raw.split(","):
        slug = slug.strip()
        if not slug:
            continue
        try:
            events.append(Event(slug))
        except ValueError:
            known = ", ".join(e.value for e in EVENT_ORDER)
            raise ValueError(f"unknown event {slug!r} (known: {known})") from None
    if not events:
        raise ValueError("--events given but no event names found")
    return events


def _locale(code: str) -> Locale:
    return LOCALES.get(code, Locale(code, code, "minutes"))


def _load_meta(path: Path) -> tuple[LessonMeta, str]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"cannot read meta file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"meta file is not valid JSON: {exc}") from exc
    meta_doc = doc.get("meta", doc)
    for field_name in ("course_name", "lesson_topic", "student_stage"):
        if not str(meta_doc.get(field_name, "")).strip():
            raise ValueError(f"meta file is missing required field: {field_name}")
    meta = LessonMeta(
        course_name=str(meta_doc["course_name"]),
        lesson_topic=str(meta_doc["lesson_topic"]),
        student_stage=str(meta_doc["student_stage"]),
    )
    goals = str(doc.get("goals", "") or "")
    return meta, goals


def cmd_plan(args: argparse.Namespace) -> int:
    try:
        meta, goals = _load_meta(Path(args.meta))
        events = _parse_events(args.events) if args.events else list(EVENT_ORDER)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_FAILURE

    registry = default_registry() if not args.config else load_registry(args.config)
    locale = _locale(args.locale)
    engine = PromptEngine(registry, locale)
    config = ProviderConfig.from_env()
    if args.model:
        config = replace(config, model_name=args.model)
    if args.base_url:
        config = replace(config, base_url=args.base_url)
    provider = default_mock_provider(registry) if args.mock else HttpProvider()
    gateway = Gateway(provider, config)

    def generate(prompt: str, temperature: float) -> str:
        if args.debug_prompts:
            print("--- prompt ---", file=sys.stderr)
            print(prompt, file=sys.stderr)
        handle = gateway.generate(
            [ChatTurn("user", prompt)], config=replace(config, temperature=temperature)
        )
        return handle.result()

    try:
        if not goals:
            slots = SlotSet(
                course_name=meta.course_name,
                lesson_topic=meta.lesson_topic,
                student_stage=meta.student_stage,
            )
            rendered = engine.render(engine.compile_workflow("goals"), slots)
            goals = generate(rendered.text, temperature=0.7).strip()
        slots = SlotSet(
            course_name=meta.course_name,
            lesson_topic=meta.lesson_topic,
            student_stage=meta.student_stage,
            lesson_goals=goals,
            current_section_events=tuple(events),
        )
        rendered = engine.render(engine.compile_workflow("outline"), slots)
        raw_outline = generate(rendered.text, temperature=0.0)
    except GatewayError as exc:
        _err(f"provider failure: {exc}")
        return EXIT_FAILURE

    sections, warnings = parse_outline(raw_outline, registry, minutes_word=locale.minutes_word)
    plan = LessonPlan(meta=meta, goals=goals, sections=tuple(sections))
    markdown = serialize_plan(plan, registry, minutes_word=locale.minutes_word)
    out_path = Path(args.out)
    try:
        out_path.write_text(markdown, encoding="utf-8", newline="\n")
    except OSError as exc:
        _err(f"cannot write {out_path}: {exc}")
        return EXIT_FAILURE

    if warnings:
        for warning in warnings:
            print(f"line {warning.line}: [{warning.code}] {warning.message}", file=sys.stderr)
        print(f"wrote {out_path} with {len(warnings)} warnings", file=sys.stderr)
        return EXIT_WARNINGS
    print(f"wrote {out_path}", file=sys.stderr)
    return EXIT_OK


def audit_registry(registry: Registry) -> tuple[list[str], dict[str, int]]:
    """Check the registry against the preset-activity contract.

    Returns (violations, counts).
    """
    violations: list[str] = []
    activities = registry.all_activities()
    implemented = [a for a in activities if a.implemented]
    unimplemented = [a for a in activities if not a.implemented]
    counts = {
        "events": len(EVENT_ORDER),
        "implemented": len(implemented),
        "unimplemented": len(unimplemented),
    }
    if len(implemented) != EXPECTED_IMPLEMENTED:
        violations.append(
            f"expected {EXPECTED_IMPLEMENTED} implemented activities, found {len(implemented)}"
        )
    if len(unimplemented) != EXPECTED_UNIMPLEMENTED:
        violations.append(
            f"expected {EXPECTED_UNIMPLEMENTED} present-but-unimplemented activities, "
            f"found {len(unimplemented)}"
        )
    for event in EVENT_ORDER:
        if not registry.activities_for({event}, include_unimplemented=False):
            violations.append(f"event {event.value} has no implemented activity")
    for activity in implemented:
        if not activity.exemplar.strip():
            violations.append(f"activity {activity.id} is implemented without an exemplar")
        if not activity.prompt_body.strip():
            violations.append(f"activity {activity.id} is implemented without a prompt body")
        try:
            PromptTemplate.compile(activity.id, activity.prompt_body, exemplar=activity.exemplar)
        except UnknownSlotReference as exc:
            violations.append(f"activity {activity.id}: {exc}")
    for action_id in registry.core_action_ids():
        spec = registry.core_action(action_id)
        if not spec.requires_prefix:
            violations.append(f"core action {action_id} must require the course prefix")
        try:
            PromptTemplate.from_spec(spec)
        except UnknownSlotReference as exc:
            violations.append(f"core action {action_id}: {exc}")
    for template_id in registry.workflow_ids():
        spec = registry.workflow_template(template_id)
        if not spec.requires_prefix and not spec.prompt_body.startswith(PREFIX_START):
            violations.append(
                f"workflow template {template_id} neither requires the prefix nor starts with it"
            )
    return violations, counts


def cmd_audit(args: argparse.Namespace) -> int:
    try:
        registry = default_registry() if not args.config else load_registry(args.config)
    except (ConfigError, OSError) as exc:
        _err(f"cannot load registry: {exc}")
        return EXIT_FAILURE
    violations, counts = audit_registry(registry)
    print(
        f"{counts['implemented']} implemented, {counts['unimplemented']} unimplemented, "
        f"{counts['events']} events"
    )
    for violation in violations:
        print(f"violation: {violation}", file=sys.stderr)
    return EXIT_OK if not violations else EXIT_FAILURE


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app
    from .store import FileSessionStore, SessionStore

    registry = default_registry() if not args.config else load_registry(args.config)
    store = FileSessionStore(args.store) if args.store else SessionStore()
    if not args.store:
        _err("no --store given; sessions are kept in memory only")
    app = create_app(
        store=store,
        registry=registry,
        mock=args.mock,
        mock_delay=args.mock_delay,
        locale=args.locale,
        busy_policy=args.busy_policy,
        ui_dir=args.ui or None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lessonforge",
        description="Generate and serve pedagogy-driven lesson plans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="generate a lesson plan markdown file")
    plan.add_argument("--meta", required=True, help="JSON file with course_name, lesson_topic, student_stage, optional goals")
    plan.add_argument("--out", required=True, help="output markdown path")
    plan.add_argument("--mock", action="store_true", help="use the offline mock backend")
    plan.add_argument("--model", default="", help="model name (overrides LLM_MODEL)")
    plan.add_argument("--base-url", default="", help="provider base URL (overrides LLM_BASE_URL)")
    plan.add_argument("--events", default="", help="comma-separated event slugs to restrict the outline to")
    plan.add_argument("--locale", default="en", help="generation locale (en, zh)")
    plan.add_argument("--config", default="", help="registry config file (default: bundled)")
    plan.add_argument("--debug-prompts", action="store_true", help="print rendered prompts to stderr")
    plan.set_defaults(func=cmd_plan)

    audit = sub.add_parser("audit", help="check the activity registry against the preset contract")
    audit.add_argument("--config", default="", help="registry config file (default: bundled)")
    audit.set_defaults(func=cmd_audit)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--mock", action="store_true", help="use the offline mock backend")
    serve.add_argument("--mock-delay", type=float, default=0.0,
                       help="per-chunk delay of the mock backend, to demo streaming")
    serve.add_argument("--store", default="", help="path of the session store file (default: in-memory)")
    serve.add_argument("--locale", default="en")
    serve.add_argument("--config", default="", help="registry config file (default: bundled)")
    serve.add_argument("--ui", default="", help="directory of built web UI files to serve at /app")
    serve.add_argument("--busy-policy", choices=["reject", "cancel"], default="reject",
                       help="what a second trigger on a busy section does")
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
