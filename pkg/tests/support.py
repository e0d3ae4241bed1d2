"""Shared test helpers: random plan generation, fuzzing, SSE parsing,
and a real HTTP server for tests that need genuine streaming."""

from __future__ import annotations

import contextlib
import json
import random
import socket
import string
import threading
import time

from lessonforge.pedagogy import EVENT_ORDER, Registry
from lessonforge.plan import LessonMeta, LessonPlan, Section
from lessonforge.prompts import PREFIX_START, PromptTemplate

_WORD_CHARS = string.ascii_letters + string.digits
_TEXT_CHARS = _WORD_CHARS + " .,;:!?'()-*`_"


def random_word(rng: random.Random, lo: int = 1, hi: int = 10) -> str:
    return "".join(rng.choice(_WORD_CHARS) for _ in range(rng.randint(lo, hi)))


def random_text(rng: random.Random, lo: int = 1, hi: int = 60) -> str:
    return "".join(rng.choice(_TEXT_CHARS) for _ in range(rng.randint(lo, hi)))


def random_content_line(rng: random.Random) -> str:
    """A content line that cannot be mistaken for a heading."""
    while True:
        line = random_text(rng, 0, 50)
        if not line.startswith("#"):
            return line


def random_title(rng: random.Random) -> str:
    while True:
        title = random_text(rng, 1, 40).strip()
        if title and not title.startswith("#"):
            return title


def random_section(rng: random.Random) -> Section:
    events = rng.sample(EVENT_ORDER, rng.randint(0, 4))
    content_lines = [random_content_line(rng) for _ in range(rng.randint(0, 4))]
    return Section(
        title=random_title(rng),
        events=tuple(events),
        minutes=rng.choice([None, rng.randint(1, 120)]),
        content="\n".join(content_lines),
    )


def random_plan(rng: random.Random, max_sections: int = 6) -> LessonPlan:
    meta = LessonMeta(
        course_name=random_title(rng),
        lesson_topic=random_title(rng),
        student_stage=random_title(rng),
    )
    sections = tuple(random_section(rng) for _ in range(rng.randint(1, max_sections)))
    return LessonPlan(meta=meta, goals=random_text(rng), sections=sections)


def sections_equal(parsed: Section, original: Section) -> bool:
    """Round-trip equality: title/events/minutes, content modulo trailing ws."""
    return (
        parsed.title == original.title
        and parsed.events == original.events
        and parsed.minutes == original.minutes
        and parsed.content.rstrip() == original.content.rstrip()
    )


def mutate_text(rng: random.Random, text: str) -> str:
    """Random corruption of a document for parser-totality fuzzing."""
    lines = text.split("\n")
    for _ in range(rng.randint(1, 6)):
        op = rng.randrange(7)
        pos = rng.randint(0, max(len(lines) - 1, 0))
        if op == 0 and lines:
            del lines[pos : pos + 1]
        elif op == 1:
            lines.insert(pos, rng.choice(["#", "# ", "##", "## ", "###  ", "#####x"]))
        elif op == 2:
            lines.insert(pos, "#" * rng.randint(1, 5) + " " + random_text(rng, 0, 20))
        elif op == 3:
            lines.insert(pos, "### " + random_text(rng, 0, 12) + " minutes")
        elif op == 4 and lines:
            line = lines[pos]
            cut = rng.randint(0, len(line))
            lines[pos] = line[:cut] + rng.choice(["\t", " ", "∞", "## "]) + line[cut:]
        elif op == 5:
            rng.shuffle(lines)
        else:
            lines.insert(pos, random_text(rng, 0, 80))
    return "\n".join(lines)


def fuzz_value(rng: random.Random) -> str:
    """A non-empty slot value that never collides with the prefix phrase."""
    while True:
        value = random_text(rng, 1, 80)
        if value.strip() and PREFIX_START not in value:
            return value


def shipped_templates(registry: Registry) -> list[PromptTemplate]:
    """Every prompt template the default deployment can send."""
    templates: list[PromptTemplate] = []
    for activity in registry.all_activities():
        if activity.implemented:
            templates.append(
                PromptTemplate.compile(
                    activity.id,
                    activity.prompt_body,
                    requires_prefix=True,
                    requires_event_block=True,
                    exemplar=activity.exemplar,
                )
            )
    for action_id in registry.core_action_ids():
        templates.append(PromptTemplate.from_spec(registry.core_action(action_id)))
    for template_id in registry.workflow_ids():
        templates.append(PromptTemplate.from_spec(registry.workflow_template(template_id)))
    return templates


def parse_sse(body: str) -> list[tuple[str | None, dict]]:
    """Split an SSE response body into (event, data) frames."""
    frames: list[tuple[str | None, dict]] = []
    for block in body.split("\n\n"):
        if not block.strip():
            continue
        event = None
        data_lines = []
        for line in block.splitlines():
            if line.startswith("event: "):
                event = line[len("event: ") :]
            elif line.startswith("data: "):
                data_lines.append(line[len("data: ") :])
        frames.append((event, json.loads("\n".join(data_lines)) if data_lines else {}))
    return frames


def stream_text(frames: list[tuple[str | None, dict]]) -> str:
    """Concatenated chunk text of a parsed SSE exchange."""
    return "".join(d.get("text", "") for e, d in frames if e is None)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@contextlib.contextmanager
def run_server(app):
    """Serve *app* on a real socket; yields the base URL.

    The in-process test client buffers streaming bodies, so anything that
    exercises mid-stream behaviour (stop, busy conflicts) runs here.
    """
    import uvicorn

    port = free_port()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start in time")
        time.sleep(0.02)
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)
