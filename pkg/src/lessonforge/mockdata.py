"""Canned responses for the offline mock backend.

The responder inspects the rendered prompt to decide what kind of request
it is (goals, outline, or a section-scoped action) and produces a fixed,
well-formed answer derived only from the prompt text.  Identical prompts
always produce identical responses, so golden files stay stable and no
test ever needs the network.
"""

from __future__ import annotations

import re

from .gateway import ChatTurn, MockProvider
from .pedagogy import EVENT_ORDER, Event, Registry, default_registry
from .prompts import EVENT_BLOCK_SENTENCE, event_names_in

_PREFIX_RE = re.compile(
    r"I will instruct the course of (?P<course>.+?) - (?P<topic>.+?) "
    r"for students in (?P<stage>.+?)\."
)

_OUTLINE_MARKER = "every section starts with a single '#'"
_GOALS_MARKER = "Draft the lesson goals"
_GOALS_REFINE_MARKER = "Refine the lesson goals"

_SECTION_TITLES: dict[Event, str] = {
    Event.GAIN_ATTENTION: "Opening question: {topic} in the wild",
    Event.INFORM_OBJECTIVES: "What we will learn about {topic}",
    Event.STIMULATE_RECALL: "What {topic} builds on",
    Event.PRESENT_STIMULUS: "Core ideas of {topic}",
    Event.PROVIDE_GUIDANCE: "Working through {topic} together",
    Event.ELICIT_PERFORMANCE: "Your turn: practising {topic}",
    Event.PROVIDE_FEEDBACK: "Reviewing our {topic} solutions",
    Event.ASSESS_PERFORMANCE: "Checking what stuck",
    Event.ENHANCE_RETENTION_TRANSFER: "Taking {topic} further",
}

_SECTION_BODIES: dict[Event, str] = {
    Event.GAIN_ATTENTION: (
        "Start with a question students can argue about: where does {topic} "
        "show up in software they use every day?"
    ),
    Event.INFORM_OBJECTIVES: (
        "Walk through the lesson goals one by one and say what students will "
        "be able to do with {topic} after class."
    ),
    Event.STIMULATE_RECALL: (
        "Ask students to recall the prerequisite ideas and collect them on "
        "the board before introducing {topic}."
    ),
    Event.PRESENT_STIMULUS: (
        "Introduce the definition of {topic} and the core mechanism behind "
        "it, with one worked example on the board."
    ),
    Event.PROVIDE_GUIDANCE: (
        "Guide students through a second example of {topic} step by step, "
        "narrating the reasoning at every decision point."
    ),
    Event.ELICIT_PERFORMANCE: (
        "Hand out a short exercise on {topic} and let students work in "
        "pairs while you circulate."
    ),
    Event.PROVIDE_FEEDBACK: (
        "Review the exercise solutions together and address the most common "
        "mistakes observed while circulating."
    ),
    Event.ASSESS_PERFORMANCE: (
        "Run a three-question quiz covering today's ground on {topic} and "
        "collect the answers."
    ),
    Event.ENHANCE_RETENTION_TRANSFER: (
        "Assign the take-home task that transfers {topic} to a new problem "
        "and preview the next lesson."
    ),
}

_SECTION_MINUTES: dict[Event, int] = {
    Event.GAIN_ATTENTION: 5,
    Event.INFORM_OBJECTIVES: 5,
    Event.STIMULATE_RECALL: 10,
    Event.PRESENT_STIMULUS: 20,
    Event.PROVIDE_GUIDANCE: 15,
    Event.ELICIT_PERFORMANCE: 15,
    Event.PROVIDE_FEEDBACK: 10,
    Event.ASSESS_PERFORMANCE: 5,
    Event.ENHANCE_RETENTION_TRANSFER: 5,
}


def _slots_from_prompt(prompt: str) -> tuple[str, str, str]:
    match = _PREFIX_RE.search(prompt)
    if not match:
        return ("this course", "this topic", "students")
    return (match.group("course"), match.group("topic"), match.group("stage"))


def canned_goals(topic: str, stage: str) -> str:
    return "\n".join(
        [
            f"1. Remember the definition and the key terms of {topic}.",
            f"2. Understand how {topic} works by explaining it in their own words.",
            f"3. Apply {topic} to solve a prepared in-class exercise.",
            f"4. Analyze when {topic} performs well and when it does not.",
            f"5. Evaluate alternative approaches and justify choosing {topic}.",
            f"6. Create a small worked example of {topic} suitable for {stage} peers.",
        ]
    )


def canned_outline(topic: str, events: list[Event], registry: Registry) -> str:
    blocks: list[str] = []
    for event in EVENT_ORDER:
        if event not in events:
            continue
        blocks.append(
            "\n".join(
                [
                    "# " + _SECTION_TITLES[event].format(topic=topic),
                    "## " + registry.display_name(event),
                    f"### {_SECTION_MINUTES[event]} minutes",
                    _SECTION_BODIES[event].format(topic=topic),
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"


def canned_action_response(prompt: str, topic: str) -> str:
    context = ""
    for line in prompt.splitlines():
        if line.startswith("Context: "):
            context = line[len("Context: ") :].strip()
            break
    subject = context or topic
    return (
        f"Here is a suggestion set for {subject}.\n"
        f"- Connect {subject} back to the lesson goals before moving on.\n"
        f"- Show one concrete example of {subject} and let students predict the outcome.\n"
        f"- Close with a one-minute recap question about {subject}."
    )


def _requested_events(prompt: str, registry: Registry) -> list[Event]:
    """Events listed in the restriction block (exemplar text is ignored)."""
    start = prompt.find(EVENT_BLOCK_SENTENCE)
    if start < 0:
        return list(EVENT_ORDER)
    block_start = start + len(EVENT_BLOCK_SENTENCE)
    block_end = prompt.find("\n\n", block_start)
    block = prompt[block_start : block_end if block_end >= 0 else len(prompt)]
    return event_names_in(block, registry) or list(EVENT_ORDER)


def canned_response(turns: list[ChatTurn], registry: Registry | None = None) -> str:
    """Deterministic canned reply for any rendered prompt."""
    registry = registry or default_registry()
    prompt = turns[-1].text
    full_text = "\n".join(turn.text for turn in turns)
    _course, topic, stage = _slots_from_prompt(full_text)
    if _OUTLINE_MARKER in prompt:
        return canned_outline(topic, _requested_events(prompt, registry), registry)
    if _GOALS_MARKER in prompt or _GOALS_REFINE_MARKER in prompt:
        return canned_goals(topic, stage)
    return canned_action_response(prompt, topic)


def default_mock_provider(
    registry: Registry | None = None,
    script: dict[str, str | list[str]] | None = None,
) -> MockProvider:
    """Mock backend whose fallback produces well-formed canned documents."""
    registry = registry or default_registry()
    return MockProvider(
        script=script,
        fallback=lambda turns: canned_response(turns, registry),
    )
