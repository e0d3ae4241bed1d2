from __future__ import annotations

import pytest

from lessonforge.pedagogy import default_registry
from lessonforge.prompts import PromptEngine, SlotSet


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture
def engine(registry):
    return PromptEngine(registry)


@pytest.fixture
def slots():
    return SlotSet(
        course_name="Data Structures and Algorithms",
        lesson_topic="Quick sort",
        student_stage="Sophomore",
        lesson_goals="1. Understand partitioning.\n2. Apply the algorithm by hand.",
    )
