"""Pedagogy-driven lesson-plan authoring: registry, prompts, block model,
streaming gateway, assistant orchestration, persistence, HTTP service."""

__version__ = "0.1.0"
