"""Durable session persistence.

Sessions live in a single JSON file holding one document per session.
Every save rewrites the file through a temp-file-plus-rename sequence, so
a reader never observes a torn store and a crash between writes loses at
most the in-flight save.  The filesystem operations are injectable, which
is how the tests simulate crashes at each step of the write sequence.
"""

from __future__ import annotations

import errno
import json
import os
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .assistant import AssistantExchange, Conversation
from .plan import (
    LessonMeta,
    LessonPlan,
    meta_from_doc,
    meta_to_doc,
    plan_from_doc,
    plan_to_doc,
    validate_plan,
)

SCHEMA_VERSION = 1


class StoreError(Exception):
    """Base class for persistence failures."""


class NotFound(StoreError):
    def __init__(self, session_id: str):
        super().__init__(f"no session with id {session_id!r}")
        self.session_id = session_id


class CorruptRecord(StoreError):
    pass


class StorageFull(StoreError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Session:
    """One lesson-planning session: metadata, plan state, and audit history.

    Exchanges embed the rendered prompt verbatim so the full text sent to
    the provider stays auditable after the fact.
    """

    plan: LessonPlan
    exchanges: list[AssistantExchange] = field(default_factory=list)
    conversations: list[Conversation] = field(default_factory=list)
    created: str = field(default_factory=_now)
    updated: str = field(default_factory=_now)
    schema_version: int = SCHEMA_VERSION
    id: str = field(default_factory=lambda: "ss-" + uuid.uuid4().hex[:12])

    @property
    def meta(self) -> LessonMeta:
        return self.plan.meta

    @property
    def goals(self) -> str:
        return self.plan.goals

    def set_goals(self, text: str) -> None:
        self.plan = replace(self.plan, goals=text)

    def summary(self) -> dict:
        return {
            "id": self.id,
            "meta": meta_to_doc(self.meta),
            "sections": len(self.plan.sections),
            "created": self.created,
            "updated": self.updated,
        }


def session_to_doc(session: Session) -> dict:
    return {
        "id": session.id,
        "schema_version": session.schema_version,
        "created": session.created,
        "updated": session.updated,
        "meta": meta_to_doc(session.meta),
        "goals": session.goals,
        "plan": plan_to_doc(session.plan),
        "exchanges": [e.to_doc() for e in session.exchanges],
        "conversations": [c.to_doc() for c in session.conversations],
    }


def session_from_doc(doc: dict) -> Session:
    version = int(doc.get("schema_version", 0))
    if version > SCHEMA_VERSION:
        raise CorruptRecord(
            f"session {doc.get('id')!r} has schema version {version}, "
            f"newer than supported {SCHEMA_VERSION}"
        )
    plan = plan_from_doc(doc.get("plan", {}))
    # meta/goals at the top level are authoritative for the session.
    plan = replace(plan, meta=meta_from_doc(doc.get("meta", {})), goals=str(doc.get("goals", "")))
    return Session(
        id=str(doc["id"]),
        plan=plan,
        exchanges=[AssistantExchange.from_doc(e) for e in doc.get("exchanges", [])],
        conversations=[Conversation.from_doc(c) for c in doc.get("conversations", [])],
        created=str(doc.get("created", "")),
        updated=str(doc.get("updated", "")),
        schema_version=version or SCHEMA_VERSION,
    )


class FsOps:
    """Filesystem primitives behind the store, separable for fault injection."""

    def read_text(self, path: Path) -> str:
        return path.read_text(encoding="utf-8")

    def write_text(self, path: Path, text: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())

    def replace(self, src: Path, dst: Path) -> None:
        os.replace(src, dst)

    def exists(self, path: Path) -> bool:
        return path.exists()


class SessionStore:
    """In-memory store; the base for the file-backed variant.

    All writes are serialized under one lock, which subsumes the
    per-session single-writer requirement.
    """

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._docs: dict[str, dict] = {}

    # -- persistence hook --------------------------------------------------

    def _persist(self, docs: dict[str, dict]) -> None:
        """Durably record *docs*; raising must leave prior state intact."""

    # -- public API ----------------------------------------------------------

    def create(self, meta: LessonMeta) -> Session:
        session = Session(plan=LessonPlan(meta=meta))
        self.save(session)
        return session

    def load(self, session_id: str) -> Session:
        with self._lock:
            doc = self._docs.get(session_id)
            if doc is None:
                raise NotFound(session_id)
            return session_from_doc(doc)

    def save(self, session: Session) -> None:
        validate_plan(session.plan)
        session.updated = _now()
        doc = session_to_doc(session)
        with self._lock:
            docs = dict(self._docs)
            docs[session.id] = doc
            self._persist(docs)
            self._docs = docs

    def update(self, session_id: str, mutate) -> Session:
        """Read-modify-write under the store lock; returns the saved session."""
        with self._lock:
            session = self.load(session_id)
            mutate(session)
            self.save(session)
            return session

    def list(self) -> list[dict]:
        with self._lock:
            sessions = [session_from_doc(doc) for doc in self._docs.values()]
        sessions.sort(key=lambda s: s.created)
        return [s.summary() for s in sessions]

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._docs:
                raise NotFound(session_id)
            docs = dict(self._docs)
            del docs[session_id]
            self._persist(docs)
            self._docs = docs

    def export_doc(self, session_id: str) -> dict:
        """One self-contained document for backup or transfer."""
        with self._lock:
            doc = self._docs.get(session_id)
            if doc is None:
                raise NotFound(session_id)
            return {"schema_version": SCHEMA_VERSION, "session": json.loads(json.dumps(doc))}

    def import_doc(self, doc: dict) -> Session:
        """Restore an exported session verbatim, timestamps included."""
        version = int(doc.get("schema_version", 0))
        if version > SCHEMA_VERSION:
            raise CorruptRecord(f"document schema version {version} is not supported")
        session = session_from_doc(doc.get("session", {}))
        validate_plan(session.plan)
        with self._lock:
            docs = dict(self._docs)
            docs[session.id] = session_to_doc(session)
            self._persist(docs)
            self._docs = docs
        return session


class FileSessionStore(SessionStore):
    """Single-file JSON store with atomic replace-on-save."""

    def __init__(self, path: str | Path, fs: FsOps | None = None) -> None:
        super().__init__()
        self.path = Path(path)
        self.fs = fs or FsOps()
        if self.fs.exists(self.path):
            self._docs = self._read_file()

    def _read_file(self) -> dict[str, dict]:
        try:
            raw = json.loads(self.fs.read_text(self.path))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptRecord(f"cannot read store file {self.path}: {exc}") from exc
        if not isinstance(raw, dict) or "sessions" not in raw:
            raise CorruptRecord(f"store file {self.path} has no sessions table")
        version = int(raw.get("schema_version", 0))
        if version > SCHEMA_VERSION:
            raise CorruptRecord(
                f"store file has schema version {version}, newer than supported "
                f"{SCHEMA_VERSION}; refusing to load"
            )
        return dict(raw["sessions"])

    def _persist(self, docs: dict[str, dict]) -> None:
        payload = json.dumps(
            {"schema_version": SCHEMA_VERSION, "sessions": docs},
            ensure_ascii=False,
            indent=1,
        )
        tmp = self.path.with_name(self.path.name + ".tmp")
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.fs.write_text(tmp, payload)
            self.fs.replace(tmp, self.path)
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(str(exc)) from exc
            raise
