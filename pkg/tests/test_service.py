from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from lessonforge.gateway import MockProvider, ProviderConfig
from lessonforge.mockdata import default_mock_provider
from lessonforge.pedagogy import Event
from lessonforge.plan import parse_outline
from lessonforge.prompts import EVENT_BLOCK_SENTENCE, PREFIX_START
from lessonforge.service import create_app
from lessonforge.store import SessionStore

from support import parse_sse, stream_text

META = {
    "course_name": "Data Structures and Algorithms",
    "lesson_topic": "Hash Table",
    "student_stage": "Sophomore",
}


@pytest.fixture
def client(registry):
    app = create_app(store=SessionStore(), registry=registry, mock=True)
    with TestClient(app) as test_client:
        yield test_client


def make_session(client) -> str:
    response = client.post("/sessions", json={"meta": META})
    assert response.status_code == 201
    return response.json()["id"]


def generate_goals(client, sid: str) -> list:
    response = client.post(f"/sessions/{sid}/goals/generate")
    assert response.status_code == 200
    assert response.headers["content-type"].startswith("text/event-stream")
    return parse_sse(response.text)


def generate_outline(client, sid: str, **kwargs) -> list:
    response = client.post(f"/sessions/{sid}/outline/generate", **kwargs)
    assert response.status_code == 200
    return parse_sse(response.text)


def test_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_create_session_and_summary(client):
    sid = make_session(client)
    summary = client.get(f"/sessions/{sid}").json()
    assert summary["meta"] == META
    assert summary["sections"] == 0
    listed = client.get("/sessions").json()["sessions"]
    assert [s["id"] for s in listed] == [sid]


def test_create_session_validation_error(client):
    response = client.post("/sessions", json={"meta": {"course_name": "X"}})
    assert response.status_code == 400
    body = response.json()
    assert body["code"] == "validation_error"


def test_session_not_found(client):
    response = client.get("/sessions/ss-nope")
    assert response.status_code == 404
    assert response.json()["code"] == "not_found"


def test_create_session_request_token_replay(client):
    body = {"meta": META, "request_token": "tok-1"}
    first = client.post("/sessions", json=body).json()
    second = client.post("/sessions", json=body).json()
    assert first["id"] == second["id"]
    assert len(client.get("/sessions").json()["sessions"]) == 1


def test_goals_generate_stream_and_store(client):
    sid = make_session(client)
    frames = generate_goals(client, sid)
    assert frames[0][0] == "meta"
    assert "generation_id" in frames[0][1]
    assert frames[-1][0] == "done"
    goals = frames[-1][1]["goals"]
    assert stream_text(frames) == goals
    assert "Hash Table" in goals
    assert client.get(f"/sessions/{sid}/goals").json()["goals"] == goals


def test_goals_put_and_refine_uses_current_goals(client):
    sid = make_session(client)
    client.put(f"/sessions/{sid}/goals", json={"text": "1. my own goal"})
    assert client.get(f"/sessions/{sid}/goals").json()["goals"] == "1. my own goal"
    response = client.post(f"/sessions/{sid}/goals/generate?debug=prompts")
    frames = parse_sse(response.text)
    prompt = frames[0][1]["rendered_prompt"]
    # refine template: prefix carries the current goals
    assert prompt.startswith(PREFIX_START)
    assert "1. my own goal" in prompt
    assert "Refine the lesson goals" in prompt


def test_debug_flag_off_by_default(client):
    sid = make_session(client)
    frames = generate_goals(client, sid)
    assert "rendered_prompt" not in frames[0][1]


def test_outline_generate_parses_and_stores(client, registry):
    sid = make_session(client)
    generate_goals(client, sid)
    frames = generate_outline(client, sid)
    assert frames[-1][0] == "done"
    payload = frames[-1][1]
    assert payload["warnings"] == []
    assert len(payload["sections"]) == 9
    plan = client.get(f"/sessions/{sid}/plan").json()
    assert [s["title"] for s in plan["sections"]] == [
        s["title"] for s in payload["sections"]
    ]
    # raw streamed text re-parses to the same sections
    raw = stream_text(frames)
    sections, warnings = parse_outline(raw, registry)
    assert warnings == []
    assert [s.title for s in sections] == [s["title"] for s in payload["sections"]]


def test_outline_requires_goals(client):
    sid = make_session(client)
    response = client.post(f"/sessions/{sid}/outline/generate")
    assert response.status_code == 400
    assert response.json()["code"] == "validation_error"


def test_outline_regeneration_confirmation_gate(client):
    sid = make_session(client)
    generate_goals(client, sid)
    generate_outline(client, sid)
    plan = client.get(f"/sessions/{sid}/plan").json()
    first = plan["sections"][0]["id"]
    client.patch(f"/sessions/{sid}/sections/{first}", json={"title": "My edit"})
    blocked = client.post(f"/sessions/{sid}/outline/generate")
    assert blocked.status_code == 409
    assert blocked.json()["code"] == "confirmation_required"
    frames = generate_outline(client, sid, json={"confirm": True})
    assert frames[-1][0] == "done"
    refreshed = client.get(f"/sessions/{sid}/plan").json()
    assert all(not s["edited"] for s in refreshed["sections"])


def test_plan_put_round_trip(client):
    sid = make_session(client)
    generate_goals(client, sid)
    generate_outline(client, sid)
    plan = client.get(f"/sessions/{sid}/plan").json()
    plan["sections"] = plan["sections"][:2]
    plan["sections"][0]["title"] = "Rewritten"
    updated = client.put(f"/sessions/{sid}/plan", json=plan).json()
    assert len(updated["sections"]) == 2
    assert updated["sections"][0]["title"] == "Rewritten"


def test_plan_put_rejects_invalid_document(client):
    sid = make_session(client)
    bad = {"meta": META, "goals": "", "sections": [{"id": "s1", "title": ""}]}
    response = client.put(f"/sessions/{sid}/plan", json=bad)
    assert response.status_code == 400


def test_section_crud(client):
    sid = make_session(client)
    created = client.post(
        f"/sessions/{sid}/sections", json={"index": 0, "title": "Fresh block"}
    )
    assert created.status_code == 201
    section_id = created.json()["id"]
    patched = client.patch(
        f"/sessions/{sid}/sections/{section_id}",
        json={"content": "some body", "minutes": 10, "events": ["gain_attention"]},
    ).json()
    assert patched["content"] == "some body"
    assert patched["minutes"] == 10
    assert patched["events"] == ["gain_attention"]
    assert patched["edited"]
    cleared = client.patch(
        f"/sessions/{sid}/sections/{section_id}", json={"minutes": None}
    ).json()
    assert cleared["minutes"] is None
    ignored = client.patch(
        f"/sessions/{sid}/sections/{section_id}", json={"ignored": True}
    ).json()
    assert ignored["ignored"]
    assert client.delete(f"/sessions/{sid}/sections/{section_id}").status_code == 204
    assert client.get(f"/sessions/{sid}/plan").json()["sections"] == []
    missing = client.patch(f"/sessions/{sid}/sections/{section_id}", json={"minutes": 5})
    assert missing.status_code == 404


def test_section_insert_index_out_of_range(client):
    sid = make_session(client)
    response = client.post(f"/sessions/{sid}/sections", json={"index": 5, "title": "X"})
    assert response.status_code == 400


def test_section_patch_invalid_minutes(client):
    sid = make_session(client)
    section_id = client.post(
        f"/sessions/{sid}/sections", json={"index": 0, "title": "S"}
    ).json()["id"]
    response = client.patch(f"/sessions/{sid}/sections/{section_id}", json={"minutes": 0})
    assert response.status_code == 400


def test_section_patch_unknown_event(client):
    sid = make_session(client)
    section_id = client.post(
        f"/sessions/{sid}/sections", json={"index": 0, "title": "S"}
    ).json()["id"]
    response = client.patch(
        f"/sessions/{sid}/sections/{section_id}", json={"events": ["hypnosis"]}
    )
    assert response.status_code == 400


def test_actions_follow_event_changes(client, registry):
    sid = make_session(client)
    section_id = client.post(
        f"/sessions/{sid}/sections", json={"index": 0, "title": "S"}
    ).json()["id"]
    url = f"/sessions/{sid}/sections/{section_id}/actions"
    assert client.get(url).json()["contextual"] == []
    for events in (
        ["present_stimulus"],
        ["gain_attention", "provide_feedback"],
        ["elicit_performance", "present_stimulus"],
        [],
    ):
        client.patch(f"/sessions/{sid}/sections/{section_id}", json={"events": events})
        got = client.get(url).json()
        expected = [
            a.id for a in registry.activities_for([Event(e) for e in events], False)
        ]
        assert got["contextual"] == expected
        assert got["core"] == [
            "regenerate_section",
            "evaluate_and_suggest",
            "presentation_advice",
            "slide_suggestions",
        ]


def prepared_session(client) -> tuple[str, str]:
    sid = make_session(client)
    generate_goals(client, sid)
    generate_outline(client, sid)
    plan = client.get(f"/sessions/{sid}/plan").json()
    section = next(s for s in plan["sections"] if "present_stimulus" in s["events"])
    return sid, section["id"]


def test_activity_stream_records_exchange(client):
    sid, section_id = prepared_session(client)
    response = client.post(
        f"/sessions/{sid}/sections/{section_id}/actions/present_stimulus.definition",
        json={"context_selection": "hash function"},
    )
    assert response.status_code == 200
    frames = parse_sse(response.text)
    assert frames[0][0] == "meta"
    exchange_id = frames[0][1]["exchange_id"]
    assert response.headers["x-exchange-id"] == exchange_id
    assert frames[-1][0] == "done"
    exchange = frames[-1][1]["exchange"]
    assert exchange["status"] == "done"
    assert exchange["response"] == stream_text(frames)
    assert "hash function" in exchange["rendered_prompt"]
    history = client.get(f"/sessions/{sid}/history", params={"section": section_id}).json()
    assert [e["id"] for e in history["exchanges"]] == [exchange_id]


def test_activity_debug_prompts_echo(client):
    sid, section_id = prepared_session(client)
    response = client.post(
        f"/sessions/{sid}/sections/{section_id}/actions/evaluate_and_suggest?debug=prompts",
        json={},
    )
    prompt = parse_sse(response.text)[0][1]["rendered_prompt"]
    assert prompt.startswith(PREFIX_START)
    assert EVENT_BLOCK_SENTENCE in prompt


def test_activity_not_available_maps_to_422(client):
    sid, _ = prepared_session(client)
    plan = client.get(f"/sessions/{sid}/plan").json()
    target = next(s for s in plan["sections"] if "present_stimulus" not in s["events"])
    response = client.post(
        f"/sessions/{sid}/sections/{target['id']}/actions/present_stimulus.definition",
        json={},
    )
    assert response.status_code == 422
    assert response.json()["code"] == "activity_not_available"


def test_unimplemented_activity_maps_to_422(client):
    sid, _ = prepared_session(client)
    plan = client.get(f"/sessions/{sid}/plan").json()
    target = next(
        s for s in plan["sections"] if "enhance_retention_transfer" in s["events"]
    )
    response = client.post(
        f"/sessions/{sid}/sections/{target['id']}/actions/enhance_retention_transfer.paper_topics",
        json={},
    )
    assert response.status_code == 422
    assert response.json()["code"] == "unimplemented_activity"


def test_unknown_action_maps_to_404(client):
    sid, section_id = prepared_session(client)
    response = client.post(
        f"/sessions/{sid}/sections/{section_id}/actions/defragment", json={}
    )
    assert response.status_code == 404


def test_query_and_continue_flow(client):
    sid, section_id = prepared_session(client)
    response = client.post(
        f"/sessions/{sid}/sections/{section_id}/query",
        json={"text": "I need three analogies for hashing"},
    )
    frames = parse_sse(response.text)
    assert frames[-1][0] == "done"
    exchange = frames[-1][1]["exchange"]
    assert exchange["trigger"] == "free_query"
    conversation_id = exchange["conversation_id"]
    follow = client.post(
        f"/conversations/{conversation_id}/continue", json={"text": "shorter please"}
    )
    follow_frames = parse_sse(follow.text)
    assert follow_frames[-1][0] == "done"
    assert follow_frames[-1][1]["exchange"]["trigger"] == "continuation"
    history = client.get(f"/sessions/{sid}/history").json()["exchanges"]
    assert [e["trigger"] for e in history] == ["free_query", "continuation"]


def test_generation_request_token_replays_recorded_exchange(client):
    sid, section_id = prepared_session(client)
    url = f"/sessions/{sid}/sections/{section_id}/actions/present_stimulus.definition"
    body = {"context_selection": "hash function", "request_token": "tok-act-1"}
    first_frames = parse_sse(client.post(url, json=body).text)
    first_exchange = first_frames[-1][1]["exchange"]
    replay_frames = parse_sse(client.post(url, json=body).text)
    assert replay_frames[0][1].get("replayed") is True
    assert replay_frames[0][1]["exchange_id"] == first_exchange["id"]
    assert replay_frames[-1][1]["exchange"]["id"] == first_exchange["id"]
    # no second generation was recorded
    history = client.get(f"/sessions/{sid}/history").json()["exchanges"]
    assert len(history) == 1

    # continuation endpoint honours tokens the same way
    conv = first_exchange["conversation_id"]
    continue_body = {"text": "go on", "request_token": "tok-cont-1"}
    cont = parse_sse(client.post(f"/conversations/{conv}/continue", json=continue_body).text)
    cont_replay = parse_sse(
        client.post(f"/conversations/{conv}/continue", json=continue_body).text
    )
    assert cont_replay[0][1].get("replayed") is True
    assert cont_replay[-1][1]["exchange"]["id"] == cont[-1][1]["exchange"]["id"]
    assert len(client.get(f"/sessions/{sid}/history").json()["exchanges"]) == 2


def test_query_empty_text_rejected(client):
    sid, section_id = prepared_session(client)
    response = client.post(f"/sessions/{sid}/sections/{section_id}/query", json={"text": " "})
    assert response.status_code == 400


def test_continue_unknown_conversation(client):
    response = client.post("/conversations/cv-missing/continue", json={"text": "hi"})
    assert response.status_code == 404


def test_stop_finished_generation_acks_done(client):
    sid = make_session(client)
    frames = generate_goals(client, sid)
    generation_id = frames[0][1]["generation_id"]
    response = client.post(f"/generations/{generation_id}/stop")
    assert response.status_code == 200
    assert response.json()["status"] == "done"


def test_stop_unknown_generation(client):
    assert client.post("/generations/gen-missing/stop").status_code == 404


def _slow_mock_app(registry):
    provider = MockProvider(fallback=[f"w{i} " for i in range(300)], chunk_delay=0.01)
    return create_app(
        store=SessionStore(),
        registry=registry,
        provider=provider,
        provider_config=ProviderConfig(model_name="mock"),
    )


def _prepare_slow_section(client) -> tuple[str, str]:
    sid = client.post("/sessions", json={"meta": META}).json()["id"]
    section_id = client.post(
        f"/sessions/{sid}/sections", json={"index": 0, "title": "S"}
    ).json()["id"]
    client.patch(f"/sessions/{sid}/sections/{section_id}", json={"events": ["gain_attention"]})
    client.put(f"/sessions/{sid}/goals", json={"text": "1. goal"})
    return sid, section_id


def test_stop_ack_during_stream(registry):
    import httpx

    from support import run_server

    with run_server(_slow_mock_app(registry)) as base:
        with httpx.Client(base_url=base, timeout=30) as client:
            sid, section_id = _prepare_slow_section(client)
            url = f"/sessions/{sid}/sections/{section_id}/actions/gain_attention.open_questions"
            chunks_seen = 0
            terminal = None
            with client.stream("POST", url, json={}) as stream:
                generation_id = stream.headers["x-generation-id"]
                for line in stream.iter_lines():
                    if line.startswith("data:") and '"text"' in line:
                        chunks_seen += 1
                        if chunks_seen == 3:
                            ack = client.post(f"/generations/{generation_id}/stop")
                            assert ack.status_code == 200
                    if line.startswith("event: ") and line != "event: meta":
                        terminal = line[len("event: ") :]
            assert terminal == "cancelled"
            assert chunks_seen <= 4
            history = client.get(f"/sessions/{sid}/history").json()["exchanges"]
            assert history[0]["status"] == "cancelled"
            # partial text is retained on the record
            assert history[0]["response"].startswith("w0 ")


def test_history_scoping(client):
    sid, section_id = prepared_session(client)
    plan = client.get(f"/sessions/{sid}/plan").json()
    other = next(s["id"] for s in plan["sections"] if s["id"] != section_id)
    client.post(f"/sessions/{sid}/sections/{section_id}/query", json={"text": "one"})
    client.post(f"/sessions/{sid}/sections/{other}/query", json={"text": "two"})
    scoped = client.get(f"/sessions/{sid}/history", params={"section": section_id}).json()
    assert all(e["section_id"] == section_id for e in scoped["exchanges"])
    assert len(scoped["exchanges"]) == 1
    assert len(client.get(f"/sessions/{sid}/history").json()["exchanges"]) == 2


def test_clear_output_endpoint(client):
    sid, section_id = prepared_session(client)
    response = client.post(
        f"/sessions/{sid}/sections/{section_id}/query", json={"text": "something"}
    )
    exchange_id = parse_sse(response.text)[0][1]["exchange_id"]
    assert client.post(f"/sessions/{sid}/exchanges/{exchange_id}/clear-output").json() == {
        "ok": True
    }
    history = client.get(f"/sessions/{sid}/history").json()["exchanges"]
    assert history[0]["output_cleared"] is True
    assert history[0]["response"]


def test_export_matches_serializer_exactly(client, registry):
    sid, _ = prepared_session(client)
    from lessonforge.plan import serialize_plan

    response = client.get(f"/sessions/{sid}/export")
    assert response.status_code == 200
    disposition = response.headers["content-disposition"]
    assert disposition.startswith("attachment;")
    assert disposition.endswith('.md"')
    assert "Data-Structures-and-Algorithms-Hash-Table" in disposition
    store: SessionStore = client.app.state.store
    session = store.load(sid)
    assert response.content == serialize_plan(session.plan, registry).encode("utf-8")


def test_export_can_exclude_ignored(client):
    sid, section_id = prepared_session(client)
    client.patch(f"/sessions/{sid}/sections/{section_id}", json={"ignored": True})
    with_ignored = client.get(f"/sessions/{sid}/export").content
    without = client.get(
        f"/sessions/{sid}/export", params={"include_ignored": "false"}
    ).content
    assert len(without) < len(with_ignored)


def test_busy_section_conflict_is_409(registry):
    import httpx

    from support import run_server

    with run_server(_slow_mock_app(registry)) as base:
        with httpx.Client(base_url=base, timeout=30) as client:
            sid, section_id = _prepare_slow_section(client)
            url = f"/sessions/{sid}/sections/{section_id}/actions/gain_attention.open_questions"
            with client.stream("POST", url, json={}) as stream:
                generation_id = stream.headers["x-generation-id"]
                conflict = client.post(url, json={})
                assert conflict.status_code == 409
                assert conflict.json()["code"] == "busy_section"
                client.post(f"/generations/{generation_id}/stop")
                for _ in stream.iter_lines():
                    pass


def test_registry_endpoint_lists_ids_and_labels(client, registry):
    body = client.get("/registry").json()
    assert len(body["events"]) == 9
    assert len(body["bloom_levels"]) == 6
    implemented = [a for a in body["activities"] if a["implemented"]]
    assert len(implemented) == 16
    assert {c["id"] for c in body["core_actions"]} == {
        "regenerate_section",
        "evaluate_and_suggest",
        "presentation_advice",
        "slide_suggestions",
    }


def test_api_responses_never_leak_credentials(registry):
    config = ProviderConfig(model_name="m", api_key="super-secret-key")
    app = create_app(
        store=SessionStore(),
        registry=registry,
        provider=default_mock_provider(registry),
        provider_config=config,
    )
    with TestClient(app) as client:
        sid = make_session(client)
        frames = generate_goals(client, sid)
        assert "super-secret-key" not in json.dumps([d for _, d in frames])
        assert "super-secret-key" not in json.dumps(client.get(f"/sessions/{sid}").json())
