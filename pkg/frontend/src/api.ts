/** Typed client for the lesson-planning service.
 *
 * Every prompt is rendered server-side; this client only moves ids, texts,
 * and documents. Streaming endpoints are consumed as server-sent events.
 */

import { readSse } from "./sse.js";

export interface Meta {
  course_name: string;
  lesson_topic: string;
  student_stage: string;
}

export interface SectionDoc {
  id: string;
  title: string;
  events: string[];
  minutes: number | null;
  content: string;
  ignored: boolean;
  edited: boolean;
}

export interface PlanDoc {
  meta: Meta;
  goals: string;
  sections: SectionDoc[];
}

export interface SessionSummary {
  id: string;
  meta: Meta;
  sections: number;
  created: string;
  updated: string;
}

export interface ExchangeDoc {
  id: string;
  section_id: string;
  trigger: string;
  user_text: string | null;
  context_selection: string | null;
  rendered_prompt: string;
  response: string;
  status: string;
  output_cleared: boolean;
  conversation_id: string | null;
  created: string;
}

export interface RegistryDoc {
  events: { id: string; display_name: string }[];
  bloom_levels: { id: string; display_name: string }[];
  activities: { id: string; event: string; label: string; implemented: boolean }[];
  core_actions: { id: string; label: string }[];
}

export interface ActionsDoc {
  core: string[];
  contextual: string[];
}

export interface StreamHandlers {
  /** First frame: generation id (and exchange id for assistant triggers). */
  onMeta?(meta: { generation_id: string; exchange_id?: string }): void;
  onChunk?(text: string): void;
}

export interface StreamResult {
  status: string; // done | cancelled | failed
  data: Record<string, unknown>;
  text: string;
  generationId: string | null;
  exchangeId: string | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = typeof fetch;

export class Api {
  constructor(
    readonly baseUrl: string,
    readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "http_error";
      let message = `${method} ${path} failed with ${response.status}`;
      try {
        const payload = await response.json();
        code = payload.code ?? code;
        message = payload.message ?? message;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(response.status, code, message);
    }
    return response;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.request(method, path, body);
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  private async stream(
    method: string,
    path: string,
    body: unknown,
    handlers: StreamHandlers = {},
  ): Promise<StreamResult> {
    const response = await this.request(method, path, body);
    const result: StreamResult = {
      status: "failed",
      data: {},
      text: "",
      generationId: response.headers.get("x-generation-id"),
      exchangeId: response.headers.get("x-exchange-id"),
    };
    if (!response.body) throw new ApiError(0, "no_stream", "response had no body");
    await readSse(response.body, (frame) => {
      const payload = frame.data ? JSON.parse(frame.data) : {};
      if (frame.event === "meta") {
        result.generationId = payload.generation_id ?? result.generationId;
        result.exchangeId = payload.exchange_id ?? result.exchangeId;
        handlers.onMeta?.(payload);
      } else if (frame.event === null) {
        result.text += payload.text ?? "";
        handlers.onChunk?.(payload.text ?? "");
      } else {
        result.status = frame.event;
        result.data = payload;
      }
    });
    return result;
  }

  // -- registry and sessions ------------------------------------------------

  getRegistry(): Promise<RegistryDoc> {
    return this.json("GET", "/registry");
  }

  createSession(meta: Meta): Promise<SessionSummary> {
    return this.json("POST", "/sessions", { meta });
  }

  getSession(sessionId: string): Promise<SessionSummary> {
    return this.json("GET", `/sessions/${sessionId}`);
  }

  // -- goals ------------------------------------------------------------------

  generateGoals(sessionId: string, handlers?: StreamHandlers): Promise<StreamResult> {
    return this.stream("POST", `/sessions/${sessionId}/goals/generate`, undefined, handlers);
  }

  putGoals(sessionId: string, text: string): Promise<{ goals: string }> {
    return this.json("PUT", `/sessions/${sessionId}/goals`, { text });
  }

  getGoals(sessionId: string): Promise<{ goals: string }> {
    return this.json("GET", `/sessions/${sessionId}/goals`);
  }

  // -- outline and plan ---------------------------------------------------------

  generateOutline(
    sessionId: string,
    confirm: boolean,
    handlers?: StreamHandlers,
  ): Promise<StreamResult> {
    return this.stream(
      "POST",
      `/sessions/${sessionId}/outline/generate`,
      { confirm },
      handlers,
    );
  }

  getPlan(sessionId: string): Promise<PlanDoc> {
    return this.json("GET", `/sessions/${sessionId}/plan`);
  }

  insertSection(sessionId: string, index: number, title: string): Promise<SectionDoc> {
    return this.json("POST", `/sessions/${sessionId}/sections`, { index, title });
  }

  patchSection(
    sessionId: string,
    sectionId: string,
    patch: Partial<Pick<SectionDoc, "title" | "minutes" | "content" | "ignored" | "events">>,
  ): Promise<SectionDoc> {
    return this.json("PATCH", `/sessions/${sessionId}/sections/${sectionId}`, patch);
  }

  deleteSection(sessionId: string, sectionId: string): Promise<void> {
    return this.json("DELETE", `/sessions/${sessionId}/sections/${sectionId}`);
  }

  // -- assistant ------------------------------------------------------------------

  getActions(sessionId: string, sectionId: string): Promise<ActionsDoc> {
    return this.json("GET", `/sessions/${sessionId}/sections/${sectionId}/actions`);
  }

  runAction(
    sessionId: string,
    sectionId: string,
    actionId: string,
    contextSelection: string | null,
    handlers?: StreamHandlers,
  ): Promise<StreamResult> {
    return this.stream(
      "POST",
      `/sessions/${sessionId}/sections/${sectionId}/actions/${actionId}`,
      { context_selection: contextSelection },
      handlers,
    );
  }

  query(
    sessionId: string,
    sectionId: string,
    text: string,
    handlers?: StreamHandlers,
  ): Promise<StreamResult> {
    return this.stream(
      "POST",
      `/sessions/${sessionId}/sections/${sectionId}/query`,
      { text },
      handlers,
    );
  }

  continueConversation(
    conversationId: string,
    text: string,
    handlers?: StreamHandlers,
  ): Promise<StreamResult> {
    return this.stream("POST", `/conversations/${conversationId}/continue`, { text }, handlers);
  }

  stop(generationId: string): Promise<{ status: string }> {
    return this.json("POST", `/generations/${generationId}/stop`);
  }

  history(sessionId: string, sectionId?: string): Promise<{ exchanges: ExchangeDoc[] }> {
    const suffix = sectionId ? `?section=${sectionId}` : "";
    return this.json("GET", `/sessions/${sessionId}/history${suffix}`);
  }

  clearOutput(sessionId: string, exchangeId: string): Promise<{ ok: boolean }> {
    return this.json("POST", `/sessions/${sessionId}/exchanges/${exchangeId}/clear-output`);
  }

  // -- export --------------------------------------------------------------------

  async exportPlan(sessionId: string): Promise<{ filename: string; text: string }> {
    const response = await this.request("GET", `/sessions/${sessionId}/export`);
    const disposition = response.headers.get("content-disposition") ?? "";
    const match = /filename="([^"]+)"/.exec(disposition);
    return {
      filename: match ? match[1] : "lesson-plan.md",
      text: await response.text(),
    };
  }
}
