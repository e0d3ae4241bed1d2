/** Goal-setting page: lesson metadata, iterated goals, outline kickoff. */

import { Api, ApiError } from "../api.js";
import { byId, clear, el } from "../dom.js";
import { ViewState } from "../state.js";

export interface GoalPageContext {
  api: Api;
  state: ViewState;
  notify(error: unknown): void;
  onPlanReady(): Promise<void>;
  trackStream(generationId: string): void;
  untrackStream(generationId: string): void;
}

export class GoalPage {
  constructor(private readonly ctx: GoalPageContext) {}

  render(root: HTMLElement): void {
    clear(root);
    const form = el(
      "section",
      { id: "goal-page", class: "page" },
      el("h1", {}, "Plan a lesson"),
      field("course-name", "Course name", "e.g. Data Structures and Algorithms"),
      field("lesson-topic", "Lesson topic", "e.g. Quick Sort"),
      field("student-stage", "Student stage", "e.g. Sophomore"),
      el("div", { class: "row" },
        el("button", { id: "generate-goals", onclick: () => void this.generateGoals(root) },
          "Generate Lesson Goals"),
        el("span", { id: "goal-status", class: "status" }),
      ),
      el("label", { for: "goals-text" }, "Lesson goals (editable)"),
      el("textarea", { id: "goals-text", rows: "8", placeholder: "Write goals here, or generate them" }),
      el("div", { class: "row" },
        el("button", { id: "generate-outline", onclick: () => void this.generateOutline(root) },
          "Generate outline"),
      ),
    );
    root.append(form);
  }

  private meta(root: HTMLElement) {
    return {
      course_name: byId<HTMLInputElement>(root, "course-name").value.trim(),
      lesson_topic: byId<HTMLInputElement>(root, "lesson-topic").value.trim(),
      student_stage: byId<HTMLInputElement>(root, "student-stage").value.trim(),
    };
  }

  private async ensureSession(root: HTMLElement): Promise<string> {
    const { api, state } = this.ctx;
    if (state.sessionId) return state.sessionId;
    const meta = this.meta(root);
    for (const [key, value] of Object.entries(meta)) {
      if (!value) throw new ApiError(0, "validation_error", `please fill in ${key.replace("_", " ")}`);
    }
    const summary = await api.createSession(meta);
    state.sessionId = summary.id;
    return summary.id;
  }

  private async generateGoals(root: HTMLElement): Promise<void> {
    const { api } = this.ctx;
    const status = byId<HTMLSpanElement>(root, "goal-status");
    const goalsArea = byId<HTMLTextAreaElement>(root, "goals-text");
    try {
      const sessionId = await this.ensureSession(root);
      const current = goalsArea.value.trim();
      if (current) await api.putGoals(sessionId, current);
      status.textContent = "generating goals...";
      goalsArea.value = "";
      let generationId: string | null = null;
      const result = await api.generateGoals(sessionId, {
        onMeta: (meta) => {
          generationId = meta.generation_id;
          this.ctx.trackStream(meta.generation_id);
        },
        onChunk: (text) => {
          goalsArea.value += text;
        },
      });
      if (generationId) this.ctx.untrackStream(generationId);
      if (result.status === "done") {
        goalsArea.value = String(result.data.goals ?? goalsArea.value);
        status.textContent = "goals ready; edit them, regenerate, or continue";
      } else {
        status.textContent = `generation ${result.status}`;
      }
    } catch (error) {
      status.textContent = "";
      this.ctx.notify(error);
    }
  }

  private async generateOutline(root: HTMLElement): Promise<void> {
    const { api } = this.ctx;
    const status = byId<HTMLSpanElement>(root, "goal-status");
    const goalsArea = byId<HTMLTextAreaElement>(root, "goals-text");
    try {
      const sessionId = await this.ensureSession(root);
      const current = goalsArea.value.trim();
      if (current) await api.putGoals(sessionId, current);
      status.textContent = "generating outline...";
      let generationId: string | null = null;
      const result = await api.generateOutline(sessionId, false, {
        onMeta: (meta) => {
          generationId = meta.generation_id;
          this.ctx.trackStream(meta.generation_id);
        },
      });
      if (generationId) this.ctx.untrackStream(generationId);
      if (result.status !== "done") {
        status.textContent = `generation ${result.status}`;
        return;
      }
      status.textContent = "";
      await this.ctx.onPlanReady();
    } catch (error) {
      status.textContent = "";
      this.ctx.notify(error);
    }
  }
}

function field(id: string, label: string, placeholder: string): HTMLElement {
  return el(
    "div",
    { class: "field" },
    el("label", { for: id }, label),
    el("input", { id, type: "text", placeholder }),
  );
}
