/** Application shell: wires pages, sidebar, notices, and the API client. */

import { Api, ApiError, FetchLike, RegistryDoc } from "./api.js";
import { ClipboardWriter, defaultClipboard } from "./clipboard.js";
import { byId, clear, el } from "./dom.js";
import { ViewState } from "./state.js";
import { maybeShowTour } from "./tour.js";
import { GoalPage } from "./views/goal.js";
import { PlanningPage } from "./views/planning.js";
import { Sidebar } from "./views/sidebar.js";

export interface AppOptions {
  baseUrl: string;
  fetchFn?: FetchLike;
  clipboard?: ClipboardWriter;
  confirmFn?: (message: string) => boolean;
  saveFile?: (name: string, text: string) => void;
  storage?: Storage;
}

export class App {
  readonly api: Api;
  readonly state = new ViewState();
  registry: RegistryDoc | null = null;
  private goalPage: GoalPage;
  private planningPage: PlanningPage | null = null;
  private sidebar: Sidebar | null = null;
  private readonly opts: Required<AppOptions>;

  constructor(private readonly root: HTMLElement, options: AppOptions) {
    this.opts = {
      baseUrl: options.baseUrl,
      fetchFn: options.fetchFn ?? ((...args) => fetch(...args)),
      clipboard: options.clipboard ?? defaultClipboard(),
      confirmFn: options.confirmFn ?? ((message) => globalThis.confirm?.(message) ?? true),
      saveFile: options.saveFile ?? browserSaveFile,
      storage: options.storage ?? globalThis.localStorage,
    };
    this.api = new Api(this.opts.baseUrl, this.opts.fetchFn);
    this.goalPage = new GoalPage({
      api: this.api,
      state: this.state,
      notify: (error) => this.notify(error),
      onPlanReady: () => this.showPlanning(),
      trackStream: (id) => this.state.trackGeneration(id, null),
      untrackStream: (id) => this.state.finishGeneration(id),
    });
  }

  /** Boot the UI; with a session id, reload that session from the server. */
  async start(sessionId?: string): Promise<void> {
    clear(this.root);
    this.root.append(
      el("div", { id: "notices" }),
      el("main", { id: "page-root" }),
      el("div", { id: "sidebar-root", class: "hidden" }),
    );
    maybeShowTour(this.root, this.opts.storage);
    if (sessionId) {
      this.state.sessionId = sessionId;
      const plan = await this.api.getPlan(sessionId);
      if (plan.sections.length > 0) {
        await this.showPlanning();
        return;
      }
      const pageRoot = byId<HTMLElement>(this.root, "page-root");
      this.goalPage.render(pageRoot);
      byId<HTMLTextAreaElement>(pageRoot, "goals-text").value = plan.goals;
      byId<HTMLInputElement>(pageRoot, "course-name").value = plan.meta.course_name;
      byId<HTMLInputElement>(pageRoot, "lesson-topic").value = plan.meta.lesson_topic;
      byId<HTMLInputElement>(pageRoot, "student-stage").value = plan.meta.student_stage;
      return;
    }
    this.goalPage.render(byId(this.root, "page-root"));
  }

  private async ensureRegistry(): Promise<RegistryDoc> {
    if (!this.registry) this.registry = await this.api.getRegistry();
    return this.registry;
  }

  async showPlanning(): Promise<void> {
    const registry = await this.ensureRegistry();
    this.state.page = "planning";
    this.planningPage = new PlanningPage({
      api: this.api,
      state: this.state,
      registry,
      notify: (error) => this.notify(error),
      confirmFn: this.opts.confirmFn,
      saveFile: this.opts.saveFile,
      onSectionEventsChanged: async () => {
        await this.sidebar?.refreshActions();
      },
      openAssistant: (sectionId) => this.openAssistant(sectionId),
      trackStream: (id) => this.state.trackGeneration(id, null),
      untrackStream: (id) => this.state.finishGeneration(id),
    });
    this.sidebar = new Sidebar({
      api: this.api,
      state: this.state,
      registry,
      notify: (error) => this.notify(error),
      clipboard: this.opts.clipboard,
      readEditorSelection: (sectionId) => this.readEditorSelection(sectionId),
    });
    await this.planningPage.render(byId(this.root, "page-root"));
  }

  async openAssistant(sectionId: string): Promise<void> {
    this.state.openSidebar(sectionId);
    await this.sidebar?.render(byId(this.root, "sidebar-root"));
  }

  get planning(): PlanningPage | null {
    return this.planningPage;
  }

  get assistant(): Sidebar | null {
    return this.sidebar;
  }

  private readEditorSelection(sectionId: string): string | null {
    const card = this.root.querySelector(`.section-card[data-id="${sectionId}"]`);
    const area = card?.querySelector<HTMLTextAreaElement>(".card-content");
    if (!area) return null;
    const start = area.selectionStart ?? 0;
    const end = area.selectionEnd ?? 0;
    if (start === end) return null;
    return area.value.slice(start, end);
  }

  notify(error: unknown): void {
    const notices = byId<HTMLDivElement>(this.root, "notices");
    const code = error instanceof ApiError ? error.code : "error";
    const message = error instanceof Error ? error.message : String(error);
    const notice = el(
      "div",
      { class: "notice", "data-code": code },
      el("strong", {}, `[${code}] `),
      message,
      el("button", { class: "notice-dismiss", onclick: () => notice.remove() }, "✕"),
    );
    notices.append(notice);
  }
}

function browserSaveFile(name: string, text: string): void {
  const blob = new Blob([text], { type: "text/markdown" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = name;
  document.body.append(anchor);
  anchor.click();
  anchor.remove();
  URL.revokeObjectURL(url);
}
