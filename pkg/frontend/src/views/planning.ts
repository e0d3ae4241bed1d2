/** Lesson-planning page: block cards over the plan document. */

import { Api, ApiError, PlanDoc, RegistryDoc, SectionDoc } from "../api.js";
import { byId, clear, el } from "../dom.js";
import { installEditorShortcuts, prefixLines, wrapSelection } from "../shortcuts.js";
import { ViewState } from "../state.js";

export interface PlanningPageContext {
  api: Api;
  state: ViewState;
  registry: RegistryDoc;
  notify(error: unknown): void;
  confirmFn(message: string): boolean;
  saveFile(name: string, text: string): void;
  onSectionEventsChanged(sectionId: string): Promise<void>;
  openAssistant(sectionId: string): Promise<void>;
  trackStream(generationId: string): void;
  untrackStream(generationId: string): void;
}

export class PlanningPage {
  private root: HTMLElement | null = null;
  plan: PlanDoc | null = null;

  constructor(private readonly ctx: PlanningPageContext) {}

  async render(root: HTMLElement): Promise<void> {
    this.root = root;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    const { api, state } = this.ctx;
    if (!this.root || !state.sessionId) return;
    this.plan = await api.getPlan(state.sessionId);
    this.paint();
  }

  private paint(): void {
    const root = this.root;
    const plan = this.plan;
    if (!root || !plan) return;
    clear(root);
    const cards = el("div", { id: "cards" });
    plan.sections.forEach((section, index) => cards.append(this.card(section, index)));
    root.append(
      el(
        "section",
        { id: "planning-page", class: "page" },
        el(
          "header",
          { class: "row" },
          el("h1", {}, `${plan.meta.course_name} - ${plan.meta.lesson_topic}`),
          el("button", { id: "regenerate-outline", onclick: () => void this.regenerateOutline() },
            "Regenerate outline"),
          el("button", { id: "markdown-editor-toggle", onclick: () => this.togglePlanEditor() },
            "Edit using Markdown editor"),
          el("button", { id: "download-plan", onclick: () => void this.download() },
            "Download Lesson Plan"),
        ),
        el("div", { id: "plan-editor-wrap", class: "hidden" },
          el("textarea", { id: "plan-editor", rows: "16" }),
          el("button", { id: "plan-editor-apply", onclick: () => void this.applyPlanEditor() }, "Apply"),
        ),
        cards,
        el("button", {
          id: "append-section",
          onclick: () => void this.insertAt(plan.sections.length),
        }, "+ Add section at the end"),
      ),
    );
  }

  private card(section: SectionDoc, index: number): HTMLElement {
    const { registry } = this.ctx;
    const names = new Map(registry.events.map((event) => [event.id, event.display_name]));
    const tags = el("span", { class: "event-tags" });
    for (const eventId of section.events) {
      tags.append(el("span", { class: "tag", "data-event": eventId }, names.get(eventId) ?? eventId));
    }
    const contentArea = el("textarea", {
      class: "card-content",
      rows: "5",
      oninput: () => this.ctx.state.unsavedEdits.add(section.id),
      onchange: () => void this.saveContent(section.id, contentArea.value),
    });
    contentArea.value = section.content;
    installEditorShortcuts(contentArea);
    const titleInput = el("input", {
      class: "card-title",
      type: "text",
      onchange: () => void this.patch(section.id, { title: titleInput.value }),
    });
    titleInput.value = section.title;
    const minutesInput = el("input", {
      class: "minutes-input",
      type: "number",
      min: "1",
      placeholder: "min",
      onchange: () => void this.patch(section.id, {
        minutes: minutesInput.value ? Number(minutesInput.value) : null,
      }),
    });
    if (section.minutes !== null) minutesInput.value = String(section.minutes);

    const card = el(
      "article",
      { class: "section-card" + (section.ignored ? " ignored" : ""), "data-id": section.id },
      el("div", { class: "row" }, titleInput, minutesInput),
      el("div", { class: "row" },
        tags,
        el("button", { class: "btn-set-events", onclick: () => this.openEventsPopup(card, section) },
          "Set Instructional Events"),
      ),
      el("div", { class: "row toolbar" },
        el("button", { class: "fmt-bold", title: "bold (Ctrl+B)",
          onclick: () => wrapSelection(contentArea, "**") }, "B"),
        el("button", { class: "fmt-italic", title: "italic (Ctrl+I)",
          onclick: () => wrapSelection(contentArea, "*") }, "I"),
        el("button", { class: "fmt-list", title: "list (Ctrl+L)",
          onclick: () => prefixLines(contentArea, "- ") }, "• list"),
      ),
      contentArea,
      el("div", { class: "row" },
        el("button", { class: "btn-assistant",
          onclick: () => void this.ctx.openAssistant(section.id) }, "Open the lesson plan assistant"),
        el("button", { class: "btn-insert", onclick: () => void this.insertAt(index + 1) },
          "Insert block below"),
        el("button", { class: "btn-ignore",
          onclick: () => void this.patch(section.id, { ignored: !section.ignored }) },
          section.ignored ? "Unignore" : "Ignore"),
        el("button", { class: "btn-delete", onclick: () => void this.remove(section.id) },
          "Delete"),
      ),
    );
    return card;
  }

  private openEventsPopup(card: HTMLElement, section: SectionDoc): void {
    card.querySelector(".events-popup")?.remove();
    const boxes: HTMLInputElement[] = [];
    const list = el("div", { class: "events-popup" });
    for (const event of this.ctx.registry.events) {
      const box = el("input", { type: "checkbox", "data-event": event.id });
      box.checked = section.events.includes(event.id);
      boxes.push(box);
      list.append(el("label", { class: "event-choice" }, box, event.display_name));
    }
    list.append(
      el("button", {
        class: "events-apply",
        onclick: () => {
          const chosen = boxes.filter((b) => b.checked).map((b) => b.getAttribute("data-event")!);
          void this.applyEvents(section.id, chosen, list);
        },
      }, "Apply events"),
    );
    card.append(list);
  }

  private async applyEvents(sectionId: string, events: string[], popup: HTMLElement): Promise<void> {
    if (await this.patch(sectionId, { events })) {
      popup.remove();
      // contextual action buttons follow the section's events
      await this.ctx.onSectionEventsChanged(sectionId);
    }
  }

  private async saveContent(sectionId: string, content: string): Promise<void> {
    if (await this.patch(sectionId, { content })) {
      this.ctx.state.unsavedEdits.delete(sectionId);
    }
  }

  private async patch(
    sectionId: string,
    patch: Partial<Pick<SectionDoc, "title" | "minutes" | "content" | "ignored" | "events">>,
  ): Promise<boolean> {
    const { api, state } = this.ctx;
    if (!state.sessionId) return false;
    try {
      await api.patchSection(state.sessionId, sectionId, patch);
      await this.refresh();
      return true;
    } catch (error) {
      this.ctx.notify(error);
      return false;
    }
  }

  private async insertAt(index: number): Promise<void> {
    const { api, state } = this.ctx;
    if (!state.sessionId) return;
    try {
      await api.insertSection(state.sessionId, index, "New section");
      await this.refresh();
    } catch (error) {
      this.ctx.notify(error);
    }
  }

  private async remove(sectionId: string): Promise<void> {
    const { api, state } = this.ctx;
    if (!state.sessionId) return;
    try {
      await api.deleteSection(state.sessionId, sectionId);
      if (state.openSectionId === sectionId) state.closeSidebar();
      await this.refresh();
    } catch (error) {
      this.ctx.notify(error);
    }
  }

  private async regenerateOutline(): Promise<void> {
    const { state } = this.ctx;
    if (!state.sessionId) return;
    try {
      let result = await this.runOutline(false);
      if (result === "confirmation_required") {
        const go = this.ctx.confirmFn(
          "Regenerating replaces the current sections, including your edits. Continue?",
        );
        if (!go) return;
        result = await this.runOutline(true);
      }
      if (result === "done") await this.refresh();
    } catch (error) {
      this.ctx.notify(error);
    }
  }

  private async runOutline(confirm: boolean): Promise<string> {
    const { api, state } = this.ctx;
    let generationId: string | null = null;
    try {
      const result = await api.generateOutline(state.sessionId!, confirm, {
        onMeta: (meta) => {
          generationId = meta.generation_id;
          this.ctx.trackStream(meta.generation_id);
        },
      });
      return result.status;
    } catch (error) {
      if (error instanceof ApiError && error.code === "confirmation_required") {
        return "confirmation_required";
      }
      throw error;
    } finally {
      if (generationId) this.ctx.untrackStream(generationId);
    }
  }

  private togglePlanEditor(): void {
    const root = this.root;
    if (!root || !this.plan) return;
    const wrap = byId<HTMLDivElement>(root, "plan-editor-wrap");
    const editor = byId<HTMLTextAreaElement>(root, "plan-editor");
    if (wrap.classList.contains("hidden")) {
      editor.value = this.plan.sections
        .map((section) => sectionMarkdown(section, this.ctx.registry))
        .join("\n");
      wrap.classList.remove("hidden");
    } else {
      wrap.classList.add("hidden");
    }
  }

  private async applyPlanEditor(): Promise<void> {
    // Whole-plan markdown editing re-uses the outline formatter server-side:
    // the edited text replaces section contents via the plan document.
    const root = this.root;
    const { api, state } = this.ctx;
    if (!root || !state.sessionId || !this.plan) return;
    const editor = byId<HTMLTextAreaElement>(root, "plan-editor");
    try {
      const response = await fetchPlanFromMarkdown(api, state.sessionId, editor.value, this.plan);
      if (response) await this.refresh();
      byId<HTMLDivElement>(root, "plan-editor-wrap").classList.add("hidden");
    } catch (error) {
      this.ctx.notify(error);
    }
  }

  private async download(): Promise<void> {
    const { api, state } = this.ctx;
    if (!state.sessionId) return;
    try {
      const { filename, text } = await api.exportPlan(state.sessionId);
      this.ctx.saveFile(filename, text);
    } catch (error) {
      this.ctx.notify(error);
    }
  }
}

function sectionMarkdown(section: SectionDoc, registry: RegistryDoc): string {
  const names = new Map(registry.events.map((event) => [event.id, event.display_name]));
  const lines = [`# ${section.title}`];
  for (const eventId of section.events) lines.push(`## ${names.get(eventId) ?? eventId}`);
  if (section.minutes !== null) lines.push(`### ${section.minutes} minutes`);
  let text = lines.join("\n") + "\n";
  if (section.content) text += section.content.endsWith("\n") ? section.content : section.content + "\n";
  return text;
}

/** Apply a whole-plan markdown edit by updating each section's content
 * block-by-block; structural changes go through the card controls. */
async function fetchPlanFromMarkdown(
  api: Api,
  sessionId: string,
  markdown: string,
  plan: PlanDoc,
): Promise<boolean> {
  const blocks = markdown.split(/^# /m).filter((block) => block.trim().length > 0);
  if (blocks.length !== plan.sections.length) {
    throw new ApiError(
      0,
      "validation_error",
      "the markdown editor cannot add or remove sections; use the block controls",
    );
  }
  for (let i = 0; i < blocks.length; i++) {
    const section = plan.sections[i];
    const lines = blocks[i].split("\n");
    const title = lines.shift()?.trim() ?? section.title;
    const contentLines = lines.filter(
      (line) => !line.startsWith("## ") && !/^### \d+ minutes$/.test(line),
    );
    const content = contentLines.join("\n").replace(/\s+$/, "");
    const patch: Record<string, unknown> = {};
    if (title && title !== section.title) patch.title = title;
    if (content !== section.content.replace(/\s+$/, "")) patch.content = content;
    if (Object.keys(patch).length > 0) {
      await api.patchSection(sessionId, section.id, patch);
    }
  }
  return true;
}
