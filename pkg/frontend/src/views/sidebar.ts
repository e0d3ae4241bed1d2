/** Assistant sidebar: core actions, contextual activities, free queries,
 * streamed output, continuation, history. */

import { Api, ExchangeDoc, RegistryDoc, StreamResult } from "../api.js";
import { ClipboardWriter } from "../clipboard.js";
import { byId, clear, el } from "../dom.js";
import { ViewState } from "../state.js";

export interface SidebarContext {
  api: Api;
  state: ViewState;
  registry: RegistryDoc;
  notify(error: unknown): void;
  clipboard: ClipboardWriter;
  /** read the current selection inside the open section's editor */
  readEditorSelection(sectionId: string): string | null;
}

export class Sidebar {
  private root: HTMLElement | null = null;
  private lastExchangeId: string | null = null;
  private lastConversationId: string | null = null;
  private currentGenerationId: string | null = null;

  constructor(private readonly ctx: SidebarContext) {}

  async render(root: HTMLElement): Promise<void> {
    this.root = root;
    const { state } = this.ctx;
    clear(root);
    if (!state.sidebarOpen || !state.openSectionId) {
      root.classList.add("hidden");
      return;
    }
    root.classList.remove("hidden");
    root.append(
      el(
        "aside",
        { id: "sidebar" },
        el("div", { class: "row" },
          el("h2", {}, "Lesson plan assistant"),
          el("button", { id: "sidebar-close", onclick: () => this.close() }, "Close Assistant"),
        ),
        el("div", { id: "context-row", class: "row" },
          el("button", { id: "btn-set-context", onclick: () => this.setContext() }, "(set as context)"),
          el("span", { id: "context-badge", class: "badge hidden" }),
          el("button", { id: "btn-clear-context", class: "hidden", onclick: () => this.clearContext() }, "✕"),
        ),
        el("h3", {}, "Core Actions"),
        el("div", { id: "core-actions", class: "actions" }),
        el("h3", {}, "Contextual Actions"),
        el("div", { id: "contextual-actions", class: "actions" }),
        el("div", { class: "row" },
          el("button", { id: "i-need-toggle", onclick: () => this.toggleNeed() }, "I need..."),
        ),
        el("div", { id: "i-need-wrap", class: "hidden row" },
          el("input", { id: "i-need-input", type: "text", placeholder: "I need ..." }),
          el("button", { id: "i-need-send", onclick: () => void this.sendNeed() }, "Ask"),
        ),
        el("h3", {}, "Output Area"),
        el("textarea", { id: "output-area", rows: "10", readonly: true }),
        el("div", { class: "row" },
          el("button", { id: "btn-stop", class: "hidden", onclick: () => void this.stop() },
            "Stop Generating"),
          el("button", { id: "btn-copy", onclick: () => void this.copy() }, "Copy"),
          el("button", { id: "btn-trash", title: "delete all content in the output area",
            onclick: () => void this.trash() }, "🗑"),
          el("button", { id: "btn-history", onclick: () => void this.toggleHistory() }, "history record"),
        ),
        el("div", { id: "continue-wrap", class: "hidden row" },
          el("input", { id: "continue-input", type: "text", placeholder: "Follow up..." }),
          el("button", { id: "continue-send", onclick: () => void this.sendContinue() }, "Send"),
        ),
        el("div", { id: "history-panel", class: "hidden" }),
      ),
    );
    await this.refreshActions();
  }

  async refreshActions(): Promise<void> {
    const root = this.root;
    const { api, state, registry } = this.ctx;
    if (!root || !state.sessionId || !state.openSectionId) return;
    const actions = await api.getActions(state.sessionId, state.openSectionId);
    const coreLabels = new Map(registry.core_actions.map((a) => [a.id, a.label]));
    const activityLabels = new Map(registry.activities.map((a) => [a.id, a.label]));
    const coreBox = byId<HTMLDivElement>(root, "core-actions");
    const ctxBox = byId<HTMLDivElement>(root, "contextual-actions");
    clear(coreBox);
    clear(ctxBox);
    for (const id of actions.core) {
      coreBox.append(el("button", { "data-action": id, onclick: () => void this.run(id) },
        coreLabels.get(id) ?? id));
    }
    for (const id of actions.contextual) {
      ctxBox.append(el("button", { "data-action": id, onclick: () => void this.run(id) },
        activityLabels.get(id) ?? id));
    }
  }

  private close(): void {
    this.ctx.state.closeSidebar();
    this.root?.classList.add("hidden");
    if (this.root) clear(this.root);
  }

  // -- context selection ---------------------------------------------------

  private setContext(): void {
    const { state } = this.ctx;
    if (!state.openSectionId || !this.root) return;
    const selection = this.ctx.readEditorSelection(state.openSectionId);
    if (!selection) {
      this.ctx.notify(new Error("select some text in the section editor first"));
      return;
    }
    state.contextSelection = selection;
    const badge = byId<HTMLSpanElement>(this.root, "context-badge");
    badge.textContent = `context: ${selection.length > 40 ? selection.slice(0, 40) + "…" : selection}`;
    badge.classList.remove("hidden");
    byId(this.root, "btn-clear-context").classList.remove("hidden");
  }

  private clearContext(): void {
    const { state } = this.ctx;
    state.contextSelection = null;
    if (!this.root) return;
    byId(this.root, "context-badge").classList.add("hidden");
    byId(this.root, "btn-clear-context").classList.add("hidden");
  }

  // -- generation plumbing ----------------------------------------------------

  private beginStream(): HTMLTextAreaElement | null {
    if (!this.root) return null;
    const output = byId<HTMLTextAreaElement>(this.root, "output-area");
    output.value = "";
    byId(this.root, "btn-stop").classList.remove("hidden");
    byId(this.root, "continue-wrap").classList.add("hidden");
    return output;
  }

  private streamHandlers(output: HTMLTextAreaElement) {
    return {
      onMeta: (meta: { generation_id: string; exchange_id?: string }) => {
        this.currentGenerationId = meta.generation_id;
        this.lastExchangeId = meta.exchange_id ?? null;
        this.ctx.state.trackGeneration(meta.generation_id, null);
      },
      onChunk: (text: string) => {
        output.value += text;
      },
    };
  }

  private endStream(result: StreamResult): void {
    if (this.currentGenerationId) this.ctx.state.finishGeneration(this.currentGenerationId);
    this.currentGenerationId = null;
    if (!this.root) return;
    byId(this.root, "btn-stop").classList.add("hidden");
    const exchange = result.data.exchange as ExchangeDoc | undefined;
    if (exchange) {
      this.lastExchangeId = exchange.id;
      this.lastConversationId = exchange.conversation_id;
      const output = byId<HTMLTextAreaElement>(this.root, "output-area");
      // keep partial text on cancellation; replace with full text when done
      if (result.status === "done") output.value = exchange.response;
    }
    byId(this.root, "continue-wrap").classList.remove("hidden");
  }

  private async run(actionId: string): Promise<void> {
    const { api, state } = this.ctx;
    if (!state.sessionId || !state.openSectionId) return;
    const output = this.beginStream();
    if (!output) return;
    try {
      const result = await api.runAction(
        state.sessionId,
        state.openSectionId,
        actionId,
        state.contextSelection,
        this.streamHandlers(output),
      );
      this.endStream(result);
    } catch (error) {
      this.endStream({ status: "failed", data: {}, text: "", generationId: null, exchangeId: null });
      this.ctx.notify(error);
    }
  }

  private toggleNeed(): void {
    if (!this.root) return;
    byId(this.root, "i-need-wrap").classList.toggle("hidden");
  }

  private async sendNeed(): Promise<void> {
    const { api, state } = this.ctx;
    if (!this.root || !state.sessionId || !state.openSectionId) return;
    const input = byId<HTMLInputElement>(this.root, "i-need-input");
    const text = input.value.trim();
    if (!text) return;
    const output = this.beginStream();
    if (!output) return;
    try {
      const result = await api.query(
        state.sessionId, state.openSectionId, text, this.streamHandlers(output),
      );
      input.value = "";
      this.endStream(result);
    } catch (error) {
      this.endStream({ status: "failed", data: {}, text: "", generationId: null, exchangeId: null });
      this.ctx.notify(error);
    }
  }

  private async sendContinue(): Promise<void> {
    const { api } = this.ctx;
    if (!this.root || !this.lastConversationId) return;
    const input = byId<HTMLInputElement>(this.root, "continue-input");
    const text = input.value.trim();
    if (!text) return;
    const output = this.beginStream();
    if (!output) return;
    try {
      const result = await api.continueConversation(
        this.lastConversationId, text, this.streamHandlers(output),
      );
      input.value = "";
      this.endStream(result);
    } catch (error) {
      this.endStream({ status: "failed", data: {}, text: "", generationId: null, exchangeId: null });
      this.ctx.notify(error);
    }
  }

  private async stop(): Promise<void> {
    const { api } = this.ctx;
    if (!this.currentGenerationId) return;
    try {
      await api.stop(this.currentGenerationId);
    } catch (error) {
      this.ctx.notify(error);
    }
  }

  private async copy(): Promise<void> {
    if (!this.root) return;
    const output = byId<HTMLTextAreaElement>(this.root, "output-area");
    const start = output.selectionStart ?? 0;
    const end = output.selectionEnd ?? 0;
    const selected = start !== end ? output.value.slice(start, end) : "";
    await this.ctx.clipboard(selected || output.value);
  }

  private async trash(): Promise<void> {
    const { api, state } = this.ctx;
    if (!this.root) return;
    byId<HTMLTextAreaElement>(this.root, "output-area").value = "";
    if (state.sessionId && this.lastExchangeId) {
      try {
        await api.clearOutput(state.sessionId, this.lastExchangeId);
      } catch (error) {
        this.ctx.notify(error);
      }
    }
  }

  private async toggleHistory(): Promise<void> {
    const { state } = this.ctx;
    if (!this.root || !state.sessionId) return;
    const panel = byId<HTMLDivElement>(this.root, "history-panel");
    if (!panel.classList.contains("hidden")) {
      panel.classList.add("hidden");
      return;
    }
    await this.paintHistory(panel);
    panel.classList.remove("hidden");
  }

  private async paintHistory(panel: HTMLDivElement): Promise<void> {
    const { api, state } = this.ctx;
    if (!state.sessionId) return;
    const scope = state.historyGlobal ? undefined : state.openSectionId ?? undefined;
    const { exchanges } = await api.history(state.sessionId, scope);
    clear(panel);
    const toggle = el("label", { class: "row" },
      (() => {
        const box = el("input", { id: "history-global-toggle", type: "checkbox" });
        box.checked = state.historyGlobal;
        box.addEventListener("change", () => {
          state.historyGlobal = box.checked;
          void this.paintHistory(panel);
        });
        return box;
      })(),
      "show all sections",
    );
    panel.append(toggle);
    const list = el("ul", { class: "history-list" });
    for (const exchange of [...exchanges].reverse()) {
      const preview = exchange.response.slice(0, 60) || "(no output)";
      list.append(
        el("li", { class: "history-item", "data-exchange": exchange.id },
          el("button", {
            onclick: () => {
              if (!this.root) return;
              byId<HTMLTextAreaElement>(this.root, "output-area").value = exchange.response;
              this.lastExchangeId = exchange.id;
              this.lastConversationId = exchange.conversation_id;
            },
          }, `${exchange.trigger} · ${preview}`),
        ),
      );
    }
    panel.append(list);
  }
}
