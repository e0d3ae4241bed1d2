/** UI view state. The server is authoritative for all plan data; this
 * tracks only what the browser is looking at and what is in flight. */

export type Page = "goal-setting" | "planning";

export class ViewState {
  page: Page = "goal-setting";
  sessionId: string | null = null;
  /** at most one assistant sidebar target at a time */
  openSectionId: string | null = null;
  sidebarOpen = false;
  /** generation id -> live SSE subscription (entries removed on terminal) */
  inFlight = new Map<string, AbortController | null>();
  /** section ids with local editor changes not yet saved to the server */
  unsavedEdits = new Set<string>();
  contextSelection: string | null = null;
  historyGlobal = false;

  openSidebar(sectionId: string): void {
    if (this.openSectionId !== sectionId) this.contextSelection = null;
    this.openSectionId = sectionId;
    this.sidebarOpen = true;
  }

  closeSidebar(): void {
    this.sidebarOpen = false;
    this.openSectionId = null;
    this.contextSelection = null;
  }

  trackGeneration(generationId: string, subscription: AbortController | null): void {
    this.inFlight.set(generationId, subscription);
  }

  finishGeneration(generationId: string): void {
    this.inFlight.delete(generationId);
  }
}
