/** Markdown editor helpers: toolbar formatting plus keyboard shortcuts. */

export function wrapSelection(area: HTMLTextAreaElement, marker: string): void {
  const start = area.selectionStart ?? 0;
  const end = area.selectionEnd ?? 0;
  const value = area.value;
  const selected = value.slice(start, end) || "text";
  area.value = value.slice(0, start) + marker + selected + marker + value.slice(end);
  area.selectionStart = start + marker.length;
  area.selectionEnd = start + marker.length + selected.length;
  area.dispatchEvent(new Event("input", { bubbles: true }));
}

export function prefixLines(area: HTMLTextAreaElement, prefix: string): void {
  const start = area.selectionStart ?? 0;
  const end = area.selectionEnd ?? 0;
  const value = area.value;
  const lineStart = value.lastIndexOf("\n", Math.max(start - 1, 0)) + 1;
  const sliceEnd = end > lineStart ? end : lineStart;
  const block = value.slice(lineStart, sliceEnd);
  const prefixed = block
    .split("\n")
    .map((line) => (line.startsWith(prefix) ? line : prefix + line))
    .join("\n");
  area.value = value.slice(0, lineStart) + prefixed + value.slice(sliceEnd);
  area.dispatchEvent(new Event("input", { bubbles: true }));
}

/** Ctrl/Cmd+B bold, Ctrl/Cmd+I italic, Ctrl/Cmd+L list item. */
export function installEditorShortcuts(area: HTMLTextAreaElement): void {
  area.addEventListener("keydown", (event) => {
    const key = event as KeyboardEvent;
    if (!key.ctrlKey && !key.metaKey) return;
    const pressed = key.key.toLowerCase();
    if (pressed === "b") {
      key.preventDefault();
      wrapSelection(area, "**");
    } else if (pressed === "i") {
      key.preventDefault();
      wrapSelection(area, "*");
    } else if (pressed === "l") {
      key.preventDefault();
      prefixLines(area, "- ");
    }
  });
}
