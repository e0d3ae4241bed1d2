/** First-run guided tour: one dismissible overlay naming each control. */

import { el } from "./dom.js";

const SEEN_KEY = "lessonforge.tourSeen";

const STOPS: [string, string][] = [
  ["Lesson metadata", "Course name, lesson topic, and student stage feed every generation."],
  ["Generate Lesson Goals", "Drafts editable goals; run it again after editing to refine them."],
  ["Generate outline", "Builds the block outline; each block carries its instructional events."],
  ["Block cards", "Edit titles, content, and minutes in place; insert, delete, or ignore blocks."],
  ["Set Instructional Events", "Changing a block's events changes which assistant activities appear."],
  ["Assistant sidebar", "Core actions, event-specific activities, the I-need box, and history."],
  ["Set as context", "Select editor text first; the next action is scoped to that selection."],
  ["Stop Generating", "Halts a running generation; the partial text is kept."],
  ["Download Lesson Plan", "Exports the plan as a markdown file."],
];

export function maybeShowTour(root: HTMLElement, storage: Storage): void {
  if (storage.getItem(SEEN_KEY)) return;
  const list = el("ul", { class: "tour-stops" });
  for (const [name, text] of STOPS) {
    list.append(el("li", {}, el("strong", {}, name + ": "), text));
  }
  const overlay = el(
    "div",
    { id: "tour-overlay", class: "tour-overlay" },
    el(
      "div",
      { class: "tour-card" },
      el("h2", {}, "Welcome! A quick tour"),
      list,
      el("button", {
        id: "tour-dismiss",
        onclick: () => {
          storage.setItem(SEEN_KEY, "1");
          overlay.remove();
        },
      }, "Got it"),
    ),
  );
  root.append(overlay);
}
