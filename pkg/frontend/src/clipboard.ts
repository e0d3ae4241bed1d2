/** Clipboard access with a fallback for environments without the API. */

export type ClipboardWriter = (text: string) => Promise<void>;

let lastFallbackCopy = "";

export function defaultClipboard(): ClipboardWriter {
  return async (text: string) => {
    const clip = (globalThis.navigator as Navigator | undefined)?.clipboard;
    if (clip?.writeText) {
      await clip.writeText(text);
      return;
    }
    lastFallbackCopy = text;
  };
}

/** What the fallback captured; used when no real clipboard exists. */
export function fallbackCopiedText(): string {
  return lastFallbackCopy;
}
