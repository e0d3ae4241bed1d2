/** Incremental parser for text/event-stream bodies. */

export interface SseFrame {
  event: string | null;
  data: string;
}

/** Split complete frames off the front of `buffer`; the tail stays pending. */
export function splitFrames(buffer: string): { frames: SseFrame[]; rest: string } {
  const frames: SseFrame[] = [];
  let rest = buffer;
  for (;;) {
    const cut = rest.indexOf("\n\n");
    if (cut < 0) break;
    const block = rest.slice(0, cut);
    rest = rest.slice(cut + 2);
    const frame = parseBlock(block);
    if (frame) frames.push(frame);
  }
  return { frames, rest };
}

function parseBlock(block: string): SseFrame | null {
  let event: string | null = null;
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("event: ")) event = line.slice("event: ".length);
    else if (line.startsWith("data: ")) data.push(line.slice("data: ".length));
    else if (line.startsWith("data:")) data.push(line.slice("data:".length));
  }
  if (event === null && data.length === 0) return null;
  return { event, data: data.join("\n") };
}

/** Read a streaming body to the end, invoking `onFrame` per complete frame. */
export async function readSse(
  body: ReadableStream<Uint8Array>,
  onFrame: (frame: SseFrame) => void,
): Promise<void> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    const { frames, rest } = splitFrames(buffer);
    buffer = rest;
    for (const frame of frames) onFrame(frame);
  }
  buffer += decoder.decode();
  if (buffer.trim().length > 0) {
    const { frames } = splitFrames(buffer + "\n\n");
    for (const frame of frames) onFrame(frame);
  }
}
