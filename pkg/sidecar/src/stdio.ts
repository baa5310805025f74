// Stdio transport: one JSON request per line on stdin, one JSON response
// per line on stdout, in order. A malformed line yields an error record
// and the loop continues; only stdin closing ends the process.

import { createInterface } from "node:readline";

import { scoreRequest, SidecarConfig } from "./detector.js";
import { errorRecord, parseRequest, salvageCanvasId, WireError, WireResponse } from "./protocol.js";

export function handleLine(line: string, config: SidecarConfig): WireResponse | WireError {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch {
    return { canvas_id: -1, error: "request line is not valid JSON" };
  }
  try {
    return scoreRequest(parseRequest(parsed), config);
  } catch (err) {
    return errorRecord(err, salvageCanvasId(parsed));
  }
}

export async function serveStdio(config: SidecarConfig): Promise<void> {
  const lines = createInterface({ input: process.stdin, crlfDelay: Infinity });
  for await (const line of lines) {
    if (line.trim() === "") continue;
    process.stdout.write(JSON.stringify(handleLine(line, config)) + "\n");
  }
}
