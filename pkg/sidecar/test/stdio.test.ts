import { spawn } from "node:child_process";
import { once } from "node:events";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { buildConfig } from "../src/detector.js";
import { encodePng } from "../src/png.js";
import { WireResponse } from "../src/protocol.js";
import { handleLine } from "../src/stdio.js";
import { fixtureRaster } from "./helpers.js";

const MAIN = fileURLToPath(new URL("../dist/main.js", import.meta.url));
const CONFIG = buildConfig({ categoryMap: { red: 1, green: 2 } });

function fixtureLine(canvasId: number): string {
  return JSON.stringify({
    canvas_id: canvasId,
    image_b64: encodePng(fixtureRaster()).toString("base64"),
    objects: [
      { key: 7, bbox: [40, 30, 48, 36], category_id: 1 },
      { key: 9, bbox: [104, 70, 36, 30], category_id: 2 },
    ],
  });
}

describe("handleLine", () => {
  it("answers a scoring request", () => {
    const response = handleLine(fixtureLine(31), CONFIG) as WireResponse;
    expect(response.canvas_id).toBe(31);
    expect(response.detections).toHaveLength(2);
  });

  it("turns non-JSON into an error record", () => {
    expect(handleLine("not json {", CONFIG))
      .toEqual({ canvas_id: -1, error: "request line is not valid JSON" });
  });

  it("keeps the canvas id in shape-error records", () => {
    const record = handleLine(JSON.stringify({ canvas_id: 5, objects: [] }),
                              CONFIG);
    expect(record).toMatchObject({ canvas_id: 5 });
    expect(record).toHaveProperty("error");
  });
});

describe("stdio service", () => {
  it("answers one line per line, in order, surviving bad input", async () => {
    const child = spawn(process.execPath, [MAIN], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    const lines: string[] = [];
    let pending = "";
    const done = new Promise<void>((resolve) => {
      child.stdout.on("data", (chunk: Buffer) => {
        pending += chunk.toString("utf8");
        let cut;
        while ((cut = pending.indexOf("\n")) >= 0) {
          lines.push(pending.slice(0, cut));
          pending = pending.slice(cut + 1);
        }
        if (lines.length >= 3) resolve();
      });
    });

    child.stdin.write(fixtureLine(1) + "\n");
    child.stdin.write("garbage garbage\n");
    child.stdin.write(fixtureLine(2) + "\n");
    await done;
    child.stdin.end();
    const [exitCode] = await once(child, "exit");

    expect(exitCode).toBe(0);
    const records = lines.map((line) => JSON.parse(line));
    expect(records[0].canvas_id).toBe(1);
    expect(records[0].detections).toHaveLength(2);
    expect(records[1]).toEqual({ canvas_id: -1,
                                 error: "request line is not valid JSON" });
    expect(records[2].canvas_id).toBe(2);
    expect(records[2].detections).toHaveLength(2);
  }, 20000);
});
