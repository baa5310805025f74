// HTTP transport: POST /score takes one request record and returns one
// response record; GET /health reports readiness. Malformed requests get
// a 400 with an error record — callers should not retry those.

import { createServer, IncomingMessage, Server, ServerResponse } from "node:http";

import { scoreRequest, SidecarConfig } from "./detector.js";
import { errorRecord, parseRequest, salvageCanvasId } from "./protocol.js";

const MAX_BODY_BYTES = 64 * 1024 * 1024;

function readBody(request: IncomingMessage): Promise<Buffer> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    let total = 0;
    request.on("data", (chunk: Buffer) => {
      total += chunk.length;
      if (total > MAX_BODY_BYTES) {
        reject(new Error("request body too large"));
        request.destroy();
        return;
      }
      chunks.push(chunk);
    });
    request.on("end", () => resolve(Buffer.concat(chunks)));
    request.on("error", reject);
  });
}

function sendJson(response: ServerResponse, status: number, payload: unknown): void {
  const body = JSON.stringify(payload);
  response.writeHead(status, {
    "content-type": "application/json",
    "content-length": Buffer.byteLength(body),
  });
  response.end(body);
}

async function handle(request: IncomingMessage, response: ServerResponse,
                      config: SidecarConfig): Promise<void> {
  if (request.method === "GET" && request.url === "/health") {
    sendJson(response, 200, { status: "ok", model: config.model });
    return;
  }
  if (request.method !== "POST" || request.url !== "/score") {
    sendJson(response, 404, { error: `no handler for ${request.method} ${request.url}` });
    return;
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse((await readBody(request)).toString("utf8"));
  } catch (err) {
    sendJson(response, 400, errorRecord(err));
    return;
  }
  try {
    sendJson(response, 200, scoreRequest(parseRequest(parsed), config));
  } catch (err) {
    sendJson(response, 400, errorRecord(err, salvageCanvasId(parsed)));
  }
}

export function startHttpServer(config: SidecarConfig, port: number,
                                host = "127.0.0.1"): Promise<Server> {
  const server = createServer((request, response) => {
    handle(request, response, config).catch((err) => {
      sendJson(response, 500, { error: err instanceof Error ? err.message : String(err) });
    });
  });
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => resolve(server));
  });
}
