// Entry point: parse flags, load the category map, serve one transport.

import { fileURLToPath } from "node:url";

import { buildConfig, ConfigError, loadCategoryMap, SidecarConfig } from "./detector.js";
import { startHttpServer } from "./http.js";
import { serveStdio } from "./stdio.js";

interface CliArgs {
  model: string;
  scoreFloor: number;
  device: string;
  maxBatch: number;
  categoryMap: string;
  transport: "stdio" | "http";
  port: number;
}

const DEFAULT_CATEGORY_MAP = fileURLToPath(new URL("../palette-map.json", import.meta.url));

function printUsage(): void {
  console.error(`
Usage: node dist/main.js [options]

Options:
  --model <spec>          Detector spec, "region:<saturation>[,<minArea>]" (default: region:50)
  --score-floor <f>       Drop detections scoring below f, in [0, 1) (default: 0.05)
  --device <name>         Compute device; only "cpu" is supported (default: cpu)
  --max-batch <n>         Internal batching hint, invisible on the wire (default: 8)
  --category-map <path>   JSON file mapping label names to dataset category ids
                          (default: bundled palette-map.json)
  --transport <kind>      "stdio" or "http" (default: stdio)
  --port <n>              HTTP port, 0 for ephemeral (default: 8601)
  --help                  Show this message
`);
}

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = {
    model: "region:50",
    scoreFloor: 0.05,
    device: "cpu",
    maxBatch: 8,
    categoryMap: DEFAULT_CATEGORY_MAP,
    transport: "stdio",
    port: 8601,
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const value = argv[i + 1];
    if (arg === "--help" || arg === "-h") {
      printUsage();
      process.exit(0);
    } else if (arg === "--model" && value !== undefined) {
      args.model = argv[++i];
    } else if (arg === "--score-floor" && value !== undefined) {
      args.scoreFloor = Number(argv[++i]);
      if (!Number.isFinite(args.scoreFloor)) {
        throw new ConfigError(`--score-floor needs a number, got ${JSON.stringify(value)}`);
      }
    } else if (arg === "--device" && value !== undefined) {
      args.device = argv[++i];
    } else if (arg === "--max-batch" && value !== undefined) {
      args.maxBatch = Number(argv[++i]);
    } else if (arg === "--category-map" && value !== undefined) {
      args.categoryMap = argv[++i];
    } else if (arg === "--transport" && value !== undefined) {
      const kind = argv[++i];
      if (kind !== "stdio" && kind !== "http") {
        throw new ConfigError(`--transport must be stdio or http, got ${JSON.stringify(kind)}`);
      }
      args.transport = kind;
    } else if (arg === "--port" && value !== undefined) {
      args.port = Number(argv[++i]);
      if (!Number.isInteger(args.port) || args.port < 0 || args.port > 65535) {
        throw new ConfigError(`--port needs an integer in [0, 65535], got ${JSON.stringify(value)}`);
      }
    } else {
      throw new ConfigError(`unknown or incomplete argument ${JSON.stringify(arg)}`);
    }
  }
  return args;
}

async function run(argv: string[]): Promise<void> {
  const args = parseArgs(argv);
  const config: SidecarConfig = buildConfig({
    model: args.model,
    scoreFloor: args.scoreFloor,
    device: args.device,
    maxBatch: args.maxBatch,
    categoryMap: loadCategoryMap(args.categoryMap),
  });
  if (args.transport === "http") {
    const server = await startHttpServer(config, args.port);
    const address = server.address();
    const port = typeof address === "object" && address !== null ? address.port : args.port;
    console.error(`observer sidecar listening on http://127.0.0.1:${port} (model ${config.model})`);
  } else {
    await serveStdio(config);
  }
}

run(process.argv.slice(2)).catch((err) => {
  if (err instanceof ConfigError) {
    console.error(`config error: ${err.message}`);
    printUsage();
    process.exit(2);
  }
  console.error(err instanceof Error ? err.stack ?? err.message : String(err));
  process.exit(1);
});
