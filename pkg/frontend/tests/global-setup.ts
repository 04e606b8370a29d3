// Spawns the annotation service (with fresh synthetic data) for the
// integration tests; tears it down afterwards.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { SERVER_BASE, SERVER_PORT } from "./server-info.js";

let server: ChildProcess | null = null;
let dataDir: string | null = null;

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${SERVER_BASE}/api/samples`);
      if (r.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error(`service did not come up on ${SERVER_BASE}`);
}

export async function setup(): Promise<void> {
  dataDir = mkdtempSync(join(tmpdir(), "scribble-ui-"));
  execFileSync(
    "python3",
    ["-m", "scribble_bench.cli", "--seed", "21", "--out", dataDir,
     "synth-data", "--n", "4", "--side", "64"],
    { stdio: "inherit" },
  );
  server = spawn(
    "python3",
    ["-m", "scribble_bench.cli", "serve",
     "--manifest", join(dataDir, "manifest.json"),
     "--backend", "geodesic", "--port", String(SERVER_PORT)],
    { stdio: "ignore" },
  );
  await waitForServer(60_000);
}

export async function teardown(): Promise<void> {
  if (server) server.kill();
  if (dataDir) rmSync(dataDir, { recursive: true, force: true });
}
