// Subprocess plumbing: every binding call shells out to the primary CLI in
// a scratch directory and exchanges tensors through the LUDA1 container.

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { LidarUdaError } from "./errors.js";

const PYTHON = process.env.LIDAR_UDA_PYTHON ?? "python3";

export interface CliResult {
  stdout: string;
  json: Record<string, unknown>;
}

export function runCli(args: string[]): CliResult {
  const proc = spawnSync(PYTHON, ["-m", "lidar_uda.cli", ...args], {
    encoding: "utf-8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (proc.error) {
    throw new LidarUdaError("ConfigError", `cannot launch CLI: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    let name = "LidarUdaError";
    let message = proc.stderr.trim() || `CLI exited with ${proc.status}`;
    try {
      const payload = JSON.parse(proc.stderr.trim().split("\n").pop() ?? "");
      if (typeof payload.error === "string") {
        name = payload.error;
        message = payload.message ?? message;
      }
    } catch {
      // stderr was not the structured error JSON; keep the raw text
    }
    throw new LidarUdaError(name, message);
  }
  return { stdout: proc.stdout, json: JSON.parse(proc.stdout) };
}

export function withScratchDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "lidar-uda-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
