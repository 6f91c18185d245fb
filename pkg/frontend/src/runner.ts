/** Invokes the `ariapipe` CLI inside throwaway workspaces.
 *
 * The Python side is reached only through its public surfaces: the CLI
 * subcommands, the pipeline config JSON, the keep manifest, and the shard
 * files. Set ARIAPIPE_PYTHON to pick the interpreter (default python3).
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, mkdirSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { readBinaryShard, ShardRecord } from "./shards.js";

const PYTHON = process.env.ARIAPIPE_PYTHON ?? "python3";

export function runCli(args: string[], cwd?: string): string {
  const proc = spawnSync(PYTHON, ["-m", "ariapipe", ...args], {
    encoding: "utf-8",
    cwd,
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) throw proc.error;
  if (proc.status !== 0) {
    throw new Error(
      `ariapipe ${args[0]} failed (exit ${proc.status}): ${proc.stderr || proc.stdout}`
    );
  }
  return proc.stdout;
}

export interface Workspace {
  root: string;
  inputDir: string;
  outputDir: string;
  configPath: string;
  dispose(): void;
}

export function makeWorkspace(files: Array<{ name: string; bytes: Uint8Array }>, seed = 0): Workspace {
  const root = mkdtempSync(join(tmpdir(), "ariapipe-ts-"));
  const inputDir = join(root, "in");
  const outputDir = join(root, "out");
  mkdirSync(inputDir);
  mkdirSync(outputDir);
  for (const file of files) {
    writeFileSync(join(inputDir, file.name), file.bytes);
  }
  const configPath = join(root, "config.json");
  writeFileSync(
    configPath,
    JSON.stringify({ version: 1, input_dir: inputDir, output_dir: outputDir, seed, format: "binary" }) + "\n"
  );
  // Keep every file: quality filtering is not the bindings' concern.
  const manifest = files
    .map((f) => JSON.stringify({ source_id: f.name, keep: true, reason: "kept:bindings" }))
    .join("\n");
  writeFileSync(join(outputDir, "manifest.jsonl"), manifest + "\n");
  return {
    root,
    inputDir,
    outputDir,
    configPath,
    dispose: () => rmSync(root, { recursive: true, force: true }),
  };
}

export function tokenizeShard(ws: Workspace): ShardRecord[] {
  runCli(["tokenize", "--config", ws.configPath]);
  return readBinaryShard(readFileSync(join(ws.outputDir, "tokens.bin")));
}

export function viewsShard(ws: Workspace, streamBase: number): ShardRecord[] {
  runCli(["views", "--config", ws.configPath, "--stream-base", String(streamBase)]);
  return readBinaryShard(readFileSync(join(ws.outputDir, "views.bin")));
}

export function vocabularyText(): string {
  return runCli(["vocab"]);
}
