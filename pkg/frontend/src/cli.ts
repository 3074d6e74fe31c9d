import { spawnSync } from "node:child_process";

/** Python interpreter hosting the embcert package; override via EMBCERT_PYTHON. */
export function pythonBin(): string {
  return process.env.EMBCERT_PYTHON ?? "python3";
}

export interface CliResult {
  stdout: string;
  stderr: string;
}

/** Run one embcert subcommand; non-zero exit becomes an Error carrying stderr. */
export function runCli(args: string[]): CliResult {
  const res = spawnSync(pythonBin(), ["-m", "embcert", ...args], {
    encoding: "utf8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (res.error) throw res.error;
  if (res.status !== 0) {
    const detail = (res.stderr ?? "").trim() || (res.stdout ?? "").trim();
    throw new Error(`embcert ${args[0]} exited with ${res.status}: ${detail}`);
  }
  return { stdout: res.stdout ?? "", stderr: res.stderr ?? "" };
}
