/**
 * Core of the test runner: execute a Python candidate program against
 * stdin/stdout test cases, one fresh interpreter process per test, under a
 * per-test time limit and a best-effort memory cap.
 *
 * The candidate runs in a child process behind a small guard prelude that
 * disables socket creation and pins the working directory to a throwaway
 * temp dir. Only this process ever writes to the protocol stdout stream, so
 * a crashing or chatty candidate cannot corrupt the framing.
 */

import { spawn } from "node:child_process";
import { mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import * as path from "node:path";

export interface ShimTest {
  input: string;
  expected_output: string;
}

export interface ShimJob {
  protocol_version: 1;
  language: string;
  code: string;
  tests: ShimTest[];
  time_limit_ms: number;
  memory_limit_mb: number;
}

export type WireStatus =
  | "all_passed"
  | "some_failed"
  | "syntax_error"
  | "timeout"
  | "runtime_error";

export interface PerTest {
  index: number;
  passed: boolean;
  actual_output: string;
  stderr_excerpt: string;
}

export interface JobResult {
  status: WireStatus;
  per_test: PerTest[];
  duration_ms: number;
}

const PYTHON = process.env.PYTHON_BIN || "python3";
const OUTPUT_CAP = 1024 * 1024; // per-stream capture cap, bytes
const STDERR_EXCERPT = 300;
const COMPILE_TIMEOUT_MS = 10_000;

// Installed before the candidate: denies sockets, pins cwd, then executes
// main.py as a fresh __main__ (exec-like semantics, separate process anyway).
const GUARD_PRELUDE = `import os, runpy, socket, sys

def _deny(*_args, **_kwargs):
    raise OSError("network access is disabled in the test runner")

socket.socket = _deny
socket.create_connection = _deny
socket.socketpair = _deny

_here = os.path.dirname(os.path.abspath(__file__))
os.chdir(_here)
sys.argv = [os.path.join(_here, "main.py")]
runpy.run_path(sys.argv[0], run_name="__main__")
`;

type Checked = { ok: true; job: ShimJob } | { ok: false; error: string };

export function validateJob(raw: unknown): Checked {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    return { ok: false, error: "job must be a JSON object" };
  }
  const job = raw as Record<string, unknown>;
  if (job.protocol_version !== 1) {
    return { ok: false, error: "unsupported protocol_version (expected 1)" };
  }
  if (job.language !== "python") {
    return { ok: false, error: `unsupported language: ${String(job.language)}` };
  }
  if (typeof job.code !== "string" || job.code.length === 0) {
    return { ok: false, error: "code must be a nonempty string" };
  }
  if (!Array.isArray(job.tests) || job.tests.length === 0) {
    return { ok: false, error: "tests must be a nonempty array" };
  }
  for (const [i, t] of job.tests.entries()) {
    const entry = t as Record<string, unknown>;
    if (
      typeof entry !== "object" ||
      entry === null ||
      typeof entry.input !== "string" ||
      typeof entry.expected_output !== "string"
    ) {
      return { ok: false, error: `tests[${i}] needs string input and expected_output` };
    }
  }
  const timeLimit = job.time_limit_ms;
  const memLimit = job.memory_limit_mb;
  if (typeof timeLimit !== "number" || !Number.isFinite(timeLimit) || timeLimit <= 0) {
    return { ok: false, error: "time_limit_ms must be a positive number" };
  }
  if (typeof memLimit !== "number" || !Number.isFinite(memLimit) || memLimit <= 0) {
    return { ok: false, error: "memory_limit_mb must be a positive number" };
  }
  return { ok: true, job: raw as unknown as ShimJob };
}

/** Line-by-line equality after trimming trailing whitespace and dropping
 * trailing blank lines on both sides. */
export function outputsMatch(expected: string, actual: string): boolean {
  const canon = (text: string): string[] => {
    const lines = text.split("\n").map((line) => line.replace(/[\t \r]+$/u, ""));
    while (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
    return lines;
  };
  const a = canon(expected);
  const b = canon(actual);
  return a.length === b.length && a.every((line, i) => line === b[i]);
}

interface ProcResult {
  stdout: string;
  stderr: string;
  exitCode: number | null;
  timedOut: boolean;
}

function runProcess(
  command: string,
  args: string[],
  options: { cwd: string; input: string; timeoutMs: number },
): Promise<ProcResult> {
  return new Promise((resolve) => {
    const child = spawn(command, args, {
      cwd: options.cwd,
      stdio: ["pipe", "pipe", "pipe"],
      env: {
        PATH: process.env.PATH ?? "/usr/bin:/bin",
        HOME: options.cwd,
        TMPDIR: options.cwd,
        LANG: "C.UTF-8",
        LC_ALL: "C.UTF-8",
        PYTHONDONTWRITEBYTECODE: "1",
      },
    });
    let stdout = "";
    let stderr = "";
    let timedOut = false;
    let settled = false;

    const finish = (result: ProcResult) => {
      if (!settled) {
        settled = true;
        clearTimeout(timer);
        resolve(result);
      }
    };
    const timer = setTimeout(() => {
      timedOut = true;
      child.kill("SIGKILL");
    }, options.timeoutMs);

    child.stdout.on("data", (chunk: Buffer) => {
      if (stdout.length < OUTPUT_CAP) stdout += chunk.toString("utf-8");
    });
    child.stderr.on("data", (chunk: Buffer) => {
      if (stderr.length < OUTPUT_CAP) stderr += chunk.toString("utf-8");
    });
    child.on("error", (err) => {
      finish({ stdout, stderr: `${stderr}\n${String(err)}`, exitCode: null, timedOut });
    });
    child.on("close", (code) => {
      finish({ stdout, stderr, exitCode: code, timedOut });
    });

    // The candidate may exit without reading stdin; ignore the EPIPE.
    child.stdin.on("error", () => {});
    child.stdin.write(options.input);
    child.stdin.end();
  });
}

function excerpt(stderr: string): string {
  const trimmed = stderr.trim();
  return trimmed.length <= STDERR_EXCERPT ? trimmed : trimmed.slice(-STDERR_EXCERPT);
}

export async function runJob(job: ShimJob): Promise<JobResult> {
  const started = Date.now();
  const workDir = await mkdtemp(path.join(tmpdir(), "runner-shim-"));
  try {
    await writeFile(path.join(workDir, "main.py"), job.code, "utf-8");
    await writeFile(path.join(workDir, "guard.py"), GUARD_PRELUDE, "utf-8");

    // Parse before running anything: a candidate that cannot compile
    // short-circuits the whole job.
    const compile = await runProcess(PYTHON, ["-m", "py_compile", "main.py"], {
      cwd: workDir,
      input: "",
      timeoutMs: COMPILE_TIMEOUT_MS,
    });
    if (compile.timedOut) {
      return { status: "timeout", per_test: [], duration_ms: Date.now() - started };
    }
    if (compile.exitCode !== 0) {
      return { status: "syntax_error", per_test: [], duration_ms: Date.now() - started };
    }

    const memKb = Math.floor(job.memory_limit_mb * 1024);
    // ulimit applies to the shell, exec keeps the pid: the kill on timeout
    // reaches the interpreter itself.
    const shellLine = `ulimit -v ${memKb} 2>/dev/null; exec ${PYTHON} -I guard.py`;

    const perTest: PerTest[] = [];
    let sawTimeout = false;
    let sawCrash = false;
    for (const [index, test] of job.tests.entries()) {
      const run = await runProcess("/bin/sh", ["-c", shellLine], {
        cwd: workDir,
        input: test.input,
        timeoutMs: job.time_limit_ms,
      });
      const passed =
        !run.timedOut && run.exitCode === 0 && outputsMatch(test.expected_output, run.stdout);
      perTest.push({
        index,
        passed,
        actual_output: run.stdout,
        stderr_excerpt: run.timedOut ? "timed out" : excerpt(run.stderr),
      });
      if (run.timedOut) {
        sawTimeout = true;
        break; // whole-job timeout: no point running the remaining tests
      }
      if (run.exitCode !== 0) sawCrash = true;
    }

    const status: WireStatus = sawTimeout
      ? "timeout"
      : sawCrash
        ? "runtime_error"
        : perTest.every((t) => t.passed)
          ? "all_passed"
          : "some_failed";
    return { status, per_test: perTest, duration_ms: Date.now() - started };
  } finally {
    await rm(workDir, { recursive: true, force: true });
  }
}
