/**
 * Protocol entry point: read one job object from stdin, write one result
 * object to stdout. Exit 0 for every well-formed job regardless of what the
 * candidate does; exit 2 with an error object for malformed jobs.
 */

import { runJob, validateJob } from "./runner";

async function readStdin(): Promise<string> {
  const chunks: Buffer[] = [];
  for await (const chunk of process.stdin) {
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks).toString("utf-8");
}

function emit(payload: unknown): void {
  process.stdout.write(JSON.stringify(payload) + "\n");
}

async function main(): Promise<number> {
  const raw = await readStdin();
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    emit({ error: `malformed job: ${String(err)}` });
    return 2;
  }
  const checked = validateJob(parsed);
  if (!checked.ok) {
    emit({ error: checked.error });
    return 2;
  }
  const result = await runJob(checked.job);
  emit(result);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    emit({ error: `internal runner failure: ${String(err)}` });
    process.exit(2);
  },
);
