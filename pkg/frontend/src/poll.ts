/**
 * Poll a scenario job until it reaches a terminal state. One-second
 * cadence, doubling after 30s of waiting so a long optimization does not
 * hammer the service; failed jobs reject with the server's message.
 */

import { api, JobDoc } from "./api.js";

export const BASE_INTERVAL_MS = 1000;
export const BACKOFF_AFTER_MS = 30_000;
export const MAX_INTERVAL_MS = 8000;

export function nextInterval(elapsedMs: number, currentMs: number): number {
  if (elapsedMs < BACKOFF_AFTER_MS) return BASE_INTERVAL_MS;
  return Math.min(currentMs * 2, MAX_INTERVAL_MS);
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export type PollOptions = {
  onProgress?: (job: JobDoc) => void;
  getJob?: (jobId: string) => Promise<JobDoc>;
  now?: () => number;
};

export async function pollJob(jobId: string, opts: PollOptions = {}): Promise<JobDoc> {
  const getJob = opts.getJob ?? api.job;
  const now = opts.now ?? Date.now;
  const started = now();
  let interval = BASE_INTERVAL_MS;
  for (;;) {
    const job = await getJob(jobId);
    opts.onProgress?.(job);
    if (job.state === "done") return job;
    if (job.state === "failed") {
      throw new Error(job.error ?? "scenario job failed");
    }
    await sleep(interval);
    interval = nextInterval(now() - started, interval);
  }
}
