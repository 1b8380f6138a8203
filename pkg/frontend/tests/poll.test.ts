import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type { JobDoc } from "../src/api.js";
import {
  BACKOFF_AFTER_MS,
  BASE_INTERVAL_MS,
  MAX_INTERVAL_MS,
  nextInterval,
  pollJob,
} from "../src/poll.js";
import { jobDoc } from "./fixtures.js";

describe("nextInterval", () => {
  it("holds the one-second cadence for the first thirty seconds", () => {
    expect(nextInterval(0, BASE_INTERVAL_MS)).toBe(1000);
    expect(nextInterval(BACKOFF_AFTER_MS - 1, BASE_INTERVAL_MS)).toBe(1000);
  });

  it("doubles once the wait crosses the threshold, capped at eight seconds", () => {
    let interval = BASE_INTERVAL_MS;
    const seen: number[] = [];
    for (let i = 0; i < 5; i++) {
      interval = nextInterval(BACKOFF_AFTER_MS, interval);
      seen.push(interval);
    }
    expect(seen).toEqual([2000, 4000, 8000, 8000, 8000]);
    expect(Math.max(...seen)).toBe(MAX_INTERVAL_MS);
  });
});

describe("pollJob", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("polls every second until the job is done and reports each state", async () => {
    const states: JobDoc[] = [
      jobDoc({ state: "queued", progress: 0, result_run_id: null, result_url: null }),
      jobDoc({ state: "running", progress: 10, result_run_id: null, result_url: null }),
      jobDoc({ state: "done", progress: 25 }),
    ];
    let call = 0;
    const getJob = vi.fn(async () => states[Math.min(call++, states.length - 1)]);
    const onProgress = vi.fn();

    const pending = pollJob("job-0001", { getJob, onProgress });

    await vi.advanceTimersByTimeAsync(0);
    expect(getJob).toHaveBeenCalledTimes(1);
    await vi.advanceTimersByTimeAsync(BASE_INTERVAL_MS);
    expect(getJob).toHaveBeenCalledTimes(2);
    await vi.advanceTimersByTimeAsync(BASE_INTERVAL_MS);

    const job = await pending;
    expect(job.state).toBe("done");
    expect(job.result_run_id).toBe("scenario-1");
    expect(onProgress).toHaveBeenCalledTimes(3);
    expect(onProgress.mock.calls.map((c) => (c[0] as JobDoc).state)).toEqual([
      "queued",
      "running",
      "done",
    ]);
  });

  it("backs off after thirty seconds of waiting", async () => {
    const running = jobDoc({
      state: "running",
      progress: 1,
      result_run_id: null,
      result_url: null,
    });
    let done = false;
    const getJob = vi.fn(async () =>
      done ? jobDoc({ state: "done" }) : running,
    );

    const pending = pollJob("job-0002", { getJob });

    // one-second cadence through the threshold: calls at t=0..30s
    await vi.advanceTimersByTimeAsync(0);
    for (let t = 0; t < 30; t++) {
      await vi.advanceTimersByTimeAsync(BASE_INTERVAL_MS);
    }
    expect(getJob).toHaveBeenCalledTimes(31);

    // intervals now double: 2s, 4s, then the 8s cap
    await vi.advanceTimersByTimeAsync(2000);
    expect(getJob).toHaveBeenCalledTimes(32);
    await vi.advanceTimersByTimeAsync(4000);
    expect(getJob).toHaveBeenCalledTimes(33);
    await vi.advanceTimersByTimeAsync(8000);
    expect(getJob).toHaveBeenCalledTimes(34);

    done = true;
    await vi.advanceTimersByTimeAsync(8000);
    await expect(pending).resolves.toMatchObject({ state: "done" });
  });

  it("rejects with the server's message when the job fails", async () => {
    const getJob = vi.fn(async () =>
      jobDoc({
        state: "failed",
        error: "optimizer caught fire",
        result_run_id: null,
        result_url: null,
      }),
    );

    await expect(pollJob("job-0003", { getJob })).rejects.toThrow(
      "optimizer caught fire",
    );
    expect(getJob).toHaveBeenCalledTimes(1);
  });

  it("falls back to a generic message when a failed job has no error text", async () => {
    const getJob = vi.fn(async () =>
      jobDoc({ state: "failed", error: null, result_run_id: null, result_url: null }),
    );
    await expect(pollJob("job-0004", { getJob })).rejects.toThrow(
      "scenario job failed",
    );
  });
});
