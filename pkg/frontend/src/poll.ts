// Poll an inference request until it reaches a terminal state, backing off
// between attempts. Network errors surface as retryable updates rather
// than rejections until the overall deadline passes.

import { InferenceApi, InferenceRecord } from './api.js';

export interface PollOptions {
  initialMs?: number;
  factor?: number;
  maxIntervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (record: InferenceRecord | null, elapsedMs: number) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export const pollInference = async (
  api: InferenceApi,
  requestId: string,
  options: PollOptions = {},
): Promise<InferenceRecord> => {
  const initial = options.initialMs ?? 250;
  const factor = options.factor ?? 1.5;
  const maxInterval = options.maxIntervalMs ?? 3000;
  const timeout = options.timeoutMs ?? 120000;
  const sleep = options.sleep ?? defaultSleep;

  const started = Date.now();
  let interval = initial;
  for (;;) {
    let record: InferenceRecord | null = null;
    try {
      record = await api.get(requestId);
    } catch {
      // transient: report and keep polling
    }
    const elapsed = Date.now() - started;
    options.onUpdate?.(record, elapsed);
    if (record && record.status !== 'PENDING') {
      return record;
    }
    if (elapsed >= timeout) {
      throw new Error(`inference ${requestId} still pending after ${timeout} ms`);
    }
    await sleep(interval);
    interval = Math.min(interval * factor, maxInterval);
  }
};
