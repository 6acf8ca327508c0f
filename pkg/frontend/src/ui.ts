// Single-screen app shell: session info, one card per protocol step, the
// pending-upload list, and the inference panel. Everything fits a 360x640
// viewport without scrolling; each protocol step is one tap away.

import { CollectionApi, InferenceApi } from './api.js';
import { pollInference } from './poll.js';
import { PROTOCOL_STEPS, ProtocolStep } from './protocol.js';
import { OfflineQueue } from './queue.js';
import { MicrophonePcmSource, PermissionDenied, Recorder, RecorderUnavailable } from './recorder.js';
import { BrowserStore } from './storage.js';
import { syncPending } from './sync.js';

const COLLECTION_API = (window as any).VS_COLLECTION_API ?? 'http://127.0.0.1:8001';
const INFERENCE_API = (window as any).VS_INFERENCE_API ?? 'http://127.0.0.1:8002';
const MODEL_NAME = (window as any).VS_MODEL_NAME ?? 'screener';

const queue = new OfflineQueue(new BrowserStore());
const collectionApi = new CollectionApi(COLLECTION_API);
const inferenceApi = new InferenceApi(INFERENCE_API);

const $ = <T extends HTMLElement>(selector: string): T => {
  const el = document.querySelector<T>(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el;
};

const newUuid = (): string =>
  crypto.randomUUID
    ? crypto.randomUUID()
    : 'xxxxxxxx-xxxx-4xxx-yxxx-xxxxxxxxxxxx'.replace(/[xy]/g, (c) => {
        const r = (Math.random() * 16) | 0;
        return (c === 'x' ? r : (r & 0x3) | 0x8).toString(16);
      });

let collectionId = newUuid();
let activeRecorder: Recorder | null = null;
let activeStep: ProtocolStep | null = null;
let lastWav: Uint8Array | null = null;

const renderPending = (): void => {
  const list = $('#pending-list');
  const items = queue.list();
  list.innerHTML = '';
  for (const item of items) {
    const li = document.createElement('li');
    li.className = `pending state-${item.state.toLowerCase()}`;
    li.textContent = `${item.step} · ${item.state}${item.error ? ` (${item.error})` : ''}`;
    list.appendChild(li);
  }
  $('#pending-count').textContent = String(queue.pending().length);
};

const setStatus = (text: string): void => {
  $('#status').textContent = text;
};

const ensureSession = (): void => {
  const participant = ($('#participant') as HTMLInputElement).value.trim();
  queue.saveSession({
    collectionId,
    participantRef: participant || 'anonymous',
    collectorId: ($('#collector') as HTMLInputElement).value.trim(),
    hospitalCode: ($('#hospital') as HTMLInputElement).value.trim(),
    info: {},
  });
};

const onRecordToggle = async (step: ProtocolStep, button: HTMLButtonElement): Promise<void> => {
  if (activeRecorder && activeStep === step) {
    const item = await activeRecorder.finish(queue, collectionId, step);
    lastWav = item.wavBytes;
    activeRecorder = null;
    activeStep = null;
    button.textContent = 'record';
    setStatus(`${step} queued (${(item.wavBytes.length / 1024).toFixed(0)} KiB)`);
    renderPending();
    return;
  }
  if (activeRecorder) return; // one step at a time
  ensureSession();
  const recorder = new Recorder(new MicrophonePcmSource());
  try {
    await recorder.start();
  } catch (err) {
    if (err instanceof PermissionDenied) setStatus('microphone permission denied');
    else if (err instanceof RecorderUnavailable) setStatus(`cannot record: ${err.message}`);
    else setStatus(String(err));
    return;
  }
  activeRecorder = recorder;
  activeStep = step;
  button.textContent = 'stop';
  setStatus(`recording ${step}...`);
};

const onSync = async (): Promise<void> => {
  setStatus('syncing...');
  const summary = await syncPending(queue, collectionApi);
  renderPending();
  setStatus(
    summary.offline
      ? 'offline: recordings kept locally'
      : `sync: ${summary.sent} sent, ${summary.failed} failed`,
  );
};

const onInfer = async (): Promise<void> => {
  if (!lastWav) {
    setStatus('record a clip first');
    return;
  }
  const panel = $('#inference-result');
  panel.textContent = 'submitting...';
  try {
    const requestId = await inferenceApi.submit(MODEL_NAME, lastWav);
    const record = await pollInference(inferenceApi, requestId, {
      onUpdate: (rec, elapsed) => {
        if (!rec || rec.status === 'PENDING') {
          panel.textContent = `processing... ${(elapsed / 1000).toFixed(0)}s`;
        }
      },
    });
    if (record.status === 'COMPLETED' && record.result) {
      const pct = (record.result.probability * 100).toFixed(1);
      panel.textContent = `${record.result.label} (${pct}%) · ${record.result.model_version_id}`;
    } else {
      panel.textContent = `failed: ${record.error_reason}`;
    }
  } catch (err) {
    panel.textContent = `error: ${String(err)}`;
  }
};

export const boot = (): void => {
  const steps = $('#steps');
  for (const spec of PROTOCOL_STEPS) {
    const card = document.createElement('div');
    card.className = 'step-card';
    const button = document.createElement('button');
    button.textContent = 'record';
    button.addEventListener('click', () => void onRecordToggle(spec.step, button));
    const label = document.createElement('div');
    label.innerHTML = `<strong>${spec.title}</strong><br><small>${spec.prompt}</small>`;
    card.append(label, button);
    steps.appendChild(card);
  }
  $('#sync').addEventListener('click', () => void onSync());
  $('#infer').addEventListener('click', () => void onInfer());
  $('#new-session').addEventListener('click', () => {
    collectionId = newUuid();
    setStatus('new session started');
  });
  renderPending();
  if ('serviceWorker' in navigator) {
    void navigator.serviceWorker.register('./sw.js');
  }
};

boot();
