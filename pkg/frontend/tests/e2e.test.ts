// Scripted end-to-end acceptance checks against the real collection
// service (spawned from the sibling Python package):
//
//  - offline queue: recordings made "offline" persist across a reload,
//    show in the pending list, and sync to SENT once the API is reachable
//  - client audio format: every uploaded blob decodes as PCM16 WAV via the
//    primary decoder (the service rejects anything else with 415, and the
//    stored files are re-decoded with that decoder below)

import { createHash } from 'node:crypto';
import { spawn, ChildProcess, execFileSync } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { CollectionApi } from '../src/api';
import { OfflineQueue } from '../src/queue';
import { MemoryStore } from '../src/storage';
import { syncPending } from '../src/sync';
import { encodeWavPcm16, floatToInt16 } from '../src/wav';

const PORT = 18000 + Math.floor(Math.random() * 2000);
const BASE = `http://127.0.0.1:${PORT}`;
const CID = 'e2e00000-1111-4222-8333-444455556666';

let service: ChildProcess;
let storeDir: string;

const waitForService = async (): Promise<void> => {
  const deadline = Date.now() + 30000;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/collections`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error('collection service did not start');
    await new Promise((r) => setTimeout(r, 200));
  }
};

beforeAll(async () => {
  storeDir = mkdtempSync(join(tmpdir(), 'vs-e2e-'));
  service = spawn(
    'python3',
    ['-m', 'voicescreen.cli', 'serve-collection', '--store', storeDir,
     '--port', String(PORT)],
    { stdio: 'ignore' },
  );
  await waitForService();
}, 40000);

afterAll(() => {
  service?.kill('SIGTERM');
});

// a soft 220 Hz tone, long enough for every protocol step's lower bound
const toneWav = (seconds: number, sampleRate = 8000): Uint8Array => {
  const samples = new Float32Array(Math.round(seconds * sampleRate));
  for (let i = 0; i < samples.length; i++) {
    samples[i] = 0.4 * Math.sin((2 * Math.PI * 220 * i) / sampleRate);
  }
  return encodeWavPcm16(floatToInt16(samples), sampleRate);
};

const sha256 = (bytes: Uint8Array): string =>
  createHash('sha256').update(bytes).digest('hex');

describe('offline-first collection flow', () => {
  const store = new MemoryStore();
  const recordings: Record<string, Uint8Array> = {
    sustained_vowel: toneWav(2),
    sentence_read: toneWav(4),
    counting: toneWav(4),
  };

  it('queues recordings while offline and keeps them across reload', async () => {
    const queue = new OfflineQueue(store);
    queue.saveSession({
      collectionId: CID,
      participantRef: 'H-e2e',
      collectorId: 'collector-1',
      hospitalCode: 'hospital-x',
      info: {},
    });
    for (const [step, wav] of Object.entries(recordings)) {
      queue.enqueue(CID, step as never, wav);
    }

    // offline: every sync attempt dies on the network
    const offlineApi = new CollectionApi(BASE, async () => {
      throw new TypeError('fetch failed');
    });
    const summary = await syncPending(queue, offlineApi);
    expect(summary.offline).toBe(true);

    // "reload": a brand-new queue over the same persisted store
    const reloaded = new OfflineQueue(store);
    const pending = reloaded.pending();
    expect(pending).toHaveLength(3);
    expect(pending.every((item) => item.state === 'QUEUED')).toBe(true);
  });

  it('syncs to SENT once the API is reachable', async () => {
    const queue = new OfflineQueue(store); // the post-reload queue
    const summary = await syncPending(queue, new CollectionApi(BASE));
    expect(summary.sent).toBe(3);
    expect(summary.failed).toBe(0);
    expect(queue.pending()).toHaveLength(0);
    expect(queue.list().every((item) => item.state === 'SENT')).toBe(true);
  });

  it('server accepted the blobs byte-for-byte and marked the collection complete', async () => {
    const record = (await new CollectionApi(BASE).getCollection(CID)) as {
      sync_state: string;
      audios: Record<string, { content_hash: string }>;
    };
    expect(record.sync_state).toBe('COMPLETE');
    for (const [step, wav] of Object.entries(recordings)) {
      expect(record.audios[step].content_hash).toBe(sha256(wav));
    }
  });

  it('every stored upload decodes as PCM16 WAV via the primary decoder', () => {
    const script = [
      'import sys, pathlib',
      'from voicescreen.audio import decode_wav',
      'paths = sorted(pathlib.Path(sys.argv[1]).glob("**/*.wav"))',
      'assert paths, "no uploads found"',
      'for p in paths:',
      '    clip = decode_wav(p.read_bytes())',
      '    assert clip.channels == 1 and len(clip.samples) > 0',
      'print(f"decoded {len(paths)} uploads as PCM16")',
    ].join('\n');
    const out = execFileSync('python3', ['-c', script, storeDir]).toString();
    expect(out).toContain('decoded 3 uploads as PCM16');
  });

  it('re-syncing after success is a pure no-op', async () => {
    const queue = new OfflineQueue(store);
    const summary = await syncPending(queue, new CollectionApi(BASE));
    expect(summary).toEqual({ sent: 0, failed: 0, skipped: 3, offline: false });
  });
});
