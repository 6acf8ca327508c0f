// Microphone capture as raw PCM. The default MediaRecorder path is
// deliberately avoided (it emits lossy Opus); instead an AudioContext tap
// streams Float32 frames which are converted to PCM16 and wrapped as WAV.
// The PCM source is injectable so queue/sync logic is testable off-browser.

import { ProtocolStep } from './protocol.js';
import { OfflineQueue, PendingItem } from './queue.js';
import { encodeWavPcm16, floatToInt16, isPcm16Wav } from './wav.js';

export class PermissionDenied extends Error {}
export class RecorderUnavailable extends Error {}

export interface PcmSource {
  // starts delivering Float32 chunks; resolves to the sample rate
  start(onChunk: (chunk: Float32Array) => void): Promise<number>;
  stop(): Promise<void>;
}

export class MicrophonePcmSource implements PcmSource {
  private context: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private processor: ScriptProcessorNode | null = null;

  async start(onChunk: (chunk: Float32Array) => void): Promise<number> {
    if (!navigator.mediaDevices?.getUserMedia) {
      throw new RecorderUnavailable('this browser cannot capture raw audio');
    }
    try {
      this.stream = await navigator.mediaDevices.getUserMedia({
        // raw capture: no browser-side "improvement" of the signal
        audio: {
          echoCancellation: false,
          noiseSuppression: false,
          autoGainControl: false,
        },
      });
    } catch (err) {
      if (err instanceof DOMException && err.name === 'NotAllowedError') {
        throw new PermissionDenied('microphone permission denied');
      }
      throw new RecorderUnavailable(String(err));
    }
    this.context = new AudioContext();
    const source = this.context.createMediaStreamSource(this.stream);
    this.processor = this.context.createScriptProcessor(4096, 1, 1);
    this.processor.onaudioprocess = (event) => {
      onChunk(new Float32Array(event.inputBuffer.getChannelData(0)));
    };
    source.connect(this.processor);
    this.processor.connect(this.context.destination);
    return this.context.sampleRate;
  }

  async stop(): Promise<void> {
    this.processor?.disconnect();
    this.stream?.getTracks().forEach((track) => track.stop());
    await this.context?.close();
    this.context = null;
    this.stream = null;
    this.processor = null;
  }
}

export class Recorder {
  private chunks: Float32Array[] = [];
  private sampleRate = 0;
  recording = false;

  constructor(private source: PcmSource) {}

  async start(): Promise<void> {
    this.chunks = [];
    this.sampleRate = await this.source.start((chunk) => this.chunks.push(chunk));
    this.recording = true;
  }

  // Stop capture, wrap as PCM16 WAV and queue it for sync immediately:
  // a recording exists on disk before any network is attempted.
  async finish(
    queue: OfflineQueue,
    collectionId: string,
    step: ProtocolStep,
  ): Promise<PendingItem> {
    await this.source.stop();
    this.recording = false;
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const samples = new Float32Array(total);
    let offset = 0;
    for (const chunk of this.chunks) {
      samples.set(chunk, offset);
      offset += chunk.length;
    }
    this.chunks = [];
    const wav = encodeWavPcm16(floatToInt16(samples), this.sampleRate);
    if (!isPcm16Wav(wav)) {
      throw new RecorderUnavailable('encoder produced a non-PCM16 blob');
    }
    return queue.enqueue(collectionId, step, wav);
  }
}
