// PCM16 WAV encoding in the browser. The platform's MediaRecorder emits
// lossy Opus, which destroys the low-band structure the screening model
// reads, so raw PCM is wrapped into a canonical 44-byte-header WAV here.

export const floatToInt16 = (samples: Float32Array): Int16Array => {
  const out = new Int16Array(samples.length);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    out[i] = Math.round(clamped * 32767);
  }
  return out;
};

export const encodeWavPcm16 = (samples: Int16Array, sampleRate: number): Uint8Array => {
  const dataBytes = samples.length * 2;
  const buffer = new ArrayBuffer(44 + dataBytes);
  const view = new DataView(buffer);

  view.setUint32(0, 0x52494646, false); // "RIFF"
  view.setUint32(4, 36 + dataBytes, true);
  view.setUint32(8, 0x57415645, false); // "WAVE"

  view.setUint32(12, 0x666d7420, false); // "fmt "
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true); // byte rate
  view.setUint16(32, 2, true); // block align
  view.setUint16(34, 16, true); // bits per sample

  view.setUint32(36, 0x64617461, false); // "data"
  view.setUint32(40, dataBytes, true);

  for (let i = 0; i < samples.length; i++) {
    view.setInt16(44 + i * 2, samples[i], true);
  }
  return new Uint8Array(buffer);
};

// Header sanity check used before anything enters the upload queue:
// RIFF/WAVE magic, format tag 1 (PCM), 16 bits per sample, mono.
export const isPcm16Wav = (bytes: Uint8Array): boolean => {
  if (bytes.length < 44) return false;
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (view.getUint32(0, false) !== 0x52494646) return false;
  if (view.getUint32(8, false) !== 0x57415645) return false;
  if (view.getUint32(12, false) !== 0x666d7420) return false;
  if (view.getUint16(20, true) !== 1) return false;
  if (view.getUint16(22, true) !== 1) return false;
  if (view.getUint16(34, true) !== 16) return false;
  return true;
};

export const wavDurationSeconds = (bytes: Uint8Array): number => {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const sampleRate = view.getUint32(24, true);
  const dataBytes = view.getUint32(40, true);
  return dataBytes / 2 / sampleRate;
};
