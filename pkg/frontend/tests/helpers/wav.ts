/** Minimal RIFF/WAVE codec for fixtures and the test audio double. */

export interface DecodedWav {
  sampleRate: number;
  channels: Float32Array[];
}

export function encodeWavFloat32(
  channels: Float32Array[],
  sampleRate: number,
): ArrayBuffer {
  const channelCount = channels.length;
  const frames = channels[0]?.length ?? 0;
  const dataBytes = frames * channelCount * 4;
  const buffer = new ArrayBuffer(44 + dataBytes);
  const view = new DataView(buffer);
  const ascii = (offset: number, text: string) => {
    for (let i = 0; i < text.length; i++) view.setUint8(offset + i, text.charCodeAt(i));
  };
  ascii(0, 'RIFF');
  view.setUint32(4, 36 + dataBytes, true);
  ascii(8, 'WAVE');
  ascii(12, 'fmt ');
  view.setUint32(16, 16, true);
  view.setUint16(20, 3, true); // IEEE float
  view.setUint16(22, channelCount, true);
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * channelCount * 4, true);
  view.setUint16(32, channelCount * 4, true);
  view.setUint16(34, 32, true);
  ascii(36, 'data');
  view.setUint32(40, dataBytes, true);
  let offset = 44;
  for (let frame = 0; frame < frames; frame++) {
    for (const channel of channels) {
      view.setFloat32(offset, channel[frame] ?? 0, true);
      offset += 4;
    }
  }
  return buffer;
}

export function decodeWav(data: ArrayBuffer): DecodedWav {
  const view = new DataView(data);
  const ascii = (offset: number, length: number) =>
    String.fromCharCode(
      ...Array.from({ length }, (_, i) => view.getUint8(offset + i)),
    );
  if (ascii(0, 4) !== 'RIFF' || ascii(8, 4) !== 'WAVE') {
    throw new Error('not a RIFF/WAVE stream');
  }
  let offset = 12;
  let format = 0;
  let channelCount = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let dataOffset = -1;
  let dataLength = 0;
  while (offset + 8 <= view.byteLength) {
    const chunkId = ascii(offset, 4);
    const chunkSize = view.getUint32(offset + 4, true);
    if (chunkId === 'fmt ') {
      format = view.getUint16(offset + 8, true);
      channelCount = view.getUint16(offset + 10, true);
      sampleRate = view.getUint32(offset + 12, true);
      bitsPerSample = view.getUint16(offset + 22, true);
    } else if (chunkId === 'data') {
      dataOffset = offset + 8;
      dataLength = chunkSize;
    }
    offset += 8 + chunkSize + (chunkSize % 2);
  }
  if (dataOffset < 0) throw new Error('missing data chunk');
  const bytesPerSample = bitsPerSample / 8;
  const frames = dataLength / (bytesPerSample * channelCount);
  const channels = Array.from(
    { length: channelCount },
    () => new Float32Array(frames),
  );
  for (let frame = 0; frame < frames; frame++) {
    for (let c = 0; c < channelCount; c++) {
      const at = dataOffset + (frame * channelCount + c) * bytesPerSample;
      if (format === 3 && bitsPerSample === 32) {
        channels[c]![frame] = view.getFloat32(at, true);
      } else if (format === 1 && bitsPerSample === 16) {
        channels[c]![frame] = view.getInt16(at, true) / 32768;
      } else {
        throw new Error(`unsupported WAV format ${format}/${bitsPerSample}`);
      }
    }
  }
  return { sampleRate, channels };
}
