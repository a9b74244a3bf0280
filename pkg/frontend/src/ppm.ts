/** Decoder for the base64 binary PPM (P6) images the service ships. */

export interface DecodedImage {
  width: number;
  height: number;
  /** RGBA bytes ready for ImageData, alpha fixed at 255. */
  rgba: Uint8ClampedArray<ArrayBuffer>;
}

function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // node fallback (tests)
  const nodeBuffer = (globalThis as {
    Buffer?: { from(data: string, encoding: string): Uint8Array };
  }).Buffer;
  if (!nodeBuffer) throw new Error("no base64 decoder available");
  return new Uint8Array(nodeBuffer.from(b64, "base64"));
}

export function decodePpm(base64: string): DecodedImage {
  const bytes = base64ToBytes(base64);
  const header = new TextDecoder("ascii").decode(bytes.slice(0, 64));
  const match = /^P6\n(\d+) (\d+)\n255\n/.exec(header);
  if (!match) {
    throw new Error("not a binary PPM with the expected header layout");
  }
  const width = parseInt(match[1], 10);
  const height = parseInt(match[2], 10);
  const offset = match[0].length;
  const expected = width * height * 3;
  if (bytes.length < offset + expected) {
    throw new Error(`PPM raster truncated: ${bytes.length - offset} < ${expected}`);
  }
  const rgba = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  for (let i = 0; i < width * height; i++) {
    rgba[4 * i] = bytes[offset + 3 * i];
    rgba[4 * i + 1] = bytes[offset + 3 * i + 1];
    rgba[4 * i + 2] = bytes[offset + 3 * i + 2];
    rgba[4 * i + 3] = 255;
  }
  return { width, height, rgba };
}
