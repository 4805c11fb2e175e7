/** Binary P5 PGM encoding, byte-compatible with the service's mask files. */

export function encodePgm(width: number, height: number, pixels: Uint8Array): Uint8Array {
  if (pixels.length !== width * height) {
    throw new Error(`pixel buffer is ${pixels.length}, expected ${width * height}`);
  }
  const header = new TextEncoder().encode(`P5\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + pixels.length);
  out.set(header, 0);
  out.set(pixels, header.length);
  return out;
}

export interface PgmImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0d, 0x0a]);

function readTokens(data: Uint8Array, start: number, count: number): { tokens: number[]; offset: number } {
  const tokens: number[] = [];
  let i = start;
  while (tokens.length < count) {
    if (i >= data.length) throw new Error("header ended early");
    const b = data[i];
    if (WHITESPACE.has(b)) {
      i += 1;
      continue;
    }
    if (b === 0x23) { // '#'
      while (i < data.length && data[i] !== 0x0a) i += 1;
      continue;
    }
    let j = i;
    let value = 0;
    while (j < data.length && !WHITESPACE.has(data[j])) {
      const digit = data[j] - 0x30;
      if (digit < 0 || digit > 9) throw new Error("non-numeric header token");
      value = value * 10 + digit;
      j += 1;
    }
    tokens.push(value);
    i = j;
  }
  if (i >= data.length || !WHITESPACE.has(data[i])) {
    throw new Error("missing whitespace after header");
  }
  return { tokens, offset: i + 1 };
}

export function decodePgm(data: Uint8Array): PgmImage {
  if (data.length < 2 || data[0] !== 0x50 || data[1] !== 0x35) {
    throw new Error("not a P5 PGM payload");
  }
  const { tokens, offset } = readTokens(data, 2, 3);
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new Error(`maxval must be 255, got ${maxval}`);
  const need = width * height;
  if (data.length - offset < need) {
    throw new Error(`truncated payload: need ${need} bytes`);
  }
  return { width, height, pixels: data.slice(offset, offset + need) };
}

export interface PpmImage {
  width: number;
  height: number;
  rgb: Uint8Array; // interleaved, 3 bytes per pixel
}

export function decodePpm(data: Uint8Array): PpmImage {
  if (data.length < 2 || data[0] !== 0x50 || data[1] !== 0x36) {
    throw new Error("not a P6 PPM payload");
  }
  const { tokens, offset } = readTokens(data, 2, 3);
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new Error(`maxval must be 255, got ${maxval}`);
  const need = width * height * 3;
  if (data.length - offset < need) {
    throw new Error(`truncated payload: need ${need} bytes`);
  }
  return { width, height, rgb: data.slice(offset, offset + need) };
}

export function toBase64(data: Uint8Array): string {
  let binary = "";
  for (const b of data) binary += String.fromCharCode(b);
  return btoa(binary);
}

export function fromBase64(text: string): Uint8Array {
  const binary = atob(text);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
