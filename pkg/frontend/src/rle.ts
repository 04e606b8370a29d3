// Run-length mask codec: alternating background/foreground pixel counts
// over the row-major flattening, starting with background.

import type { RleMask } from "./types.js";

export function decodeRle(mask: RleMask): Uint8Array {
  const total = mask.w * mask.h;
  const bits = new Uint8Array(total);
  let pos = 0;
  let fg = false;
  for (const run of mask.runs) {
    if (run < 0) throw new Error("negative run length");
    if (fg) bits.fill(1, pos, pos + run);
    pos += run;
    fg = !fg;
  }
  if (pos !== total) {
    throw new Error(`runs cover ${pos} pixels, expected ${total}`);
  }
  return bits;
}

export function encodeRle(bits: Uint8Array, w: number, h: number): RleMask {
  if (bits.length !== w * h) throw new Error("bit count does not match dims");
  const runs: number[] = [];
  let current = 0; // background first
  let count = 0;
  for (const b of bits) {
    const v = b ? 1 : 0;
    if (v === current) {
      count += 1;
    } else {
      runs.push(count);
      current = v;
      count = 1;
    }
  }
  runs.push(count);
  return { w, h, runs };
}

/** Paint the mask into an RGBA buffer (premade color, alpha on foreground). */
export function maskToRgba(
  mask: RleMask,
  color: [number, number, number],
  alpha: number,
): Uint8ClampedArray {
  const bits = decodeRle(mask);
  const rgba = new Uint8ClampedArray(bits.length * 4);
  const a = Math.round(alpha * 255);
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) {
      rgba[i * 4] = color[0];
      rgba[i * 4 + 1] = color[1];
      rgba[i * 4 + 2] = color[2];
      rgba[i * 4 + 3] = a;
    }
  }
  return rgba;
}

export function foregroundCount(mask: RleMask): number {
  let fg = false;
  let n = 0;
  for (const run of mask.runs) {
    if (fg) n += run;
    fg = !fg;
  }
  return n;
}

/** First foreground pixel (x, y) in row-major order, or null. */
export function firstForeground(mask: RleMask): [number, number] | null {
  let pos = 0;
  let fg = false;
  for (const run of mask.runs) {
    if (fg && run > 0) return [pos % mask.w, Math.floor(pos / mask.w)];
    pos += run;
    fg = !fg;
  }
  return null;
}
