// Layered canvas painting: base image, mask overlay, live strokes.

import { maskToRgba } from "./rle.js";
import type { RleMask, Stroke } from "./types.js";

export const CHANNEL_COLORS: Record<"pos" | "neg", string> = {
  pos: "rgba(40, 200, 80, 0.9)",
  neg: "rgba(230, 60, 60, 0.9)",
};

const MASK_COLOR: [number, number, number] = [80, 140, 255];

export class LayeredRenderer {
  private imageCtx: CanvasRenderingContext2D;
  private overlayCtx: CanvasRenderingContext2D;
  private strokesCtx: CanvasRenderingContext2D;

  constructor(
    readonly imageCanvas: HTMLCanvasElement,
    readonly overlayCanvas: HTMLCanvasElement,
    readonly strokesCanvas: HTMLCanvasElement,
  ) {
    this.imageCtx = this.ctx(imageCanvas);
    this.overlayCtx = this.ctx(overlayCanvas);
    this.strokesCtx = this.ctx(strokesCanvas);
  }

  private ctx(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
    const c = canvas.getContext("2d");
    if (!c) throw new Error("2d canvas context unavailable");
    return c;
  }

  resize(width: number, height: number): void {
    for (const c of [this.imageCanvas, this.overlayCanvas, this.strokesCanvas]) {
      c.width = width;
      c.height = height;
    }
  }

  drawImage(bitmap: ImageBitmap | HTMLImageElement): void {
    this.imageCtx.clearRect(0, 0, this.imageCanvas.width, this.imageCanvas.height);
    this.imageCtx.drawImage(bitmap, 0, 0);
  }

  drawMask(mask: RleMask | null, opacity: number): void {
    const { width, height } = this.overlayCanvas;
    this.overlayCtx.clearRect(0, 0, width, height);
    if (!mask) return;
    const rgba = maskToRgba(mask, MASK_COLOR, opacity);
    const data = new ImageData(new Uint8ClampedArray(rgba), mask.w, mask.h);
    this.overlayCtx.putImageData(data, 0, 0);
  }

  drawStrokes(
    buffer: readonly Stroke[],
    live: readonly [number, number][] | null,
    liveChannel: "pos" | "neg",
    liveWidth: number,
  ): void {
    const { width, height } = this.strokesCanvas;
    const ctx = this.strokesCtx;
    ctx.clearRect(0, 0, width, height);
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    for (const s of buffer) {
      this.path(ctx, s.polyline, CHANNEL_COLORS[s.channel], s.width);
    }
    if (live && live.length > 0) {
      this.path(ctx, live, CHANNEL_COLORS[liveChannel], liveWidth);
    }
  }

  private path(
    ctx: CanvasRenderingContext2D,
    pts: readonly [number, number][],
    style: string,
    width: number,
  ): void {
    const first = pts[0];
    if (first === undefined) return;
    ctx.strokeStyle = style;
    ctx.fillStyle = style;
    ctx.lineWidth = width;
    if (pts.length === 1) {
      ctx.beginPath();
      ctx.arc(first[0], first[1], width / 2, 0, 2 * Math.PI);
      ctx.fill();
      return;
    }
    ctx.beginPath();
    ctx.moveTo(first[0], first[1]);
    for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  }
}

/** Tiny dice sparkline drawn on its own canvas. */
export function drawSparkline(canvas: HTMLCanvasElement, values: number[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  if (values.length === 0) return;
  ctx.strokeStyle = "#4a8cff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = values.length === 1 ? width / 2 : (i / (values.length - 1)) * (width - 4) + 2;
    const y = height - 2 - v * (height - 4);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}
