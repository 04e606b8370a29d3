// Freehand stroke capture: pointer positions at device resolution are
// mapped into image pixel coordinates, thinned so vertices keep a minimum
// spacing, and clamped to the canvas.

export interface DisplayRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** Map a client-space point onto image pixel coordinates. */
export function mapToImage(
  rect: DisplayRect,
  imageWidth: number,
  imageHeight: number,
  clientX: number,
  clientY: number,
): [number, number] {
  const x = ((clientX - rect.left) / rect.width) * imageWidth;
  const y = ((clientY - rect.top) / rect.height) * imageHeight;
  return [x, y];
}

export function clampToImage(
  points: [number, number][],
  imageWidth: number,
  imageHeight: number,
): [number, number][] {
  return points.map(([x, y]) => [
    Math.min(Math.max(x, 0), imageWidth - 1),
    Math.min(Math.max(y, 0), imageHeight - 1),
  ]);
}

export class StrokeCapture {
  private points: [number, number][] = [];
  private _active = false;

  constructor(
    readonly imageWidth: number,
    readonly imageHeight: number,
    readonly minSpacing = 1.0,
  ) {}

  get active(): boolean {
    return this._active;
  }

  /** The in-progress polyline (image coordinates), for live rendering. */
  get current(): readonly [number, number][] {
    return this.points;
  }

  start(x: number, y: number): void {
    this._active = true;
    this.points = [[x, y]];
  }

  move(x: number, y: number): void {
    if (!this._active) return;
    const last = this.points[this.points.length - 1];
    if (last === undefined) return;
    const dx = x - last[0];
    const dy = y - last[1];
    if (Math.hypot(dx, dy) >= this.minSpacing) {
      this.points.push([x, y]);
    }
  }

  /**
   * Finish the stroke. A zero-length tap keeps its single point (the
   * server promotes it to a dot of the brush width). Points are clamped
   * into the image.
   */
  end(): [number, number][] | null {
    if (!this._active) return null;
    this._active = false;
    const pts = clampToImage(this.points, this.imageWidth, this.imageHeight);
    this.points = [];
    return pts.length > 0 ? pts : null;
  }

  cancel(): void {
    this._active = false;
    this.points = [];
  }
}
