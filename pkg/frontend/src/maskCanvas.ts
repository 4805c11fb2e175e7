/** Brush-painted binary object mask with a replayable undo stack.
 *
 * The mask raster always mirrors the active sample's dimensions, and the
 * current bitmap is by construction the replay of the stroke stack over an
 * empty mask: undo pops a stroke and replays the rest.
 */

export interface StrokePoint {
  x: number;
  y: number;
}

export interface Stroke {
  points: StrokePoint[];
  brushSize: number;
  mode: "paint" | "erase";
}

export class MaskCanvasState {
  readonly sampleId: string;
  readonly width: number;
  readonly height: number;
  brushSize: number;
  private strokes: Stroke[] = [];
  private mask: Uint8Array;

  constructor(sampleId: string, width: number, height: number, brushSize = 2) {
    if (width < 1 || height < 1) throw new Error("mask dimensions must be positive");
    this.sampleId = sampleId;
    this.width = width;
    this.height = height;
    this.brushSize = brushSize;
    this.mask = new Uint8Array(width * height);
  }

  /** Current binary mask (0 = background, 1 = object). */
  getMask(): Uint8Array {
    return this.mask.slice();
  }

  paintedPixelCount(): number {
    let n = 0;
    for (const v of this.mask) n += v;
    return n;
  }

  strokeCount(): number {
    return this.strokes.length;
  }

  beginStroke(x: number, y: number, mode: "paint" | "erase" = "paint"): void {
    this.strokes.push({ points: [{ x, y }], brushSize: this.brushSize, mode });
    this.stampSegment(this.current(), { x, y }, { x, y });
  }

  extendStroke(x: number, y: number): void {
    const stroke = this.current();
    const last = stroke.points[stroke.points.length - 1];
    stroke.points.push({ x, y });
    this.stampSegment(stroke, last, { x, y });
  }

  undo(): boolean {
    if (this.strokes.length === 0) return false;
    this.strokes.pop();
    this.replay();
    return true;
  }

  clear(): void {
    this.strokes = [];
    this.mask.fill(0);
  }

  /** Rebuild the bitmap from the stroke stack; also the undo invariant. */
  replay(): void {
    this.mask.fill(0);
    for (const stroke of this.strokes) {
      for (let i = 0; i < stroke.points.length; i++) {
        const from = stroke.points[Math.max(0, i - 1)];
        this.stampSegment(stroke, from, stroke.points[i]);
      }
    }
  }

  replayMatchesCurrent(): boolean {
    const current = this.mask.slice();
    this.replay();
    const rebuilt = this.mask;
    for (let i = 0; i < current.length; i++) {
      if (current[i] !== rebuilt[i]) return false;
    }
    return true;
  }

  /** 0/255 bytes ready for PGM serialization. */
  toPgmPixels(): Uint8Array {
    const out = new Uint8Array(this.mask.length);
    for (let i = 0; i < this.mask.length; i++) out[i] = this.mask[i] ? 255 : 0;
    return out;
  }

  loadFromPgmPixels(pixels: Uint8Array): void {
    if (pixels.length !== this.width * this.height) {
      throw new Error(
        `mask payload is ${pixels.length} pixels, sample needs ${this.width * this.height}`,
      );
    }
    this.strokes = [];
    for (let i = 0; i < pixels.length; i++) this.mask[i] = pixels[i] >= 128 ? 1 : 0;
  }

  private current(): Stroke {
    if (this.strokes.length === 0) throw new Error("no active stroke");
    return this.strokes[this.strokes.length - 1];
  }

  private stampSegment(stroke: Stroke, from: StrokePoint, to: StrokePoint): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(to.x - from.x, to.y - from.y)));
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      this.stampDisc(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t, stroke);
    }
  }

  private stampDisc(cx: number, cy: number, stroke: Stroke): void {
    const r = stroke.brushSize;
    const value = stroke.mode === "paint" ? 1 : 0;
    const x0 = Math.max(0, Math.floor(cx - r));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
    const y0 = Math.max(0, Math.floor(cy - r));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if ((x - cx) ** 2 + (y - cy) ** 2 <= r * r) {
          this.mask[y * this.width + x] = value;
        }
      }
    }
  }
}
