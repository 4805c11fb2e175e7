import { describe, expect, it } from "vitest";

import { MaskCanvasState } from "../src/maskCanvas.js";

describe("MaskCanvasState", () => {
  it("starts empty and blocks zero-pixel submission upstream", () => {
    const canvas = new MaskCanvasState("s1", 16, 16);
    expect(canvas.paintedPixelCount()).toBe(0);
  });

  it("paints a disc around the stroke point", () => {
    const canvas = new MaskCanvasState("s1", 16, 16, 2);
    canvas.beginStroke(8, 8);
    const mask = canvas.getMask();
    expect(mask[8 * 16 + 8]).toBe(1);
    expect(mask[8 * 16 + 10]).toBe(1); // radius 2 reaches two pixels out
    expect(mask[0]).toBe(0);
    expect(canvas.paintedPixelCount()).toBeGreaterThan(4);
  });

  it("interpolates along fast strokes", () => {
    const canvas = new MaskCanvasState("s1", 32, 32, 1);
    canvas.beginStroke(2, 16);
    canvas.extendStroke(29, 16); // one long segment
    const mask = canvas.getMask();
    for (let x = 2; x <= 29; x++) {
      expect(mask[16 * 32 + x]).toBe(1);
    }
  });

  it("erase strokes clear painted pixels", () => {
    const canvas = new MaskCanvasState("s1", 16, 16, 3);
    canvas.beginStroke(8, 8);
    const before = canvas.paintedPixelCount();
    canvas.beginStroke(8, 8, "erase");
    expect(canvas.paintedPixelCount()).toBeLessThan(before);
  });

  it("undo pops exactly one stroke and replays the rest", () => {
    const canvas = new MaskCanvasState("s1", 16, 16, 2);
    canvas.beginStroke(4, 4);
    const after_first = [...canvas.getMask()];
    canvas.beginStroke(12, 12);
    expect(canvas.undo()).toBe(true);
    expect([...canvas.getMask()]).toEqual(after_first);
    expect(canvas.undo()).toBe(true);
    expect(canvas.paintedPixelCount()).toBe(0);
    expect(canvas.undo()).toBe(false);
  });

  it("undo stack replays to the current mask exactly", () => {
    const canvas = new MaskCanvasState("s1", 24, 24, 2);
    canvas.beginStroke(5, 5);
    canvas.extendStroke(10, 8);
    canvas.beginStroke(15, 15, "erase");
    canvas.beginStroke(20, 4);
    expect(canvas.replayMatchesCurrent()).toBe(true);
  });

  it("pgm pixels are 0/255 and load back pixel-identically", () => {
    const canvas = new MaskCanvasState("s1", 16, 16, 2);
    canvas.beginStroke(7, 9);
    canvas.extendStroke(11, 11);
    const pgm = canvas.toPgmPixels();
    expect(new Set([...pgm]).size).toBeLessThanOrEqual(2);

    const restored = new MaskCanvasState("s1", 16, 16);
    restored.loadFromPgmPixels(pgm);
    expect([...restored.getMask()]).toEqual([...canvas.getMask()]);
  });

  it("rejects masks whose dimensions do not match the sample", () => {
    const canvas = new MaskCanvasState("s1", 16, 16);
    expect(() => canvas.loadFromPgmPixels(new Uint8Array(10))).toThrow(/256/);
  });

  it("clamps brush stamps at the borders", () => {
    const canvas = new MaskCanvasState("s1", 8, 8, 3);
    canvas.beginStroke(0, 0);
    canvas.extendStroke(7, 7);
    expect(canvas.paintedPixelCount()).toBeGreaterThan(0);
    expect(canvas.getMask().length).toBe(64);
  });
});
