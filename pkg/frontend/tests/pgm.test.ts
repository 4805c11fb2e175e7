import { describe, expect, it } from "vitest";

import { decodePgm, decodePpm, encodePgm, fromBase64, toBase64 } from "../src/pgm.js";

describe("pgm codec", () => {
  it("round-trips pixels bit-exactly", () => {
    const pixels = new Uint8Array([0, 255, 128, 7, 99, 200]);
    const data = encodePgm(3, 2, pixels);
    const back = decodePgm(data);
    expect(back.width).toBe(3);
    expect(back.height).toBe(2);
    expect([...back.pixels]).toEqual([...pixels]);
  });

  it("produces the exact service byte layout", () => {
    const data = encodePgm(2, 1, new Uint8Array([0, 255]));
    const header = new TextDecoder().decode(data.slice(0, 9));
    expect(header).toBe("P5\n2 1\n25");
    expect(data[data.length - 2]).toBe(0);
    expect(data[data.length - 1]).toBe(255);
  });

  it("rejects wrong-size buffers", () => {
    expect(() => encodePgm(4, 4, new Uint8Array(3))).toThrow(/expected 16/);
  });

  it("rejects truncated payloads", () => {
    const data = encodePgm(4, 4, new Uint8Array(16)).slice(0, 12);
    expect(() => decodePgm(data)).toThrow(/truncated/);
  });

  it("rejects non-255 maxval", () => {
    const bad = new TextEncoder().encode("P5\n2 2\n65535\n    ");
    expect(() => decodePgm(bad)).toThrow(/maxval/);
  });

  it("handles comments in headers", () => {
    const head = new TextEncoder().encode("P5\n# painted mask\n2 2 255\n");
    const data = new Uint8Array([...head, 1, 2, 3, 4]);
    const img = decodePgm(data);
    expect(img.width).toBe(2);
    expect([...img.pixels]).toEqual([1, 2, 3, 4]);
  });

  it("decodes P6 rasters", () => {
    const head = new TextEncoder().encode("P6\n2 1\n255\n");
    const data = new Uint8Array([...head, 10, 20, 30, 40, 50, 60]);
    const img = decodePpm(data);
    expect(img.width).toBe(2);
    expect(img.height).toBe(1);
    expect([...img.rgb]).toEqual([10, 20, 30, 40, 50, 60]);
  });

  it("base64 helpers invert each other", () => {
    const data = encodePgm(3, 3, new Uint8Array(9).fill(77));
    expect([...fromBase64(toBase64(data))]).toEqual([...data]);
  });
});
