import { describe, expect, it } from "vitest";

import { decodePpm } from "../src/ppm.js";

function encode(width: number, height: number, pixels: number[]): string {
  return Buffer.concat([
    Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii"),
    Buffer.from(pixels),
  ]).toString("base64");
}

describe("decodePpm", () => {
  it("decodes dimensions and pixel bytes", () => {
    const img = decodePpm(encode(2, 1, [255, 0, 0, 0, 0, 255]));
    expect(img.width).toBe(2);
    expect(img.height).toBe(1);
    expect([...img.rgba]).toEqual([255, 0, 0, 255, 0, 0, 255, 255]);
  });

  it("fills alpha at 255 for every pixel", () => {
    const img = decodePpm(encode(1, 2, [1, 2, 3, 4, 5, 6]));
    expect(img.rgba[3]).toBe(255);
    expect(img.rgba[7]).toBe(255);
  });

  it("rejects non-PPM payloads", () => {
    const garbage = Buffer.from("GIF89a....", "ascii").toString("base64");
    expect(() => decodePpm(garbage)).toThrow(/not a binary PPM/);
  });

  it("rejects truncated rasters", () => {
    const truncated = Buffer.concat([
      Buffer.from("P6\n4 4\n255\n", "ascii"),
      Buffer.from([1, 2, 3]),
    ]).toString("base64");
    expect(() => decodePpm(truncated)).toThrow(/truncated/);
  });
});
