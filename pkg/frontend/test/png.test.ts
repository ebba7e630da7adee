import { describe, expect, it } from "vitest";

import { decodeGrayPng, encodeGrayPng, fromBase64, toBase64 } from "../src/png.js";

describe("gray PNG codec", () => {
  it("round-trips a label map bit-exactly", () => {
    const size = 32;
    const labels = new Uint8Array(size * size);
    for (let i = 0; i < labels.length; i++) labels[i] = (i * 7) % 5;
    const png = encodeGrayPng(labels, size, size);
    const decoded = decodeGrayPng(png);
    expect(decoded.width).toBe(size);
    expect(decoded.height).toBe(size);
    expect(decoded.labels).toEqual(labels);
  });

  it("starts with the PNG signature", () => {
    const png = encodeGrayPng(new Uint8Array(4), 2, 2);
    expect([...png.slice(0, 8)]).toEqual([137, 80, 78, 71, 13, 10, 26, 10]);
  });

  it("rejects mismatched buffer sizes", () => {
    expect(() => encodeGrayPng(new Uint8Array(3), 2, 2)).toThrow();
  });

  it("detects CRC corruption", () => {
    const png = encodeGrayPng(new Uint8Array(16), 4, 4);
    png[20] ^= 0xff; // corrupt IHDR payload without fixing the CRC
    expect(() => decodeGrayPng(png)).toThrow(/CRC/);
  });

  it("handles maps larger than one stored deflate block", () => {
    const size = 300; // 300*301 raw bytes > 65535 forces multiple blocks
    const labels = new Uint8Array(size * size);
    for (let i = 0; i < labels.length; i++) labels[i] = i % 251;
    const decoded = decodeGrayPng(encodeGrayPng(labels, size, size));
    expect(decoded.labels).toEqual(labels);
  });

  it("base64 helpers invert each other", () => {
    const bytes = new Uint8Array([0, 1, 2, 250, 251, 255]);
    expect(fromBase64(toBase64(bytes))).toEqual(bytes);
  });
});
