// Minimal 8-bit grayscale PNG codec. The encoder writes a fully valid PNG
// (zlib stream with stored deflate blocks), which any reader including the
// inference service can decode; the decoder only needs to understand the
// encoder's own output (stored blocks) for round-trip verification.

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

let crcTable: Uint32Array | null = null;

function crc32(bytes: Uint8Array): number {
  if (!crcTable) {
    crcTable = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
      let c = n;
      for (let k = 0; k < 8; k++) {
        c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
      }
      crcTable[n] = c >>> 0;
    }
  }
  let crc = 0xffffffff;
  for (const b of bytes) {
    crc = crcTable[(crc ^ b) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (const byte of bytes) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32(value: number): number[] {
  return [(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff];
}

function chunk(type: string, data: Uint8Array): number[] {
  const typed = new Uint8Array(4 + data.length);
  typed.set([...type].map((c) => c.charCodeAt(0)));
  typed.set(data, 4);
  return [...u32(data.length), ...typed, ...u32(crc32(typed))];
}

/** zlib stream around the raw bytes using stored (uncompressed) deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: number[] = [0x78, 0x01];
  const max = 65535;
  for (let off = 0; off < raw.length; off += max) {
    const len = Math.min(max, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    blocks.push(final, len & 0xff, (len >>> 8) & 0xff, ~len & 0xff, (~len >>> 8) & 0xff);
    for (let i = 0; i < len; i++) blocks.push(raw[off + i]);
  }
  blocks.push(...u32(adler32(raw)));
  return new Uint8Array(blocks);
}

export function encodeGrayPng(labels: Uint8Array, width: number, height: number): Uint8Array {
  if (labels.length !== width * height) {
    throw new Error(`label buffer ${labels.length} != ${width}x${height}`);
  }
  const ihdr = new Uint8Array([...u32(width), ...u32(height), 8, 0, 0, 0, 0]);
  const raw = new Uint8Array(height * (width + 1)); // filter byte 0 per row
  for (let y = 0; y < height; y++) {
    raw.set(labels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  return new Uint8Array([
    ...SIGNATURE,
    ...chunk("IHDR", ihdr),
    ...chunk("IDAT", zlibStored(raw)),
    ...chunk("IEND", new Uint8Array(0)),
  ]);
}

export interface DecodedGray {
  width: number;
  height: number;
  labels: Uint8Array;
}

/** Decodes PNGs produced by encodeGrayPng (grayscale, stored deflate). */
export function decodeGrayPng(bytes: Uint8Array): DecodedGray {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  let idat: number[] = [];
  while (pos < bytes.length) {
    const len = (bytes[pos] << 24) | (bytes[pos + 1] << 16) | (bytes[pos + 2] << 8) | bytes[pos + 3];
    const type = String.fromCharCode(...bytes.subarray(pos + 4, pos + 8));
    const data = bytes.subarray(pos + 8, pos + 8 + len);
    const stored = crc32(bytes.subarray(pos + 4, pos + 8 + len));
    const expected =
      ((bytes[pos + 8 + len] << 24) |
        (bytes[pos + 9 + len] << 16) |
        (bytes[pos + 10 + len] << 8) |
        bytes[pos + 11 + len]) >>>
      0;
    if (stored !== expected) throw new Error(`bad CRC in ${type}`);
    if (type === "IHDR") {
      width = (data[0] << 24) | (data[1] << 16) | (data[2] << 8) | data[3];
      height = (data[4] << 24) | (data[5] << 16) | (data[6] << 8) | data[7];
      if (data[8] !== 8 || data[9] !== 0) throw new Error("not 8-bit grayscale");
    } else if (type === "IDAT") {
      idat.push(...data);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + len;
  }
  // inflate stored blocks
  const z = new Uint8Array(idat);
  let zp = 2; // skip zlib header
  const raw: number[] = [];
  for (;;) {
    const final = z[zp] & 1;
    const btype = (z[zp] >>> 1) & 3;
    if (btype !== 0) throw new Error("decoder handles stored blocks only");
    const len = z[zp + 1] | (z[zp + 2] << 8);
    for (let i = 0; i < len; i++) raw.push(z[zp + 5 + i]);
    zp += 5 + len;
    if (final) break;
  }
  const labels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("unsupported filter");
    for (let x = 0; x < width; x++) {
      labels[y * width + x] = raw[y * (width + 1) + 1 + x];
    }
  }
  return { width, height, labels };
}

export function toBase64(bytes: Uint8Array): string {
  if (typeof Buffer !== "undefined") {
    return Buffer.from(bytes).toString("base64");
  }
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

export function fromBase64(b64: string): Uint8Array {
  if (typeof Buffer !== "undefined") {
    return new Uint8Array(Buffer.from(b64, "base64"));
  }
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
