/**
 * Canonical document encoding, mirrored bit-for-bit from the node.
 *
 * Per value: one tag byte, a big-endian u32 length, then the payload. Maps
 * sort their entries by UTF-8 key bytes, so equal trees encode identically
 * regardless of insertion order. The node hashes these exact bytes to form
 * transaction ids, which is why the browser must reproduce them when it
 * signs a transaction locally.
 *
 * JSON transport uses {"$ts": millis} for timestamps and
 * {"$bytes": "<hex>"} for binary values.
 */

/** Distinguishes a timestamp from a plain integer in a document tree. */
export class Ts {
  constructor(readonly millis: number) {}
}

export type Doc =
  | string
  | number
  | boolean
  | Uint8Array
  | Ts
  | { [key: string]: Doc }
  | Doc[];

const TAG_MAP = 0x01;
const TAG_LIST = 0x02;
const TAG_STRING = 0x03;
const TAG_INT64 = 0x04;
const TAG_BOOL = 0x05;
const TAG_TIMESTAMP = 0x06;
const TAG_BYTES = 0x07;

const MAX_SAFE = Number.MAX_SAFE_INTEGER;

const utf8 = new TextEncoder();

function compareBytes(a: Uint8Array, b: Uint8Array): number {
  const n = Math.min(a.length, b.length);
  for (let i = 0; i < n; i++) {
    const delta = (a[i] as number) - (b[i] as number);
    if (delta !== 0) return delta;
  }
  return a.length - b.length;
}

class Writer {
  private chunks: Uint8Array[] = [];

  header(tag: number, length: number): void {
    const head = new Uint8Array(5);
    head[0] = tag;
    new DataView(head.buffer).setUint32(1, length, false);
    this.chunks.push(head);
  }

  raw(bytes: Uint8Array): void {
    this.chunks.push(bytes);
  }

  int64(tag: number, value: number): void {
    if (!Number.isInteger(value) || Math.abs(value) > MAX_SAFE) {
      throw new Error(`integer out of safe range: ${value}`);
    }
    this.header(tag, 8);
    const body = new Uint8Array(8);
    new DataView(body.buffer).setBigInt64(0, BigInt(value), false);
    this.chunks.push(body);
  }

  finish(): Uint8Array {
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const out = new Uint8Array(total);
    let offset = 0;
    for (const chunk of this.chunks) {
      out.set(chunk, offset);
      offset += chunk.length;
    }
    return out;
  }
}

function writeValue(value: Doc, out: Writer): void {
  if (typeof value === "boolean") {
    out.header(TAG_BOOL, 1);
    out.raw(Uint8Array.of(value ? 1 : 0));
  } else if (typeof value === "number") {
    out.int64(TAG_INT64, value);
  } else if (value instanceof Ts) {
    out.int64(TAG_TIMESTAMP, value.millis);
  } else if (typeof value === "string") {
    const bytes = utf8.encode(value);
    out.header(TAG_STRING, bytes.length);
    out.raw(bytes);
  } else if (value instanceof Uint8Array) {
    out.header(TAG_BYTES, value.length);
    out.raw(value);
  } else if (Array.isArray(value)) {
    out.header(TAG_LIST, value.length);
    for (const item of value) writeValue(item, out);
  } else {
    const entries = Object.entries(value).map(
      ([key, child]) => [utf8.encode(key), child] as const,
    );
    entries.sort((a, b) => compareBytes(a[0], b[0]));
    out.header(TAG_MAP, entries.length);
    for (const [keyBytes, child] of entries) {
      out.header(TAG_STRING, keyBytes.length);
      out.raw(keyBytes);
      writeValue(child, out);
    }
  }
}

export function encodeCanonical(value: Doc): Uint8Array {
  const out = new Writer();
  writeValue(value, out);
  return out.finish();
}

export function toHex(bytes: Uint8Array): string {
  let text = "";
  for (const byte of bytes) text += byte.toString(16).padStart(2, "0");
  return text;
}

export function fromHex(text: string): Uint8Array {
  if (text.length % 2 !== 0 || /[^0-9a-f]/.test(text)) {
    throw new Error(`bad hex: ${text.slice(0, 16)}...`);
  }
  const out = new Uint8Array(text.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(text.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export async function sha256Hex(data: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", data as BufferSource);
  return toHex(new Uint8Array(digest));
}

/** JSON form used on the HTTP surface. */
export type Jsonable =
  | string
  | number
  | boolean
  | Jsonable[]
  | { [key: string]: Jsonable };

export function toJsonable(value: Doc): Jsonable {
  if (value instanceof Ts) return { $ts: value.millis };
  if (value instanceof Uint8Array) return { $bytes: toHex(value) };
  if (Array.isArray(value)) return value.map(toJsonable);
  if (typeof value === "object") {
    const out: { [key: string]: Jsonable } = {};
    for (const [key, child] of Object.entries(value)) {
      if (key.startsWith("$")) throw new Error(`reserved key: ${key}`);
      out[key] = toJsonable(child);
    }
    return out;
  }
  return value;
}

export function fromJsonable(value: Jsonable): Doc {
  if (typeof value === "number") {
    if (!Number.isInteger(value)) throw new Error("floats are not documents");
    return value;
  }
  if (typeof value !== "object" || value === null) return value as Doc;
  if (Array.isArray(value)) return value.map(fromJsonable);
  const keys = Object.keys(value);
  if (keys.length === 1 && keys[0] === "$ts") {
    return new Ts(value["$ts"] as number);
  }
  if (keys.length === 1 && keys[0] === "$bytes") {
    return fromHex(value["$bytes"] as string);
  }
  const out: { [key: string]: Doc } = {};
  for (const [key, child] of Object.entries(value)) {
    out[key] = fromJsonable(child);
  }
  return out;
}
