/**
 * Local transaction signing. Private keys never leave the browser: a seed
 * is pasted or file-loaded at login, held in memory, and used through
 * WebCrypto's Ed25519 support (Chrome 113+, Safari 17+, Node 18+).
 */

import { Doc, Ts, encodeCanonical, fromHex, sha256Hex, toHex, toJsonable } from "./codec.js";

// PKCS#8 prefix for a raw Ed25519 seed (RFC 8410 layout)
const PKCS8_PREFIX = fromHex("302e020100300506032b657004220420");

export interface SigningKey {
  readonly publicHex: string;
  readonly key: CryptoKey;
}

export type TxKind =
  | "CreatePatient"
  | "AmendPatient"
  | "CreatePrescription"
  | "CreateLogin"
  | "SubmitClaim"
  | "ReviewClaim"
  | "PutBlobRef";

export interface SignedTx {
  txId: string;
  wire: Record<string, unknown>;
}

export async function importSeed(seedHex: string): Promise<SigningKey> {
  const seed = fromHex(seedHex.trim());
  if (seed.length !== 32) throw new Error("key seed must be 32 bytes of hex");
  const pkcs8 = new Uint8Array(PKCS8_PREFIX.length + seed.length);
  pkcs8.set(PKCS8_PREFIX);
  pkcs8.set(seed, PKCS8_PREFIX.length);
  const key = await crypto.subtle.importKey(
    "pkcs8",
    pkcs8 as BufferSource,
    { name: "Ed25519" },
    true,
    ["sign"],
  );
  const jwk = await crypto.subtle.exportKey("jwk", key);
  const publicHex = toHex(base64UrlDecode(jwk.x as string));
  return { publicHex, key };
}

function base64UrlDecode(text: string): Uint8Array {
  const b64 = text.replace(/-/g, "+").replace(/_/g, "/");
  const padded = b64 + "=".repeat((4 - (b64.length % 4)) % 4);
  const raw = atob(padded);
  const out = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
  return out;
}

/** The exact bytes the node hashes into the txId and verifies the signature over. */
export function signingBody(
  kind: TxKind,
  payload: Doc,
  signerUser: string,
  publicHex: string,
  timestamp: number,
): Uint8Array {
  return encodeCanonical({
    kind,
    payload,
    signerPublicKey: publicHex,
    signerUser,
    timestamp: new Ts(timestamp),
  });
}

export async function buildSignedTx(
  signer: SigningKey,
  kind: TxKind,
  payload: Doc,
  signerUser: string,
  timestamp: number = Date.now(),
): Promise<SignedTx> {
  const body = signingBody(kind, payload, signerUser, signer.publicHex, timestamp);
  const signature = new Uint8Array(
    await crypto.subtle.sign("Ed25519", signer.key, body as BufferSource),
  );
  const txId = await sha256Hex(body);
  return {
    txId,
    wire: {
      kind,
      payload: toJsonable(payload),
      signature: toHex(signature),
      signerPublicKey: signer.publicHex,
      signerUser,
      timestamp: { $ts: timestamp },
      txId,
    },
  };
}
