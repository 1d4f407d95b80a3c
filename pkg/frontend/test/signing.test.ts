import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { toHex } from "../src/codec.js";
import { buildSignedTx, importSeed, signingBody } from "../src/signing.js";

const vector = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "tx_vector.json"), "utf-8"),
);

// RFC 8032 test vector 1
const RFC_SEED = "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60";
const RFC_PUBLIC = "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a";
const RFC_SIGNATURE =
  "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb88215" +
  "90a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b";

describe("local signing", () => {
  it("derives the published public key from a seed", async () => {
    const signer = await importSeed(RFC_SEED);
    expect(signer.publicHex).toBe(RFC_PUBLIC);
  });

  it("produces the published signature for the empty message", async () => {
    const signer = await importSeed(RFC_SEED);
    const signature = new Uint8Array(
      await crypto.subtle.sign("Ed25519", signer.key, new Uint8Array(0)),
    );
    expect(toHex(signature)).toBe(RFC_SIGNATURE);
  });

  it("rejects seeds that are not 32 bytes", async () => {
    await expect(importSeed("abcd")).rejects.toThrow();
  });

  it("reproduces the node's signing bytes, txId, and signature exactly", async () => {
    const signer = await importSeed(vector.seedHex);
    expect(signer.publicHex).toBe(vector.publicHex);
    const body = signingBody(
      vector.kind,
      vector.payload,
      vector.signerUser,
      signer.publicHex,
      vector.timestamp,
    );
    expect(toHex(body)).toBe(vector.signingBytesHex);
    const tx = await buildSignedTx(
      signer,
      vector.kind,
      vector.payload,
      vector.signerUser,
      vector.timestamp,
    );
    expect(tx.txId).toBe(vector.txIdHex);
    expect(tx.wire["signature"]).toBe(vector.signatureHex);
    expect(tx.wire).toEqual(vector.wire);
  });
});
