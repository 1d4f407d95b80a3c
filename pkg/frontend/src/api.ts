/**
 * Thin typed client over the node's HTTP API. Every non-2xx response is
 * raised as an ApiError carrying the server's machine-readable code, which
 * the console surfaces verbatim in its error banner.
 */

import { Jsonable } from "./codec.js";
import { Session } from "./session.js";

export class ApiError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export interface PatientHistoryView {
  patient: Record<string, Jsonable>;
  versions: Record<string, Jsonable>[];
  prescriptions: Record<string, Jsonable>[];
  loginPresent: boolean;
}

export interface ResearchRow {
  age: number;
  gender: string;
  bloodgroup: string;
  allergies: string;
  problemHistory: string[];
}

export interface ClaimView {
  claimId: string;
  visitId: string;
  phone: string;
  amount: number;
  insurer: string;
  status: "Pending" | "Approved" | "Revoked";
  reviewer: string;
  reviewTimestamp: number;
}

export interface NotificationView {
  token: string;
  bloodgroup: string;
  createdAt: number;
  message: string;
}

export interface StatusView {
  nodeId: string;
  chainId: string;
  height: number;
  stateHash: string;
  peers: string[];
  pendingTxs: number;
}

async function raiseApiError(response: Response): Promise<never> {
  let code = `HTTP${response.status}`;
  let message = response.statusText;
  try {
    const body = (await response.json()) as { error?: { code: string; message: string } };
    if (body.error) {
      code = body.error.code;
      message = body.error.message;
    }
  } catch {
    // non-JSON error body; keep the HTTP status
  }
  throw new ApiError(code, message, response.status);
}

export class NodeApi {
  constructor(readonly baseUrl: string) {}

  private async request(
    path: string,
    init: RequestInit = {},
    session?: Session,
  ): Promise<Response> {
    const headers = new Headers(init.headers);
    if (session) headers.set("Authorization", `Bearer ${session.token}`);
    const response = await fetch(`${this.baseUrl}${path}`, { ...init, headers });
    if (!response.ok) await raiseApiError(response);
    return response;
  }

  private async json<T>(path: string, init: RequestInit = {}, session?: Session): Promise<T> {
    const response = await this.request(path, init, session);
    return (await response.json()) as T;
  }

  async login(user: string, pass: string): Promise<Session> {
    const body = await this.json<{
      token: string;
      user: string;
      elevation: Session["elevation"];
      expiresAt: number;
    }>("/login", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ user, pass }),
    });
    return body;
  }

  status(): Promise<StatusView> {
    return this.json("/status");
  }

  async submitTx(wire: Record<string, unknown>, path = "/tx"): Promise<string> {
    const body = await this.json<{ txId: string }>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(wire),
    });
    return body.txId;
  }

  patientHistory(session: Session, phone: string): Promise<PatientHistoryView> {
    return this.json(`/patients/${encodeURIComponent(phone)}`, {}, session);
  }

  research(session: Session, min: number, max: number): Promise<{ count: number; rows: ResearchRow[] }> {
    return this.json(`/research?min=${min}&max=${max}`, {}, session);
  }

  donors(session: Session, bloodgroup: string): Promise<{ tokens: string[]; notified: number }> {
    return this.json(`/donors/${encodeURIComponent(bloodgroup)}`, {}, session);
  }

  notifications(session: Session): Promise<{ events: NotificationView[] }> {
    return this.json("/notifications", {}, session);
  }

  claims(session: Session): Promise<{ claims: ClaimView[] }> {
    return this.json("/claims", {}, session);
  }

  submitClaimTx(wire: Record<string, unknown>): Promise<string> {
    return this.submitTx(wire, "/claims");
  }

  reviewClaimTx(claimId: string, wire: Record<string, unknown>): Promise<string> {
    return this.submitTx(wire, `/claims/${claimId}/review`);
  }

  async uploadBlob(
    session: Session,
    data: Uint8Array,
    mediaType: "pdf" | "png" | "jpg",
  ): Promise<string> {
    const body = await this.json<{ hash: string }>(
      "/blobs",
      {
        method: "POST",
        headers: { "X-Media-Type": mediaType },
        body: data as unknown as BodyInit,
      },
      session,
    );
    return body.hash;
  }

  async downloadBlob(session: Session, hash: string): Promise<Uint8Array> {
    const response = await this.request(`/blobs/${hash}`, {}, session);
    return new Uint8Array(await response.arrayBuffer());
  }
}
