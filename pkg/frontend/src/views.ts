/**
 * Pure view-model builders: everything the screens render is shaped here,
 * where it can be unit-tested without a DOM.
 *
 * The research view re-checks the server's anonymity contract on the
 * client: rows are reduced to exactly the five permitted fields, and a row
 * smuggling an identifier key is dropped and reported rather than shown.
 */

import { ApiError, ClaimView, PatientHistoryView, ResearchRow } from "./api.js";

export const RESEARCH_FIELDS = [
  "age",
  "gender",
  "bloodgroup",
  "allergies",
  "problemHistory",
] as const;

export const FORBIDDEN_RESEARCH_FIELDS = [
  "name",
  "phone",
  "dbIdentifier",
  "photo",
  "dob",
  "insurance",
  "docdetails",
] as const;

export interface Banner {
  kind: "error" | "success" | "info";
  text: string;
}

export function errorBanner(error: unknown): Banner {
  if (error instanceof ApiError) {
    return { kind: "error", text: `${error.message} (${error.code})` };
  }
  const message = error instanceof Error ? error.message : String(error);
  return { kind: "error", text: message };
}

export function successBanner(text: string): Banner {
  return { kind: "success", text };
}

export interface SanitizedResearch {
  rows: ResearchRow[];
  droppedRows: number;
}

/** Client-side re-check of the anonymity contract. */
export function sanitizeResearchRows(rows: unknown[]): SanitizedResearch {
  const safe: ResearchRow[] = [];
  let dropped = 0;
  for (const raw of rows) {
    if (typeof raw !== "object" || raw === null) {
      dropped += 1;
      continue;
    }
    const keys = Object.keys(raw as Record<string, unknown>);
    const extraKeys = keys.filter(
      (key) => !(RESEARCH_FIELDS as readonly string[]).includes(key),
    );
    if (extraKeys.length > 0) {
      dropped += 1;
      continue;
    }
    const row = raw as Record<string, unknown>;
    safe.push({
      age: Number(row.age),
      gender: String(row.gender ?? ""),
      bloodgroup: String(row.bloodgroup ?? ""),
      allergies: String(row.allergies ?? ""),
      problemHistory: Array.isArray(row.problemHistory)
        ? row.problemHistory.map(String)
        : [],
    });
  }
  return { rows: safe, droppedRows: dropped };
}

export interface HistoryModel {
  phone: string;
  name: string;
  age: number;
  bloodgroup: string;
  insurance: string;
  allergies: string;
  versionCount: number;
  loginPresent: boolean;
  prescriptions: {
    visitId: string;
    docname: string;
    problem: string;
    prescription: string;
    billamt: number;
    attachment: string;
  }[];
}

export function historyModel(view: PatientHistoryView): HistoryModel {
  const patient = view.patient as Record<string, unknown>;
  return {
    phone: String(patient.phone ?? ""),
    name: String(patient.name ?? ""),
    age: Number(patient.age ?? 0),
    bloodgroup: String(patient.bloodgroup ?? ""),
    insurance: String(patient.insurance ?? ""),
    allergies: String(patient.allergies ?? ""),
    versionCount: view.versions.length + 1,
    loginPresent: view.loginPresent,
    prescriptions: view.prescriptions.map((rx) => ({
      visitId: String(rx.visitId ?? ""),
      docname: String(rx.docname ?? ""),
      problem: String(rx.problem ?? ""),
      prescription: String(rx.prescription ?? ""),
      billamt: Number(rx.billamt ?? 0),
      attachment: String(rx.attachment ?? ""),
    })),
  };
}

export interface ClaimAction {
  claimId: string;
  verdict: "Approve" | "Revoke";
  label: string;
}

/** Buttons a reviewer may press for one claim, per the legal transitions. */
export function claimActions(claim: ClaimView, canReview: boolean): ClaimAction[] {
  if (!canReview) return [];
  if (claim.status === "Pending") {
    return [
      { claimId: claim.claimId, verdict: "Approve", label: "Approve" },
      { claimId: claim.claimId, verdict: "Revoke", label: "Revoke" },
    ];
  }
  if (claim.status === "Approved") {
    return [{ claimId: claim.claimId, verdict: "Revoke", label: "Revoke" }];
  }
  return []; // Revoked is terminal
}

export function formatAmount(minorUnits: number): string {
  return (minorUnits / 100).toFixed(2);
}
