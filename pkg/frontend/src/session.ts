/**
 * Session state and elevation gating. The console renders only the actions
 * the logged-in elevation may perform; the node enforces the same policy
 * server-side, so gating here is presentation, not security.
 */

export const ELEVATIONS = [
  "PATIENT",
  "DOCTOR",
  "HOSPITAL_ADMIN",
  "INSURANCE_ADMIN",
  "SYSTEM_ADMIN",
] as const;

export type Elevation = (typeof ELEVATIONS)[number];

export interface Session {
  token: string;
  user: string;
  elevation: Elevation;
  expiresAt: number; // millis
}

export function elevationRank(name: string): number {
  const rank = ELEVATIONS.indexOf(name as Elevation);
  if (rank < 0) throw new Error(`unknown elevation: ${name}`);
  return rank;
}

export function atLeast(session: Session, minimum: Elevation): boolean {
  return elevationRank(session.elevation) >= elevationRank(minimum);
}

export function isExpired(session: Session, now: number = Date.now()): boolean {
  return now >= session.expiresAt;
}

export interface ScreenLink {
  id: string;
  label: string;
}

/** Dashboard entries for a session, in display order. */
export function allowedScreens(session: Session): ScreenLink[] {
  const screens: ScreenLink[] = [{ id: "lookup", label: "Patient lookup" }];
  if (atLeast(session, "DOCTOR")) {
    screens.push({ id: "prescribe", label: "New prescription" });
    screens.push({ id: "research", label: "Research query" });
    screens.push({ id: "donors", label: "Donor search" });
    screens.push({ id: "blobs", label: "Documents" });
  }
  screens.push({ id: "claims", label: "Claims" });
  screens.push({ id: "notifications", label: "Notifications" });
  return screens;
}

export function canReviewClaims(session: Session): boolean {
  return atLeast(session, "INSURANCE_ADMIN");
}
