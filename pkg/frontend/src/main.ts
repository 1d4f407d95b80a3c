/**
 * Console shell: hash-routed screens over the node API. All mutating
 * actions require a live session and, where a transaction must be signed,
 * a locally imported key; the server never sees key material.
 */

import { ApiError, NodeApi } from "./api.js";
import { Doc, fromHex } from "./codec.js";
import { SigningKey, TxKind, buildSignedTx, importSeed } from "./signing.js";
import { Session, allowedScreens, atLeast, canReviewClaims, isExpired } from "./session.js";
import {
  Banner,
  claimActions,
  errorBanner,
  formatAmount,
  historyModel,
  sanitizeResearchRows,
  successBanner,
} from "./views.js";

interface AppState {
  api: NodeApi;
  session: Session | null;
  signer: SigningKey | null;
}

const state: AppState = {
  api: new NodeApi(defaultApiBase()),
  session: null,
  signer: null,
};

function defaultApiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "http://127.0.0.1:8440";
}

// --- tiny DOM helpers -------------------------------------------------------

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function input(id: string, placeholder: string, type = "text"): HTMLInputElement {
  return el("input", { id, placeholder, type });
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

const root = (): HTMLElement => document.getElementById("app") as HTMLElement;

function showBanner(banner: Banner): void {
  const zone = document.getElementById("banner");
  if (!zone) return;
  clear(zone);
  zone.append(el("div", { class: `banner ${banner.kind}` }, banner.text));
}

async function guarded(action: () => Promise<void>): Promise<void> {
  if (state.session && isExpired(state.session)) {
    state.session = null;
    state.signer = null;
    renderLogin({ kind: "error", text: "session expired; log in again" });
    return;
  }
  try {
    await action();
  } catch (error) {
    showBanner(errorBanner(error));
  }
}

function requireSession(): Session {
  if (!state.session) throw new ApiError("PermissionDenied", "not logged in", 403);
  return state.session;
}

function requireSigner(): SigningKey {
  if (!state.signer) {
    throw new ApiError(
      "KeyMismatch",
      "no signing key loaded; provide your key seed at login",
      403,
    );
  }
  return state.signer;
}

// --- login -----------------------------------------------------------------

function renderLogin(banner?: Banner): void {
  const apiField = input("api", "node API, e.g. http://127.0.0.1:8440");
  apiField.value = state.api.baseUrl;
  const userField = input("user", "user");
  const passField = input("pass", "password", "password");
  const seedField = input("seed", "signing key seed (hex, doctors/admins)", "password");
  const seedFile = el("input", { type: "file", id: "seedfile" });
  seedFile.addEventListener("change", async () => {
    const file = (seedFile as HTMLInputElement).files?.[0];
    if (file) seedField.value = (await file.text()).split(/\s+/)[0] ?? "";
  });
  const button = el("button", {}, "Log in");
  button.addEventListener("click", () =>
    guarded(async () => {
      state.api = new NodeApi(apiField.value.replace(/\/$/, ""));
      state.session = await state.api.login(userField.value, passField.value);
      state.signer = seedField.value.trim() ? await importSeed(seedField.value) : null;
      window.location.hash = "#lookup";
      renderApp();
    }),
  );
  clear(root());
  root().append(
    el("div", { class: "login" },
      el("h1", {}, "medledger console"),
      el("div", { id: "banner" }),
      apiField, userField, passField, seedField,
      el("label", {}, "or load seed from file: ", seedFile),
      button,
    ),
  );
  if (banner) showBanner(banner);
}

// --- application chrome ---------------------------------------------------

function renderApp(): void {
  const session = state.session;
  if (!session) {
    renderLogin();
    return;
  }
  const nav = el("nav", {});
  for (const screen of allowedScreens(session)) {
    const link = el("a", { href: `#${screen.id}` }, screen.label);
    nav.append(link);
  }
  const logout = el("button", { class: "logout" }, "Log out");
  logout.addEventListener("click", () => {
    state.session = null;
    state.signer = null;
    renderLogin();
  });
  clear(root());
  root().append(
    el("header", {},
      el("span", { class: "whoami" }, `${session.user} [${session.elevation}]`),
      nav,
      logout,
    ),
    el("div", { id: "banner" }),
    el("main", { id: "screen" }),
  );
  renderScreen();
}

function screenZone(): HTMLElement {
  return document.getElementById("screen") as HTMLElement;
}

function renderScreen(): void {
  const session = state.session;
  if (!session) return;
  const id = window.location.hash.replace("#", "") || "lookup";
  const screens: Record<string, () => void> = {
    lookup: renderLookup,
    prescribe: renderPrescribe,
    research: renderResearch,
    donors: renderDonors,
    claims: renderClaims,
    notifications: renderNotifications,
    blobs: renderBlobs,
  };
  const permitted = new Set(allowedScreens(session).map((s) => s.id));
  const render = permitted.has(id) ? screens[id] : undefined;
  if (render) render();
  else renderLookup();
}

// --- screens ------------------------------------------------------------

function renderLookup(): void {
  const phone = input("phone", "patient phone number");
  const button = el("button", {}, "Look up");
  const results = el("div", {});
  button.addEventListener("click", () =>
    guarded(async () => {
      const history = await state.api.patientHistory(requireSession(), phone.value.trim());
      const model = historyModel(history);
      clear(results);
      results.append(
        el("h3", {}, `${model.name} (${model.phone})`),
        el("p", {},
          `age ${model.age}, blood group ${model.bloodgroup}, ` +
          `insurance ${model.insurance || "none"}, allergies ${model.allergies || "none"}; ` +
          `${model.versionCount} record version(s); login ${model.loginPresent ? "present" : "absent"}`),
      );
      const table = el("table", {},
        el("tr", {},
          el("th", {}, "visit"), el("th", {}, "doctor"), el("th", {}, "problem"),
          el("th", {}, "prescription"), el("th", {}, "bill"), el("th", {}, "attachment")),
      );
      for (const rx of model.prescriptions) {
        const attachment = rx.attachment
          ? el("a", { href: "#blobs", "data-hash": rx.attachment }, rx.attachment.slice(0, 12) + "…")
          : el("span", {}, "—");
        table.append(
          el("tr", {},
            el("td", {}, rx.visitId), el("td", {}, rx.docname), el("td", {}, rx.problem),
            el("td", {}, rx.prescription), el("td", {}, formatAmount(rx.billamt)),
            el("td", {}, attachment)),
        );
      }
      results.append(table);
    }),
  );
  clear(screenZone());
  screenZone().append(el("h2", {}, "Patient lookup"), phone, button, results);
}

function renderPrescribe(): void {
  const fields = {
    visitId: input("visitId", "visit id (unique)"),
    patientnum: input("patientnum", "patient phone"),
    problem: input("problem", "problem"),
    prescription: input("prescription", "prescription"),
    billamt: input("billamt", "bill amount (minor units)", "number"),
    attachment: input("attachment", "attachment hash (optional; use Documents to upload)"),
  };
  const button = el("button", {}, "Sign and submit");
  button.addEventListener("click", () =>
    guarded(async () => {
      const session = requireSession();
      const signer = requireSigner();
      const payload: Doc = {
        visitId: fields.visitId.value.trim(),
        docname: session.user,
        patientnum: fields.patientnum.value.trim(),
        problem: fields.problem.value,
        prescription: fields.prescription.value,
        billamt: Number(fields.billamt.value || "0"),
        attachment: fields.attachment.value.trim(),
      };
      const tx = await buildSignedTx(signer, "CreatePrescription", payload, session.user);
      const txId = await state.api.submitTx(tx.wire);
      showBanner(successBanner(`prescription submitted: ${txId}`));
    }),
  );
  clear(screenZone());
  screenZone().append(
    el("h2", {}, "New prescription"),
    ...Object.values(fields),
    button,
  );
}

function renderResearch(): void {
  const minField = input("min", "minimum age", "number");
  const maxField = input("max", "maximum age", "number");
  const button = el("button", {}, "Query");
  const results = el("div", {});
  button.addEventListener("click", () =>
    guarded(async () => {
      const body = await state.api.research(
        requireSession(), Number(minField.value), Number(maxField.value));
      const { rows, droppedRows } = sanitizeResearchRows(body.rows);
      clear(results);
      results.append(el("p", {}, `${body.count} match(es)`));
      if (droppedRows > 0) {
        showBanner({
          kind: "error",
          text: `${droppedRows} row(s) hidden: unexpected fields in research output`,
        });
      }
      const table = el("table", {},
        el("tr", {},
          el("th", {}, "age"), el("th", {}, "gender"), el("th", {}, "blood group"),
          el("th", {}, "allergies"), el("th", {}, "problem history")),
      );
      for (const row of rows) {
        table.append(
          el("tr", {},
            el("td", {}, String(row.age)), el("td", {}, row.gender),
            el("td", {}, row.bloodgroup), el("td", {}, row.allergies || "—"),
            el("td", {}, row.problemHistory.join(", ") || "—")),
        );
      }
      results.append(table);
    }),
  );
  clear(screenZone());
  screenZone().append(el("h2", {}, "Research query"), minField, maxField, button, results);
}

function renderDonors(): void {
  const group = el("select", { id: "bloodgroup" });
  for (const value of ["A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-"]) {
    group.append(el("option", { value }, value));
  }
  const button = el("button", {}, "Search donors");
  const results = el("div", {});
  button.addEventListener("click", () =>
    guarded(async () => {
      const body = await state.api.donors(requireSession(), (group as HTMLSelectElement).value);
      clear(results);
      results.append(
        el("p", {}, `${body.tokens.length} donor(s); ${body.notified} notification(s) queued`),
        el("ul", {}, ...body.tokens.map((token) => el("li", { class: "token" }, token))),
      );
    }),
  );
  clear(screenZone());
  screenZone().append(el("h2", {}, "Donor search"), group, button, results);
}

function renderClaims(): void {
  const zone = el("div", {});
  const refresh = el("button", {}, "Refresh");
  const load = () =>
    guarded(async () => {
      const session = requireSession();
      const body = await state.api.claims(session);
      clear(zone);
      const table = el("table", {},
        el("tr", {},
          el("th", {}, "claim"), el("th", {}, "visit"), el("th", {}, "phone"),
          el("th", {}, "amount"), el("th", {}, "insurer"), el("th", {}, "status"),
          el("th", {}, "actions")),
      );
      for (const claim of body.claims) {
        const actions = el("td", {});
        for (const action of claimActions(claim, canReviewClaims(session))) {
          const button = el("button", {}, action.label);
          button.addEventListener("click", () =>
            guarded(async () => {
              const signer = requireSigner();
              const tx = await buildSignedTx(
                signer,
                "ReviewClaim",
                { claimId: action.claimId, verdict: action.verdict },
                session.user,
              );
              await state.api.reviewClaimTx(action.claimId, tx.wire);
              showBanner(successBanner(`${action.verdict} submitted for ${action.claimId.slice(0, 12)}…`));
              setTimeout(load, 700); // commit interval
            }),
          );
          actions.append(button);
        }
        table.append(
          el("tr", {},
            el("td", { class: "token" }, claim.claimId.slice(0, 12) + "…"),
            el("td", {}, claim.visitId), el("td", {}, claim.phone),
            el("td", {}, formatAmount(claim.amount)), el("td", {}, claim.insurer),
            el("td", { class: `status-${claim.status.toLowerCase()}` }, claim.status),
            actions),
        );
      }
      zone.append(table);
    });
  refresh.addEventListener("click", load);
  clear(screenZone());
  screenZone().append(el("h2", {}, "Claims"), refresh, zone);
  void load();
}

function renderNotifications(): void {
  const zone = el("div", {});
  clear(screenZone());
  screenZone().append(el("h2", {}, "Notifications"), zone);
  void guarded(async () => {
    const body = await state.api.notifications(requireSession());
    clear(zone);
    if (body.events.length === 0) {
      zone.append(el("p", {}, "no notifications"));
      return;
    }
    zone.append(
      el("ul", {},
        ...body.events.map((event) =>
          el("li", {}, `${event.message} — token `, el("span", { class: "token" }, event.token))),
      ),
    );
  });
}

function renderBlobs(): void {
  const file = el("input", { type: "file", id: "blobfile" });
  const mediaType = el("select", { id: "mediatype" });
  for (const value of ["pdf", "png", "jpg"]) mediaType.append(el("option", { value }, value));
  const upload = el("button", {}, "Upload");
  const uploaded = el("p", {});
  upload.addEventListener("click", () =>
    guarded(async () => {
      const chosen = (file as HTMLInputElement).files?.[0];
      if (!chosen) throw new Error("choose a file first");
      const data = new Uint8Array(await chosen.arrayBuffer());
      const hash = await state.api.uploadBlob(
        requireSession(), data, (mediaType as HTMLSelectElement).value as "pdf" | "png" | "jpg");
      clear(uploaded);
      uploaded.append("stored: ", el("span", { class: "token" }, hash));
      showBanner(successBanner("document stored; reference it from a prescription attachment"));
    }),
  );
  const hashField = input("hash", "content hash to download");
  const download = el("button", {}, "Download");
  download.addEventListener("click", () =>
    guarded(async () => {
      const hash = hashField.value.trim();
      fromHex(hash); // validate before the round trip
      const data = await state.api.downloadBlob(requireSession(), hash);
      const blob = new Blob([data as BlobPart]);
      const link = el("a", { href: URL.createObjectURL(blob), download: hash });
      link.click();
    }),
  );
  clear(screenZone());
  screenZone().append(
    el("h2", {}, "Documents"),
    el("div", {}, file, mediaType, upload, uploaded),
    el("div", {}, hashField, download),
  );
}

// --- bootstrap -------------------------------------------------------------

window.addEventListener("hashchange", () => {
  if (state.session) renderScreen();
});

renderLogin();

export { renderApp, renderLogin, state };
