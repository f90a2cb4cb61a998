/** Thin DOM wiring. All logic lives in the pure modules; this file only
 * renders view models and forwards clicks. Offline fixture mode renders a
 * bundled export document without touching the service. */

import { ApiClient } from "./api.js";
import { ForkController, rootBranch, type BranchNode } from "./branches.js";
import {
  appendEvents,
  buildTimeline,
  selectEvent,
  type TimelineViewModel,
} from "./timeline.js";
import type { ExportDocument, SimulationHandle } from "./types.js";

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderTimeline(container: HTMLElement, model: TimelineViewModel): void {
  container.replaceChildren();
  for (const entry of model.entries) {
    const item = el("article", "timeline-entry");
    item.dataset.eventId = String(entry.eventId);
    item.append(el("time", "timeline-time", entry.timestamp));
    item.append(el("h3", "timeline-title", entry.title));
    if (entry.eventId === model.selectedEventId) {
      item.classList.add("selected");
      item.append(el("p", "timeline-description", entry.description));
      for (const name of entry.participants) {
        const profile = model.profiles.get(name);
        const label = profile?.retired ? `${name} (retired)` : name;
        item.append(el("a", "participant-link", label));
      }
    }
    const badges = el("div", "norm-badges");
    for (const id of entry.normBadges) {
      badges.append(el("span", "norm-badge", id));
    }
    item.append(badges);
    container.append(item);
  }
}

export function renderBranches(container: HTMLElement, tree: BranchNode): void {
  container.replaceChildren();
  const walk = (node: BranchNode, depth: number): void => {
    const row = el("div", "branch-node", `${node.simId} @ step ${node.forkStep}`);
    row.style.marginLeft = `${depth}rem`;
    container.append(row);
    node.children.forEach((child) => walk(child, depth + 1));
  };
  walk(tree, 0);
}

export interface AppState {
  model: TimelineViewModel;
  tree: BranchNode;
  handle: SimulationHandle | null;
  forks: ForkController;
}

export function bootOffline(doc: ExportDocument): AppState {
  const api = new ApiClient("http://offline.invalid", () =>
    Promise.reject(new Error("offline fixture mode has no network")),
  );
  const tree = rootBranch("offline-fixture");
  return {
    model: buildTimeline(doc),
    tree,
    handle: null,
    forks: new ForkController(api, tree, doc.config.assumptions),
  };
}

export async function bootLive(baseUrl: string, simId: string): Promise<AppState> {
  const api = new ApiClient(baseUrl, (url, init) => fetch(url, init));
  const handle = await api.getSimulation(simId);
  const doc = await api.exportLog(simId);
  const tree = rootBranch(simId);
  return {
    model: buildTimeline(doc),
    tree,
    handle,
    forks: new ForkController(api, tree, doc.config.assumptions),
  };
}

export async function stepAndRefresh(
  state: AppState,
  api: ApiClient,
): Promise<AppState> {
  if (!state.handle) {
    return state;
  }
  const response = await api.step(state.handle.sim_id, 1);
  return {
    ...state,
    handle: response.handle,
    model: appendEvents(state.model, response.events),
  };
}

export function onEntryClick(state: AppState, eventId: number): AppState {
  return { ...state, model: selectEvent(state.model, eventId) };
}
