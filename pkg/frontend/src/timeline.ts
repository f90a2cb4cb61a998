/** Pure view-model builders for the timeline and detail panes. */

import type { CharacterProfile, ExportDocument, ExportEvent } from "./types.js";

export interface TimelineEntry {
  eventId: number;
  timestamp: string;
  title: string;
  description: string;
  participants: string[];
  normBadges: string[];
}

export interface ProfileView {
  name: string;
  headline: string;
  backstory: string;
  dimensions: Array<[string, string]>;
  retired: boolean;
}

export interface TimelineViewModel {
  scenario: string;
  entries: TimelineEntry[];
  profiles: Map<string, ProfileView>;
  selectedEventId: number | null;
}

function entryTitle(event: ExportEvent): string {
  const grounded = event.schema_node_id ? `[${event.event_type}] ` : "";
  const summary = event.description.split(/[.!?]/, 1)[0] ?? event.description;
  return `${grounded}${summary}`;
}

function profileView(profile: CharacterProfile): ProfileView {
  return {
    name: profile.name,
    headline: `${profile.age}-year-old ${profile.profession}`,
    backstory: profile.backstory,
    dimensions: Object.entries(profile.social_dimensions).sort(([a], [b]) =>
      a < b ? -1 : a > b ? 1 : 0,
    ),
    retired: profile.retired,
  };
}

/** Build the timeline from an export/v1 document, preserving event order. */
export function buildTimeline(doc: ExportDocument): TimelineViewModel {
  if (doc.version !== "1") {
    throw new Error(`unsupported export version ${doc.version}`);
  }
  const entries = doc.events.map((event) => ({
    eventId: event.id,
    timestamp: event.timestamp,
    title: entryTitle(event),
    description: event.description,
    participants: [...event.participants],
    normBadges: [...event.norm_ids],
  }));
  const profiles = new Map(doc.characters.map((c) => [c.name, profileView(c)]));
  return { scenario: doc.scenario, entries, profiles, selectedEventId: null };
}

export function selectEvent(model: TimelineViewModel, eventId: number): TimelineViewModel {
  if (!model.entries.some((e) => e.eventId === eventId)) {
    return model;
  }
  return { ...model, selectedEventId: eventId };
}

/** Append freshly polled events (by id) without reordering existing ones. */
export function appendEvents(
  model: TimelineViewModel,
  events: ExportEvent[],
): TimelineViewModel {
  const known = new Set(model.entries.map((e) => e.eventId));
  const fresh = events.filter((e) => !known.has(e.id));
  if (fresh.length === 0) {
    return model;
  }
  const entries = model.entries.concat(
    fresh.map((event) => ({
      eventId: event.id,
      timestamp: event.timestamp,
      title: entryTitle(event),
      description: event.description,
      participants: [...event.participants],
      normBadges: [...event.norm_ids],
    })),
  );
  return { ...model, entries };
}
