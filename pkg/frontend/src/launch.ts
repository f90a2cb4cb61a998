/** Configure-and-launch form logic: turns form input into the exact
 * SimulationConfig payload the backend (and its CLI) expects. */

import type { SimulationConfig } from "./types.js";

export interface LaunchForm {
  schemaId: string;
  assumptionsText: string; // one assumption per line
  regionTag: string;
  startTime: string; // ISO timestamp
  steps: number;
  seed: number;
  normsEnabled: boolean;
  maxCharacters: number;
}

export function defaultForm(): LaunchForm {
  return {
    schemaId: "",
    assumptionsText: "",
    regionTag: "",
    startTime: "2030-01-01T00:00:00+00:00",
    steps: 5,
    seed: 0,
    normsEnabled: true,
    maxCharacters: 8,
  };
}

export function assumptionLines(text: string): string[] {
  return text
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

/** Mirrors the config invariants: submit stays disabled until valid. */
export function canSubmit(form: LaunchForm): boolean {
  return (
    form.schemaId.length > 0 &&
    form.regionTag.length > 0 &&
    assumptionLines(form.assumptionsText).length > 0 &&
    form.steps >= 1
  );
}

export function toConfig(form: LaunchForm): SimulationConfig {
  if (!canSubmit(form)) {
    throw new Error("form is not submittable");
  }
  return {
    schema_id: form.schemaId,
    assumptions: assumptionLines(form.assumptionsText),
    region_tag: form.regionTag,
    start_time: form.startTime,
    step_duration_seconds: 86400,
    max_steps: form.steps,
    max_active_characters: form.maxCharacters,
    max_planned_events: 5,
    norms_enabled: form.normsEnabled,
    random_seed: form.seed,
    executable_parents: false,
  };
}
