/** Wire types mirroring the service API's JSON payloads. */

export interface ExportEvent {
  id: number;
  timestamp: string;
  schema_node_id: string | null;
  event_type: string;
  arguments: Record<string, string>;
  participants: string[];
  description: string;
  provenance: string;
  norm_ids: string[];
  warnings: string[];
}

export interface CharacterProfile {
  name: string;
  age: number;
  profession: string;
  backstory: string;
  plotline: string;
  social_dimensions: Record<string, string>;
  retired: boolean;
}

export interface SimulationConfig {
  schema_id: string;
  assumptions: string[];
  region_tag: string;
  start_time: string;
  step_duration_seconds: number;
  max_steps: number;
  max_active_characters: number;
  max_planned_events: number;
  norms_enabled: boolean;
  random_seed: number;
  executable_parents: boolean;
}

export interface ExportDocument {
  version: string;
  scenario: string;
  config: SimulationConfig;
  characters: CharacterProfile[];
  events: ExportEvent[];
  overview: string | null;
}

export interface SimulationHandle {
  sim_id: string;
  status: "created" | "paused" | "running" | "finished" | "failed";
  current_step: number;
  parent_sim: { sim_id: string; fork_step: number } | null;
}

export interface StepResponse {
  handle: SimulationHandle;
  events: ExportEvent[];
}
