/** Thin typed client over the service API. The fetch function is injected
 * so tests can capture requests without any network or DOM. */

import type {
  ExportDocument,
  SimulationConfig,
  SimulationHandle,
  StepResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function check(response: Response): Promise<unknown> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail =
      typeof (body as { detail?: unknown }).detail === "string"
        ? (body as { detail: string }).detail
        : `request failed with status ${response.status}`;
    throw new ApiError(response.status, detail);
  }
  return body;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  private async post(path: string, payload: unknown): Promise<unknown> {
    const response = await this.fetchFn(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return check(response);
  }

  private async get(path: string): Promise<unknown> {
    const response = await this.fetchFn(this.url(path));
    return check(response);
  }

  listSchemas(): Promise<{ schemas: string[] }> {
    return this.get("/schemas") as Promise<{ schemas: string[] }>;
  }

  createSimulation(config: SimulationConfig): Promise<SimulationHandle> {
    return this.post("/simulations", { config }) as Promise<SimulationHandle>;
  }

  getSimulation(simId: string): Promise<SimulationHandle> {
    return this.get(`/simulations/${simId}`) as Promise<SimulationHandle>;
  }

  step(simId: string, n = 1): Promise<StepResponse> {
    return this.post(`/simulations/${simId}/step?n=${n}`, {}) as Promise<StepResponse>;
  }

  fork(
    simId: string,
    atStep: number,
    assumptions?: string[],
  ): Promise<SimulationHandle> {
    const body: { at_step: number; assumptions?: string[] } = { at_step: atStep };
    if (assumptions !== undefined) {
      body.assumptions = assumptions;
    }
    return this.post(`/simulations/${simId}/fork`, body) as Promise<SimulationHandle>;
  }

  eventsSince(simId: string, since: number): Promise<{ events: unknown[] }> {
    return this.get(`/simulations/${simId}/events?since=${since}`) as Promise<{
      events: unknown[];
    }>;
  }

  exportLog(simId: string): Promise<ExportDocument> {
    return this.get(`/simulations/${simId}/export`) as Promise<ExportDocument>;
  }
}
