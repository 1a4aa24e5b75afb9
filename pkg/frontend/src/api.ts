// Typed client over the dose service HTTP schema. The transport is
// injectable so tests can mock it; the client never computes doses itself.

export interface PredictRequest {
  radionuclide: string;
  stability: string;
  release_height_m: number;
  distance_m: number;
  models: string[];
  include_reference: boolean;
}

export interface ModelPrediction {
  dose_uSv_per_hr: number;
  deviation_from_reference_percent: number | null;
  elapsed_ms: number;
  extrapolation: boolean;
}

export interface ReferenceResult {
  dose_uSv_per_hr: number;
  elapsed_ms: number;
}

export interface PredictResponse {
  radionuclide: string;
  stability: string;
  release_height_m: number;
  distance_m: number;
  predictions: Record<string, ModelPrediction>;
  reference: ReferenceResult | null;
}

export interface ProfileRequest {
  radionuclide: string;
  stability: string;
  release_height_m: number;
  distances_m: number[];
  models: string[];
  include_reference: boolean;
}

export interface ProfileResponse {
  radionuclide: string;
  stability: string;
  release_height_m: number;
  distances_m: number[];
  curves: Record<string, number[]>;
  reference: number[] | null;
  extrapolation: boolean[];
  elapsed_ms: Record<string, number>;
}

export type Transport = (path: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class DoseApi {
  constructor(
    private readonly transport: Transport,
    readonly baseUrl: string = "",
  ) {}

  private async call<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.transport(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        detail = body.detail ? JSON.stringify(body.detail) : detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, `${response.status}: ${detail}`);
    }
    return (await response.json()) as T;
  }

  nuclides(): Promise<{ nuclides: string[] }> {
    return this.call("/nuclides");
  }

  stabilityClasses(): Promise<{ classes: string[] }> {
    return this.call("/stability-classes");
  }

  predict(req: PredictRequest): Promise<PredictResponse> {
    return this.call("/predict", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  profile(req: ProfileRequest): Promise<ProfileResponse> {
    return this.call("/profile", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }
}

// Bounded-concurrency fan-out with token matching: results come back keyed
// by their request token, so out-of-order completion can never mislabel a
// curve. Failed requests surface as {token, error} entries.
export interface TokenResult<T> {
  token: string;
  value?: T;
  error?: ApiError;
}

export async function fanOut<T>(
  tokens: string[],
  run: (token: string) => Promise<T>,
  maxInFlight = 4,
): Promise<TokenResult<T>[]> {
  const results: TokenResult<T>[] = new Array(tokens.length);
  let next = 0;
  async function worker(): Promise<void> {
    while (next < tokens.length) {
      const i = next++;
      const token = tokens[i];
      try {
        results[i] = { token, value: await run(token) };
      } catch (err) {
        results[i] = {
          token,
          error: err instanceof ApiError ? err : new ApiError(0, String(err)),
        };
      }
    }
  }
  const workers = [];
  for (let k = 0; k < Math.min(maxInFlight, tokens.length); k++) {
    workers.push(worker());
  }
  await Promise.all(workers);
  return results;
}
