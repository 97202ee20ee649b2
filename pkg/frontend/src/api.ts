// Typed client for the classification service. The UI talks to exactly
// three endpoints: /api/classify, /api/labels, /healthz.

export interface Prediction {
  label: string;
  probability: number;
}

export interface ClassifyResponse {
  predictions: Prediction[];
  top_label: string;
  model_id: string;
  saliency_png?: string;
}

export interface HealthResponse {
  status: string;
  model_id: string;
  load_time_seconds: number;
  weight_size_bytes: number;
}

export type ErrorKind = "bad-image" | "too-large" | "unavailable" | "network";

export class ApiError extends Error {
  constructor(
    public readonly kind: ErrorKind,
    message: string,
    public readonly retryable: boolean,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function errorForStatus(status: number): ApiError {
  if (status === 400) {
    return new ApiError(
      "bad-image",
      "That file could not be read as an image. Please choose a JPEG or PNG photo.",
      false,
    );
  }
  if (status === 413) {
    return new ApiError(
      "too-large",
      "The image is larger than the service accepts. Try a smaller photo.",
      false,
    );
  }
  if (status === 503) {
    return new ApiError(
      "unavailable",
      "The analysis service is starting up or has no model loaded. Try again shortly.",
      true,
    );
  }
  return new ApiError("network", `The service answered with status ${status}.`, true);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async classify(
    image: Blob,
    options: { saliency?: boolean; signal?: AbortSignal } = {},
  ): Promise<ClassifyResponse> {
    const query = options.saliency ? "?saliency=1" : "";
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}/api/classify${query}`, {
        method: "POST",
        body: image,
        signal: options.signal ?? null,
      });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError("network", "Could not reach the analysis service.", true);
    }
    if (!response.ok) throw errorForStatus(response.status);
    const doc = (await response.json()) as ClassifyResponse;
    validateClassifyResponse(doc);
    return doc;
  }

  async labels(signal?: AbortSignal): Promise<string[]> {
    const response = await this.fetchFn(`${this.baseUrl}/api/labels`, {
      signal: signal ?? null,
    });
    if (!response.ok) throw errorForStatus(response.status);
    return (await response.json()) as string[];
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/healthz`);
    if (!response.ok) throw errorForStatus(response.status);
    return (await response.json()) as HealthResponse;
  }
}

// The result panel must only ever show numbers the service produced, so a
// malformed payload is rejected here instead of being patched up client-side.
export function validateClassifyResponse(doc: ClassifyResponse): void {
  if (!Array.isArray(doc.predictions) || doc.predictions.length === 0) {
    throw new ApiError("network", "The service returned an empty prediction list.", true);
  }
  const total = doc.predictions.reduce((acc, p) => acc + p.probability, 0);
  if (!Number.isFinite(total) || Math.abs(total - 1.0) > 1e-3) {
    throw new ApiError(
      "network",
      "The service returned malformed probabilities (they do not sum to 1).",
      true,
    );
  }
}
