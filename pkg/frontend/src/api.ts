import type {
  ApiError,
  CanvasBox,
  ConceptInfo,
  GenerateParams,
  GenerateRequest,
  GenerateResponse,
} from "./types";

export const BACKGROUND = "background";

/**
 * Prompt tokens for the current boxes: background first, then each tagged
 * concept in first-appearance order.
 */
export function promptTokens(boxes: CanvasBox[]): string[] {
  const tokens = [BACKGROUND];
  for (const box of boxes) {
    if (!tokens.includes(box.concept)) tokens.push(box.concept);
  }
  return tokens;
}

/** Serialize exactly the visible box list, order preserved. */
export function buildRequest(boxes: CanvasBox[], params: GenerateParams): GenerateRequest {
  return {
    prompt_tokens: promptTokens(boxes),
    objects: boxes.map((box) => ({ concept: box.concept, bbox: box.bbox })),
    w_prime: params.wPrime,
    mask_mode: params.maskMode,
    seed: params.seed,
    steps: params.steps,
  };
}

/** Index of the box an error field like "objects[1].bbox" points at. */
export function errorBoxIndex(field: string | null): number | null {
  if (field == null) return null;
  const match = /^objects\[(\d+)\]/.exec(field);
  return match ? Number(match[1]) : null;
}

export class RequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: ApiError,
  ) {
    super(detail.message);
    this.name = "RequestError";
  }
}

/**
 * Service client. At most one generate request is in flight: starting a new
 * one aborts the previous, so a stale response never lands on the canvas.
 */
export class GuidanceClient {
  private inFlight: AbortController | null = null;

  constructor(private readonly baseUrl: string = "") {}

  async concepts(): Promise<ConceptInfo[]> {
    const response = await fetch(`${this.baseUrl}/api/concepts`);
    if (!response.ok) throw new Error(`concept listing failed (${response.status})`);
    const payload = await response.json();
    return payload.concepts;
  }

  async generate(request: GenerateRequest): Promise<GenerateResponse> {
    this.inFlight?.abort();
    const controller = new AbortController();
    this.inFlight = controller;
    try {
      const response = await fetch(`${this.baseUrl}/api/generate`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(request),
        signal: controller.signal,
      });
      const payload = await response.json();
      if (!response.ok) {
        throw new RequestError(response.status, payload.error as ApiError);
      }
      return payload as GenerateResponse;
    } finally {
      if (this.inFlight === controller) this.inFlight = null;
    }
  }
}
