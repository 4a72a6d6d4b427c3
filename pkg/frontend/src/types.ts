/**
 * Wire types for the guidance service. Field names mirror the HTTP API
 * exactly; the UI never reshapes them.
 */

/** Normalized [x_min, y_min, x_max, y_max], all in [0, 1]. */
export type Bbox = [number, number, number, number];

export interface ConceptInfo {
  name: string;
  color: [number, number, number];
}

/** A drawn box on the canvas, tagged with a concept from the vocabulary. */
export interface CanvasBox {
  id: number;
  concept: string;
  bbox: Bbox;
}

export interface GenerateParams {
  wPrime: number;
  maskMode: string;
  seed: number;
  steps: number;
}

export interface GenerateRequest {
  prompt_tokens: string[];
  objects: { concept: string; bbox: Bbox }[];
  w_prime: number;
  mask_mode: string;
  seed: number;
  steps: number;
}

export interface Detection {
  class_name: string;
  bbox: Bbox;
  score: number;
}

export interface ConsistencyRecord {
  concept: string;
  bbox: Bbox;
  recorded_iou: number;
  success: boolean;
  size_class: string;
  distance_class: string;
}

export interface GenerateResponse {
  image: string;
  detections: Detection[];
  consistency: ConsistencyRecord[];
  timing: number;
}

/** Body of a 400/422 reply: {"error": {"field", "message"}}. */
export interface ApiError {
  field: string | null;
  message: string;
}
