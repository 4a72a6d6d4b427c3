import { GuidanceClient, RequestError, buildRequest, errorBoxIndex } from "./api";
import { badgeColor, boxToCanvas, dragToBox, formatIou } from "./geometry";
import { base64ToBytes, decodePpm } from "./ppm";
import type { RgbImage } from "./ppm";
import type {
  CanvasBox,
  ConceptInfo,
  ConsistencyRecord,
  Detection,
  GenerateParams,
} from "./types";

const COLORS = {
  blank: "#1a1a2e",
  dragPreview: "#ffffff",
  detection: "#f0f0f0",
  label: "#ffffff",
};

/** Fields the service can reject that map onto a visible control. */
const FIELD_CONTROLS = ["w_prime", "mask_mode", "seed", "steps"] as const;

interface DragState {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export class App {
  private readonly ctx: CanvasRenderingContext2D;
  private readonly client: GuidanceClient;

  private concepts: ConceptInfo[] = [];
  private boxes: CanvasBox[] = [];
  private nextBoxId = 1;
  private drag: DragState | null = null;

  private image: RgbImage | null = null;
  private detections: Detection[] = [];
  private consistency: ConsistencyRecord[] = [];
  private boxErrors = new Map<number, string>();

  constructor(
    private readonly root: Document,
    private readonly canvas: HTMLCanvasElement,
    baseUrl: string = "",
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    this.client = new GuidanceClient(baseUrl);

    canvas.addEventListener("pointerdown", this.onPointerDown.bind(this));
    canvas.addEventListener("pointermove", this.onPointerMove.bind(this));
    canvas.addEventListener("pointerup", this.onPointerUp.bind(this));
    canvas.addEventListener("pointerleave", this.onPointerCancel.bind(this));
    this.element("generate").addEventListener("click", () => void this.generate());
    this.element("clear").addEventListener("click", this.clearBoxes.bind(this));
  }

  async start(): Promise<void> {
    try {
      this.concepts = await this.client.concepts();
    } catch (error) {
      this.setGlobalError(`cannot reach the guidance service: ${String(error)}`);
      return;
    }
    const select = this.element<HTMLSelectElement>("concept");
    for (const concept of this.concepts) {
      const option = this.root.createElement("option");
      option.value = concept.name;
      option.textContent = concept.name;
      select.appendChild(option);
    }
    // background is a valid tag but rarely what you want to box first
    const firstForeground = this.concepts.find((c) => c.name !== "background");
    if (firstForeground) select.value = firstForeground.name;
    this.refresh();
  }

  private element<T extends HTMLElement = HTMLElement>(id: string): T {
    const node = this.root.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
  }

  private conceptColor(name: string): string {
    const concept = this.concepts.find((c) => c.name === name);
    if (!concept) return "#888888";
    const [r, g, b] = concept.color;
    return `rgb(${r}, ${g}, ${b})`;
  }

  private canvasPoint(event: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((event.clientX - rect.left) / rect.width) * this.canvas.width,
      y: ((event.clientY - rect.top) / rect.height) * this.canvas.height,
    };
  }

  private onPointerDown(event: PointerEvent): void {
    const { x, y } = this.canvasPoint(event);
    this.drag = { x0: x, y0: y, x1: x, y1: y };
    this.canvas.setPointerCapture(event.pointerId);
  }

  private onPointerMove(event: PointerEvent): void {
    if (!this.drag) return;
    const { x, y } = this.canvasPoint(event);
    this.drag.x1 = x;
    this.drag.y1 = y;
    this.renderCanvas();
  }

  private onPointerUp(event: PointerEvent): void {
    if (!this.drag) return;
    const { x0, y0, x1, y1 } = this.drag;
    this.drag = null;
    this.canvas.releasePointerCapture(event.pointerId);
    const bbox = dragToBox(x0, y0, x1, y1, this.canvas.width, this.canvas.height);
    if (!bbox) {
      this.renderCanvas();
      return;
    }
    const concept = this.element<HTMLSelectElement>("concept").value;
    this.boxes.push({ id: this.nextBoxId++, concept, bbox });
    this.invalidateConsistency();
    this.refresh();
  }

  private onPointerCancel(): void {
    if (!this.drag) return;
    this.drag = null;
    this.renderCanvas();
  }

  private deleteBox(id: number): void {
    this.boxes = this.boxes.filter((box) => box.id !== id);
    this.boxErrors.delete(id);
    this.invalidateConsistency();
    this.refresh();
  }

  private clearBoxes(): void {
    this.boxes = [];
    this.boxErrors.clear();
    this.invalidateConsistency();
    this.refresh();
  }

  /** Badges describe the previous request; editing boxes makes them stale. */
  private invalidateConsistency(): void {
    this.consistency = [];
  }

  private params(): GenerateParams {
    return {
      wPrime: Number(this.element<HTMLInputElement>("w-prime").value),
      maskMode: this.element<HTMLSelectElement>("mask-mode").value,
      seed: Number(this.element<HTMLInputElement>("seed").value),
      steps: Number(this.element<HTMLInputElement>("steps").value),
    };
  }

  private clearErrors(): void {
    this.boxErrors.clear();
    this.setGlobalError("");
    for (const field of FIELD_CONTROLS) {
      this.element(`err-${field}`).textContent = "";
    }
  }

  private setGlobalError(message: string): void {
    this.element("global-error").textContent = message;
  }

  private setStatus(message: string): void {
    this.element("status").textContent = message;
  }

  async generate(): Promise<void> {
    this.clearErrors();
    this.setStatus("generating...");
    const request = buildRequest(this.boxes, this.params());
    try {
      const response = await this.client.generate(request);
      this.image = decodePpm(base64ToBytes(response.image));
      this.canvas.width = this.image.width;
      this.canvas.height = this.image.height;
      this.detections = response.detections;
      this.consistency = response.consistency;
      this.setStatus(`generated in ${response.timing} ms`);
      this.refresh();
    } catch (error) {
      if (error instanceof DOMException && error.name === "AbortError") {
        return; // superseded by a newer request
      }
      this.setStatus("");
      if (error instanceof RequestError) {
        this.showRequestError(error);
      } else {
        this.setGlobalError(String(error));
      }
    }
  }

  private showRequestError(error: RequestError): void {
    const field = error.detail.field;
    const boxIndex = errorBoxIndex(field);
    if (boxIndex != null && boxIndex < this.boxes.length) {
      this.boxErrors.set(this.boxes[boxIndex].id, `${field}: ${error.detail.message}`);
      this.refresh();
      return;
    }
    if (field && (FIELD_CONTROLS as readonly string[]).includes(field)) {
      this.element(`err-${field}`).textContent = error.detail.message;
      return;
    }
    // 422 contradictions and body-level 400s have no single control to blame
    this.setGlobalError(
      field ? `${field}: ${error.detail.message}` : `rejected: ${error.detail.message}`,
    );
  }

  private refresh(): void {
    this.renderCanvas();
    this.renderPrompt();
    this.renderBoxList();
  }

  private renderPrompt(): void {
    this.element("prompt").textContent = buildRequest(this.boxes, this.params()).prompt_tokens.join(
      " ",
    );
  }

  private renderCanvas(): void {
    const { ctx, canvas } = this;
    ctx.fillStyle = COLORS.blank;
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (this.image) {
      ctx.putImageData(new ImageData(this.image.pixels, this.image.width, this.image.height), 0, 0);
    }

    ctx.font = "12px system-ui, sans-serif";
    ctx.textBaseline = "top";

    for (const detection of this.detections) {
      const { x, y, w, h } = boxToCanvas(detection.bbox, canvas.width, canvas.height);
      ctx.setLineDash([5, 4]);
      ctx.strokeStyle = COLORS.detection;
      ctx.lineWidth = 1;
      ctx.strokeRect(x, y, w, h);
      ctx.setLineDash([]);
      ctx.fillStyle = COLORS.detection;
      ctx.fillText(`${detection.class_name} ${detection.score.toFixed(2)}`, x + 3, y + h - 16);
    }

    this.boxes.forEach((box, index) => {
      const { x, y, w, h } = boxToCanvas(box.bbox, canvas.width, canvas.height);
      const color = this.conceptColor(box.concept);
      ctx.strokeStyle = color;
      ctx.lineWidth = 2;
      ctx.strokeRect(x, y, w, h);
      ctx.fillStyle = color;
      ctx.fillText(box.concept, x + 3, y + 3);

      const record = this.consistency[index];
      if (record) {
        const text = formatIou(record.recorded_iou);
        const width = ctx.measureText(text).width + 8;
        ctx.fillStyle = badgeColor(record.success);
        ctx.fillRect(x, y - 16, width, 15);
        ctx.fillStyle = COLORS.label;
        ctx.fillText(text, x + 4, y - 14);
      }
    });

    if (this.drag) {
      const { x0, y0, x1, y1 } = this.drag;
      ctx.setLineDash([4, 3]);
      ctx.strokeStyle = COLORS.dragPreview;
      ctx.lineWidth = 1;
      ctx.strokeRect(Math.min(x0, x1), Math.min(y0, y1), Math.abs(x1 - x0), Math.abs(y1 - y0));
      ctx.setLineDash([]);
    }
  }

  private renderBoxList(): void {
    const list = this.element("box-list");
    list.textContent = "";
    this.boxes.forEach((box, index) => {
      const item = this.root.createElement("li");

      const swatch = this.root.createElement("span");
      swatch.className = "swatch";
      swatch.style.background = this.conceptColor(box.concept);
      item.appendChild(swatch);

      const name = this.root.createElement("span");
      name.textContent = box.concept;
      item.appendChild(name);

      const coords = this.root.createElement("span");
      coords.className = "coords";
      coords.textContent = `[${box.bbox.map((v) => v.toFixed(3)).join(", ")}]`;
      item.appendChild(coords);

      const record = this.consistency[index];
      if (record) {
        const badge = this.root.createElement("span");
        badge.className = "badge";
        badge.style.background = badgeColor(record.success);
        badge.textContent = formatIou(record.recorded_iou);
        item.appendChild(badge);
      }

      const remove = this.root.createElement("button");
      remove.textContent = "remove";
      remove.addEventListener("click", () => this.deleteBox(box.id));
      item.appendChild(remove);

      const boxError = this.boxErrors.get(box.id);
      if (boxError) {
        const error = this.root.createElement("span");
        error.className = "field-error box-error";
        error.textContent = boxError;
        item.appendChild(error);
      }

      list.appendChild(item);
    });
  }
}
