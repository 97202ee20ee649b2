import { ApiError, validateClassifyResponse } from "./api.js";
import type { ClassifyResponse } from "./api.js";

export type Phase = "idle" | "capturing" | "uploading" | "result" | "error";

export interface UiState {
  phase: Phase;
  previewUrl: string | null;
  response: ClassifyResponse | null;
  saliencyEnabled: boolean;
  overlayOpacity: number; // [0, 1]
  error: { message: string; retryable: boolean } | null;
}

export type ClassifyFn = (
  image: Blob,
  options: { saliency?: boolean; signal?: AbortSignal },
) => Promise<ClassifyResponse>;

type Listener = (state: UiState) => void;

// One in-flight classify request at a time: submitting again aborts the
// pending request before starting the new one. All service calls are
// asynchronous; the store only ever transitions between phases.
export class AppStore {
  private state: UiState = {
    phase: "idle",
    previewUrl: null,
    response: null,
    saliencyEnabled: false,
    overlayOpacity: 0.5,
    error: null,
  };
  private listeners: Listener[] = [];
  private controller: AbortController | null = null;
  private image: Blob | null = null;

  constructor(private readonly classify: ClassifyFn) {}

  get current(): UiState {
    return { ...this.state };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.current);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<UiState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.current);
  }

  startCapture(): void {
    this.update({ phase: "capturing", error: null });
  }

  cancelCapture(): void {
    if (this.state.phase === "capturing") this.update({ phase: "idle" });
  }

  setImage(image: Blob, previewUrl: string): void {
    this.image = image;
    this.update({ phase: "idle", previewUrl, response: null, error: null });
  }

  setSaliency(enabled: boolean): void {
    this.update({ saliencyEnabled: enabled });
  }

  setOpacity(opacity: number): void {
    this.update({ overlayOpacity: Math.max(0, Math.min(1, opacity)) });
  }

  reset(): void {
    this.controller?.abort();
    this.controller = null;
    this.image = null;
    this.update({ phase: "idle", previewUrl: null, response: null, error: null });
  }

  async submit(): Promise<void> {
    if (!this.image) {
      this.update({
        phase: "error",
        error: { message: "Pick or capture a photo first.", retryable: false },
      });
      return;
    }
    this.controller?.abort(); // a new submission cancels the pending one
    const controller = new AbortController();
    this.controller = controller;
    this.update({ phase: "uploading", error: null });
    try {
      const response = await this.classify(this.image, {
        saliency: this.state.saliencyEnabled,
        signal: controller.signal,
      });
      if (this.controller !== controller) return; // superseded
      validateClassifyResponse(response);
      this.update({ phase: "result", response, error: null });
    } catch (err) {
      if (this.controller !== controller) return; // superseded or reset
      if (err instanceof DOMException && err.name === "AbortError") return;
      const message =
        err instanceof ApiError ? err.message : "Unexpected error while contacting the service.";
      const retryable = err instanceof ApiError ? err.retryable : true;
      this.update({ phase: "error", response: null, error: { message, retryable } });
    } finally {
      if (this.controller === controller) this.controller = null;
    }
  }
}
