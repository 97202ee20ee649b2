import { ApiClient } from "./api.js";
import { downscaleForUpload, isSupportedImageType } from "./downscale.js";
import { renderResultHtml } from "./format.js";
import { AppStore } from "./state.js";
import type { UiState } from "./state.js";

const api = new ApiClient("");
const store = new AppStore((image, options) => api.classify(image, options));

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const fileInput = el<HTMLInputElement>("file-input");
const captureButton = el<HTMLButtonElement>("capture-button");
const snapButton = el<HTMLButtonElement>("snap-button");
const cancelCaptureButton = el<HTMLButtonElement>("cancel-capture-button");
const analyzeButton = el<HTMLButtonElement>("analyze-button");
const retryButton = el<HTMLButtonElement>("retry-button");
const resetButton = el<HTMLButtonElement>("reset-button");
const saliencyToggle = el<HTMLInputElement>("saliency-toggle");
const opacitySlider = el<HTMLInputElement>("opacity-slider");
const video = el<HTMLVideoElement>("camera-video");
const preview = el<HTMLImageElement>("preview-image");
const overlay = el<HTMLImageElement>("overlay-image");
const resultPanel = el<HTMLDivElement>("result-panel");
const statusLine = el<HTMLParagraphElement>("status-line");
const errorPanel = el<HTMLDivElement>("error-panel");
const errorMessage = el<HTMLParagraphElement>("error-message");
const captureSection = el<HTMLDivElement>("capture-section");
const serviceInfo = el<HTMLSpanElement>("service-info");

let cameraStream: MediaStream | null = null;
let previewUrl: string | null = null;

function stopCamera(): void {
  cameraStream?.getTracks().forEach((track) => track.stop());
  cameraStream = null;
  video.srcObject = null;
}

async function acceptImage(blob: Blob): Promise<void> {
  const upload = await downscaleForUpload(blob);
  if (previewUrl) URL.revokeObjectURL(previewUrl);
  previewUrl = URL.createObjectURL(upload);
  store.setImage(upload, previewUrl);
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (!file) {
    store.cancelCapture();
    return;
  }
  if (!isSupportedImageType(file.type)) {
    errorMessage.textContent = "Unsupported file type. Please pick a JPEG or PNG photo.";
    errorPanel.hidden = false;
    return;
  }
  errorPanel.hidden = true;
  void acceptImage(file);
});

captureButton.addEventListener("click", async () => {
  store.startCapture();
  try {
    cameraStream = await navigator.mediaDevices.getUserMedia({ video: true });
    video.srcObject = cameraStream;
    await video.play();
  } catch {
    stopCamera();
    errorMessage.textContent =
      "Camera access was denied or is unavailable. You can still upload a photo.";
    errorPanel.hidden = false;
    store.cancelCapture();
  }
});

snapButton.addEventListener("click", async () => {
  if (!cameraStream) return;
  const canvas = document.createElement("canvas");
  canvas.width = video.videoWidth;
  canvas.height = video.videoHeight;
  canvas.getContext("2d")?.drawImage(video, 0, 0);
  stopCamera();
  const blob = await new Promise<Blob | null>((resolve) => canvas.toBlob(resolve, "image/png"));
  if (blob) await acceptImage(blob);
  else store.cancelCapture();
});

cancelCaptureButton.addEventListener("click", () => {
  stopCamera();
  store.cancelCapture();
});

analyzeButton.addEventListener("click", () => void store.submit());
retryButton.addEventListener("click", () => void store.submit());
resetButton.addEventListener("click", () => {
  stopCamera();
  fileInput.value = "";
  store.reset();
});

saliencyToggle.addEventListener("change", () => {
  store.setSaliency(saliencyToggle.checked);
  // a visible result without an overlay needs one more round trip
  if (store.current.phase === "result") void store.submit();
});

opacitySlider.addEventListener("input", () => {
  store.setOpacity(Number(opacitySlider.value) / 100);
});

function render(state: UiState): void {
  captureSection.hidden = state.phase !== "capturing";
  analyzeButton.disabled = state.phase === "uploading" || state.previewUrl === null;
  statusLine.textContent =
    state.phase === "uploading"
      ? "Analyzing photo..."
      : state.phase === "capturing"
        ? "Camera active. Frame the lesion and take the photo."
        : "";

  preview.hidden = state.previewUrl === null;
  if (state.previewUrl) preview.src = state.previewUrl;

  errorPanel.hidden = state.phase !== "error";
  retryButton.hidden = !(state.error?.retryable ?? false);
  if (state.error) errorMessage.textContent = state.error.message;

  const response = state.response;
  if (state.phase === "result" && response) {
    resultPanel.hidden = false;
    resultPanel.innerHTML = renderResultHtml(response.predictions);
  } else {
    resultPanel.hidden = true;
  }

  const hasOverlay = state.phase === "result" && !!response?.saliency_png && state.saliencyEnabled;
  overlay.hidden = !hasOverlay;
  if (hasOverlay && response?.saliency_png) {
    overlay.src = `data:image/png;base64,${response.saliency_png}`;
    overlay.style.opacity = String(state.overlayOpacity);
  }
  opacitySlider.disabled = !hasOverlay;
}

store.subscribe(render);

void api
  .health()
  .then((health) => {
    serviceInfo.textContent = `model ${health.model_id} (${(health.weight_size_bytes / 1e6).toFixed(1)} MB)`;
  })
  .catch(() => {
    serviceInfo.textContent = "service not ready";
  });
