// Client-side downscale so uploads stay well under the service's size cap.

export const MAX_LONG_EDGE = 1024;

export function targetDimensions(
  width: number,
  height: number,
  maxLongEdge = MAX_LONG_EDGE,
): { width: number; height: number } {
  const longEdge = Math.max(width, height);
  if (longEdge <= maxLongEdge) return { width, height };
  const factor = maxLongEdge / longEdge;
  return {
    width: Math.max(1, Math.round(width * factor)),
    height: Math.max(1, Math.round(height * factor)),
  };
}

export function isSupportedImageType(mimeType: string): boolean {
  return ["image/jpeg", "image/png", "image/webp"].includes(mimeType.toLowerCase());
}

// Browser-only path: decode, draw onto a canvas at the clamped size, and
// re-encode as PNG. Anything the browser cannot decode rejects.
export async function downscaleForUpload(file: Blob): Promise<Blob> {
  const bitmap = await createImageBitmap(file);
  try {
    const { width, height } = targetDimensions(bitmap.width, bitmap.height);
    if (width === bitmap.width && height === bitmap.height && file.type === "image/png") {
      return file;
    }
    const canvas = document.createElement("canvas");
    canvas.width = width;
    canvas.height = height;
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    ctx.drawImage(bitmap, 0, 0, width, height);
    return await new Promise<Blob>((resolve, reject) => {
      canvas.toBlob(
        (blob) => (blob ? resolve(blob) : reject(new Error("canvas encoding failed"))),
        "image/png",
      );
    });
  } finally {
    bitmap.close();
  }
}
