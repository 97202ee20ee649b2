import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

const GOOD_BODY = {
  predictions: [
    { label: "acne", probability: 0.8 },
    { label: "eczema", probability: 0.2 },
  ],
  top_label: "acne",
  model_id: "deadbeef0123",
};

function fakeFetch(status: number, body: unknown): typeof fetch {
  return async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
}

function image(): Blob {
  return new Blob([new Uint8Array(16)], { type: "image/png" });
}

describe("ApiClient.classify", () => {
  it("parses a healthy response", async () => {
    const client = new ApiClient("", fakeFetch(200, GOOD_BODY));
    const doc = await client.classify(image());
    expect(doc.top_label).toBe("acne");
    expect(doc.predictions).toHaveLength(2);
  });

  it("requests saliency through the query flag only when asked", async () => {
    const urls: string[] = [];
    const spy: typeof fetch = async (input, init) => {
      urls.push(String(input));
      expect(init?.method).toBe("POST");
      return new Response(JSON.stringify(GOOD_BODY), { status: 200 });
    };
    const client = new ApiClient("http://svc", spy);
    await client.classify(image());
    await client.classify(image(), { saliency: true });
    expect(urls).toEqual(["http://svc/api/classify", "http://svc/api/classify?saliency=1"]);
  });

  it.each([
    [400, "bad-image", false],
    [413, "too-large", false],
    [503, "unavailable", true],
    [500, "network", true],
  ])("maps status %d to %s (retryable=%s)", async (status, kind, retryable) => {
    const client = new ApiClient("", fakeFetch(status as number, { error: "x" }));
    const err = await client.classify(image()).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.kind).toBe(kind);
    expect(err.retryable).toBe(retryable);
    expect(err.message.length).toBeGreaterThan(10); // actionable, not a bare code
  });

  it("maps transport failures to a retryable network error", async () => {
    const failing: typeof fetch = async () => {
      throw new TypeError("fetch failed");
    };
    const client = new ApiClient("", failing);
    const err = await client.classify(image()).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.kind).toBe("network");
    expect(err.retryable).toBe(true);
  });

  it("rejects probability lists that do not sum to one", async () => {
    const broken = { ...GOOD_BODY, predictions: [{ label: "acne", probability: 0.1 }] };
    const client = new ApiClient("", fakeFetch(200, broken));
    await expect(client.classify(image())).rejects.toThrow(/sum to 1/);
  });

  it("propagates aborts unchanged", async () => {
    const hanging: typeof fetch = (_input, init) =>
      new Promise((_resolve, reject) => {
        init?.signal?.addEventListener("abort", () =>
          reject(new DOMException("aborted", "AbortError")),
        );
      });
    const client = new ApiClient("", hanging);
    const controller = new AbortController();
    const pending = client.classify(image(), { signal: controller.signal });
    controller.abort();
    const err = await pending.catch((e) => e);
    expect(err).toBeInstanceOf(DOMException);
    expect(err.name).toBe("AbortError");
  });
});

describe("ApiClient.labels and health", () => {
  it("returns the label list", async () => {
    const client = new ApiClient("", fakeFetch(200, ["acne", "eczema"]));
    expect(await client.labels()).toEqual(["acne", "eczema"]);
  });

  it("maps 503 before a model is loaded", async () => {
    const client = new ApiClient("", fakeFetch(503, { error: "model not loaded" }));
    const err = await client.labels().catch((e) => e);
    expect(err.kind).toBe("unavailable");
  });

  it("parses health payloads", async () => {
    const client = new ApiClient(
      "",
      fakeFetch(200, {
        status: "ready",
        model_id: "beef",
        load_time_seconds: 0.01,
        weight_size_bytes: 123,
      }),
    );
    const health = await client.health();
    expect(health.status).toBe("ready");
  });
});
