import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, editSession, generateSession, getHealth } from "../src/api.js";

afterEach(() => vi.unstubAllGlobals());

describe("api client", () => {
  it("posts generation parameters and returns the session", async () => {
    const fetchMock = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      expect(String(url)).toBe("/api/generate");
      expect(JSON.parse(String(init?.body))).toEqual({ music: "click:90", steps: 25, seed: 4 });
      return new Response(JSON.stringify({ id: "abc" }), { status: 200 });
    });
    vi.stubGlobal("fetch", fetchMock);
    const session = await generateSession("click:90", 25, 4);
    expect(session.id).toBe("abc");
  });

  it("surfaces structured errors with status and name", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        new Response(JSON.stringify({ error: "IndexOutOfRange", detail: "unit 99" }), {
          status: 400,
        }),
      ),
    );
    try {
      await editSession("s1", [{ kind: "delete", target: { level: null, range: [99, 100] } }]);
      expect.unreachable("should have thrown");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(400);
      expect((err as ApiError).errorName).toBe("IndexOutOfRange");
    }
  });

  it("parses health", async () => {
    vi.stubGlobal(
      "fetch",
      vi.fn(async () =>
        new Response(JSON.stringify({ v: 1, status: "ok", models_loaded: true, model_versions: {} })),
      ),
    );
    const health = await getHealth();
    expect(health.models_loaded).toBe(true);
  });
});
