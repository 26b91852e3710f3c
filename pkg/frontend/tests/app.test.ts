// Interaction tests for the full demo flow, driven against a mocked backend
// that speaks the exact wire format of the demo server.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { App, createApp } from "../src/app.js";

const MODELS = [
    { id: "baseline", feature_name: "trivial" },
    { id: "variant", feature_name: "trivial" },
];

const PREDICTION = {
    moments: [[25.0, 75.0, 0.9], [10.0, 20.0, 0.5], [80.0, 90.0, 0.2]],
    saliency: Array.from({ length: 50 }, (_, i) => [i * 2, Math.sin(i / 5)]),
};

function jsonResponse(body: unknown, status = 200) {
    return { ok: status < 400, status, json: async () => body };
}

interface FakeServer {
    calls: { url: string; method: string }[];
    predictResponse: () => unknown;
    predictStatus: () => number;
}

function installFakeFetch(): FakeServer {
    const server: FakeServer = {
        calls: [],
        predictResponse: () => PREDICTION,
        predictStatus: () => 200,
    };
    vi.stubGlobal("fetch", vi.fn(async (url: string, init?: RequestInit) => {
        const method = init?.method ?? "GET";
        server.calls.push({ url: String(url), method });
        if (String(url).endsWith("/api/models")) {
            return jsonResponse(MODELS);
        }
        if (String(url).endsWith("/api/videos")) {
            return jsonResponse({ video_token: "tok123", duration: 100.0, clip_len: 2.0 });
        }
        if (String(url).endsWith("/api/predict")) {
            return jsonResponse(server.predictResponse(), server.predictStatus());
        }
        return jsonResponse({ error: "not found" }, 404);
    }));
    return server;
}

async function startApp(): Promise<{ app: App; root: HTMLElement; server: FakeServer }> {
    const server = installFakeFetch();
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = await createApp(root);
    return { app, root, server };
}

function q<T extends HTMLElement>(root: HTMLElement, role: string): T {
    return root.querySelector(`[data-role="${role}"]`) as T;
}

async function registerFixtureVideo(root: HTMLElement) {
    q<HTMLInputElement>(root, "frame-dir").value = "/fixtures/frames";
    q<HTMLButtonElement>(root, "register-frames").click();
    await vi.waitFor(() => {
        if (q<HTMLButtonElement>(root, "submit").disabled === undefined) throw new Error();
    });
    await Promise.resolve();
    await Promise.resolve();
}

function typeQuery(root: HTMLElement, text: string) {
    const input = q<HTMLInputElement>(root, "query");
    input.value = text;
    input.dispatchEvent(new Event("input"));
}

beforeEach(() => {
    document.body.innerHTML = "";
});

afterEach(() => {
    vi.unstubAllGlobals();
});

describe("demo flow", () => {
    it("loads models into the picker", async () => {
        const { root, app } = await startApp();
        const options = q<HTMLSelectElement>(root, "model-select").options;
        expect(options.length).toBe(2);
        expect(app.state.selectedModel).toBe("baseline");
    });

    it("keeps the button disabled until the gating invariant holds", async () => {
        const { root, server } = await startApp();
        const button = q<HTMLButtonElement>(root, "submit");
        expect(button.disabled).toBe(true);

        await registerFixtureVideo(root);
        expect(button.disabled).toBe(true);  // query still empty

        button.click();
        await Promise.resolve();
        expect(server.calls.some(c => c.url.endsWith("/api/predict"))).toBe(false);

        typeQuery(root, "a man speaks");
        expect(button.disabled).toBe(false);
    });

    it("renders three panes in score order after submit", async () => {
        const { root, app } = await startApp();
        await registerFixtureVideo(root);
        typeQuery(root, "a man speaks");
        await app.submit();

        const panes = root.querySelectorAll(".moment-pane");
        expect(panes.length).toBe(3);
        // panes mirror the response exactly: order and values
        const ranges = [...panes].map(p => p.querySelector(".range")!.textContent);
        expect(ranges).toEqual([
            "[25.0 – 75.0]", "[10.0 – 20.0]", "[80.0 – 90.0]",
        ]);
        const scores = [...panes].map(p =>
            Number(p.querySelector(".score")!.textContent));
        expect(scores).toEqual([0.9, 0.5, 0.2]);
    });

    it("clicking the [25, 75] pane seeks the player to 25.0 s", async () => {
        const { root, app } = await startApp();
        await registerFixtureVideo(root);
        typeQuery(root, "a man speaks");
        await app.submit();

        const pane = root.querySelector(".moment-pane") as HTMLElement;
        pane.click();
        expect(Math.abs(app.player.currentTime - 25.0)).toBeLessThanOrEqual(0.1);

        pane.click();  // idempotent
        expect(Math.abs(app.player.currentTime - 25.0)).toBeLessThanOrEqual(0.1);
    });

    it("seeking a moment that starts at zero goes to zero", async () => {
        const { root, app, server } = await startApp();
        server.predictResponse = () => ({
            moments: [[0.0, 12.0, 0.8]],
            saliency: PREDICTION.saliency,
        });
        await registerFixtureVideo(root);
        typeQuery(root, "intro");
        await app.submit();
        app.player.currentTime = 50;
        (root.querySelector(".moment-pane") as HTMLElement).click();
        expect(app.player.currentTime).toBe(0);
    });

    it("shows the server error inline and keeps previous results", async () => {
        const { root, app, server } = await startApp();
        await registerFixtureVideo(root);
        typeQuery(root, "a man speaks");
        await app.submit();
        expect(root.querySelectorAll(".moment-pane").length).toBe(3);

        server.predictResponse = () => ({ error: "unknown video_token" });
        server.predictStatus = () => 404;
        await app.submit();

        const banner = q<HTMLDivElement>(root, "banner");
        expect(banner.hidden).toBe(false);
        expect(banner.textContent).toBe("unknown video_token");
        expect(root.querySelectorAll(".moment-pane").length).toBe(3);
    });

    it("allows at most one in-flight predict request", async () => {
        const { root, app, server } = await startApp();
        await registerFixtureVideo(root);
        typeQuery(root, "a man speaks");

        let release: (v: unknown) => void = () => undefined;
        const gate = new Promise(res => { release = res; });
        server.predictResponse = () => PREDICTION;
        const fetchMock = globalThis.fetch as ReturnType<typeof vi.fn>;
        fetchMock.mockImplementationOnce(async () => {
            await gate;
            return jsonResponse(PREDICTION);
        });

        const pending = app.submit();
        expect(q<HTMLButtonElement>(root, "submit").disabled).toBe(true);
        const predictCalls = () =>
            server.calls.filter(c => c.url.endsWith("/api/predict")).length;
        const before = predictCalls();
        q<HTMLButtonElement>(root, "submit").click();  // ignored while busy
        expect(predictCalls()).toBe(before);
        release(null);
        await pending;
        expect(q<HTMLButtonElement>(root, "submit").disabled).toBe(false);
    });

    it("renders the saliency chart with the video's duration extent", async () => {
        const { root, app } = await startApp();
        await registerFixtureVideo(root);
        typeQuery(root, "a man speaks");
        await app.submit();
        const svg = root.querySelector("svg.saliency-chart") as SVGSVGElement;
        expect(svg).not.toBeNull();
        const points = svg.querySelector("polyline")!.getAttribute("points")!;
        expect(points.split(" ").length).toBe(50);
        // last clip center (99 s of 100 s) sits just inside the right edge
        const lastX = Number(points.split(" ").at(-1)!.split(",")[0]);
        expect(lastX).toBeCloseTo(600 * 99 / 100, 5);
    });
});
