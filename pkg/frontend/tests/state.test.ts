import { describe, expect, it } from "vitest";

import { canSubmit, initialState } from "../src/state.js";

function readyState() {
    const s = initialState();
    s.selectedModel = "baseline";
    s.videoToken = "tok";
    s.query = "a man speaks";
    return s;
}

describe("submit gating invariant", () => {
    it("enables only when model, video and query are present and not busy", () => {
        expect(canSubmit(readyState())).toBe(true);
    });

    it("disables without a selected model", () => {
        const s = readyState();
        s.selectedModel = null;
        expect(canSubmit(s)).toBe(false);
    });

    it("disables without a registered video", () => {
        const s = readyState();
        s.videoToken = null;
        expect(canSubmit(s)).toBe(false);
    });

    it("disables on empty or whitespace query", () => {
        const s = readyState();
        s.query = "";
        expect(canSubmit(s)).toBe(false);
        s.query = "   ";
        expect(canSubmit(s)).toBe(false);
    });

    it("disables while a request is in flight", () => {
        const s = readyState();
        s.busy = true;
        expect(canSubmit(s)).toBe(false);
    });
});
