import { describe, expect, it } from "vitest";

import {
    CHART_HEIGHT, CHART_WIDTH, ChartLayout, nearestClipIndex,
    renderSaliencyChart, xForTime,
} from "../src/chart.js";

const layout: ChartLayout = { width: CHART_WIDTH, height: CHART_HEIGHT, duration: 10 };

function saliencyFixture(): [number, number][] {
    // clip_len 2 over a 10 s video
    return [[0, 0.1], [2, 0.4], [4, 0.2], [6, 0.9], [8, 0.3]];
}

describe("chart coordinates", () => {
    it("x extent equals the video duration", () => {
        expect(xForTime(0, layout)).toBe(0);
        expect(xForTime(10, layout)).toBe(CHART_WIDTH);
    });

    it("hover over clip 3 resolves to timestamp 6.0", () => {
        // clip 3 covers [6, 8); its center 7 s maps to x = 7/10 * width
        const x = (7 / 10) * CHART_WIDTH;
        const idx = nearestClipIndex(x, 20, saliencyFixture(), layout, 2);
        expect(idx).toBe(3);
        expect(saliencyFixture()[idx!][0]).toBe(6);
    });

    it("returns null outside the plot area", () => {
        const sal = saliencyFixture();
        expect(nearestClipIndex(-5, 20, sal, layout, 2)).toBeNull();
        expect(nearestClipIndex(CHART_WIDTH + 1, 20, sal, layout, 2)).toBeNull();
        expect(nearestClipIndex(100, CHART_HEIGHT + 5, sal, layout, 2)).toBeNull();
        expect(nearestClipIndex(100, -1, sal, layout, 2)).toBeNull();
    });
});

describe("rendered chart", () => {
    it("shows the nearest clip's timestamp and score on hover", () => {
        const box = document.createElement("div");
        document.body.appendChild(box);
        const svg = renderSaliencyChart(box, saliencyFixture(), 10, 2);
        const tooltip = box.querySelector(".chart-tooltip") as HTMLDivElement;
        expect(tooltip.hidden).toBe(true);

        // jsdom rects are all zeros, so clientX maps straight to chart x
        svg.dispatchEvent(new MouseEvent("mousemove", {
            clientX: (7 / 10) * CHART_WIDTH, clientY: 30,
        }));
        expect(tooltip.hidden).toBe(false);
        expect(tooltip.textContent).toContain("6.0s");
        expect(tooltip.textContent).toContain("0.900");
    });

    it("hides the tooltip outside the plot and on leave", () => {
        const box = document.createElement("div");
        document.body.appendChild(box);
        const svg = renderSaliencyChart(box, saliencyFixture(), 10, 2);
        const tooltip = box.querySelector(".chart-tooltip") as HTMLDivElement;

        svg.dispatchEvent(new MouseEvent("mousemove", { clientX: 100, clientY: 30 }));
        expect(tooltip.hidden).toBe(false);
        svg.dispatchEvent(new MouseEvent("mousemove", {
            clientX: CHART_WIDTH + 50, clientY: 30,
        }));
        expect(tooltip.hidden).toBe(true);

        svg.dispatchEvent(new MouseEvent("mousemove", { clientX: 100, clientY: 30 }));
        svg.dispatchEvent(new MouseEvent("mouseleave"));
        expect(tooltip.hidden).toBe(true);
    });
});
