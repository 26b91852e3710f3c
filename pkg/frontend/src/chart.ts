// Per-clip saliency chart: an SVG line over video time with a hover tooltip
// showing the nearest clip's start timestamp and score.

export interface ChartLayout {
    width: number;
    height: number;
    duration: number;
}

export const CHART_WIDTH = 600;
export const CHART_HEIGHT = 120;

export function xForTime(t: number, layout: ChartLayout): number {
    return (t / layout.duration) * layout.width;
}

export function timeForX(x: number, layout: ChartLayout): number {
    return (x / layout.width) * layout.duration;
}

/** Index of the clip whose center is closest to the hovered x position, or
 * null when the pointer is outside the plot area. */
export function nearestClipIndex(
    x: number, y: number, saliency: [number, number][], layout: ChartLayout,
    clipLen: number,
): number | null {
    if (saliency.length === 0) return null;
    if (x < 0 || x > layout.width || y < 0 || y > layout.height) return null;
    const t = timeForX(x, layout);
    let best = 0;
    let bestDist = Infinity;
    saliency.forEach(([start], i) => {
        const mid = start + clipLen / 2;
        const dist = Math.abs(t - mid);
        if (dist < bestDist) {
            bestDist = dist;
            best = i;
        }
    });
    return best;
}

function scaleY(score: number, lo: number, hi: number, layout: ChartLayout): number {
    const span = hi - lo || 1;
    const frac = (score - lo) / span;
    return layout.height - frac * (layout.height - 10) - 5;
}

export function renderSaliencyChart(
    container: HTMLElement, saliency: [number, number][], duration: number,
    clipLen: number,
): SVGSVGElement {
    const layout: ChartLayout = { width: CHART_WIDTH, height: CHART_HEIGHT, duration };
    container.textContent = "";

    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("class", "saliency-chart");
    svg.setAttribute("width", String(layout.width));
    svg.setAttribute("height", String(layout.height));
    svg.setAttribute("viewBox", `0 0 ${layout.width} ${layout.height}`);

    const scores = saliency.map(([, s]) => s);
    const lo = Math.min(...scores);
    const hi = Math.max(...scores);
    const points = saliency
        .map(([start, score]) =>
            `${xForTime(start + clipLen / 2, layout)},${scaleY(score, lo, hi, layout)}`)
        .join(" ");
    const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("points", points);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "#2563eb");
    line.setAttribute("stroke-width", "2");
    svg.appendChild(line);

    const tooltip = document.createElement("div");
    tooltip.className = "chart-tooltip";
    tooltip.hidden = true;

    svg.addEventListener("mousemove", (ev: MouseEvent) => {
        const rect = svg.getBoundingClientRect();
        const x = ev.clientX - rect.left;
        const y = ev.clientY - rect.top;
        const idx = nearestClipIndex(x, y, saliency, layout, clipLen);
        if (idx === null) {
            tooltip.hidden = true;
            return;
        }
        const [start, score] = saliency[idx];
        tooltip.textContent = `${start.toFixed(1)}s – score ${score.toFixed(3)}`;
        tooltip.style.left = `${x}px`;
        tooltip.hidden = false;
    });
    svg.addEventListener("mouseleave", () => {
        tooltip.hidden = true;
    });

    container.appendChild(svg);
    container.appendChild(tooltip);
    return svg;
}
