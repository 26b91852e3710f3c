// DOM wiring for the demo: model picker, video upload, query box, result
// panes that seek the player, and the saliency chart.

import {
    ApiError, fetchModels, predictMoments, registerFrameDir, registerVideoFile,
} from "./api.js";
import { renderSaliencyChart } from "./chart.js";
import { canSubmit, initialState, UiState } from "./state.js";

const TEMPLATE = `
<div class="banner error-banner" data-role="banner" hidden></div>
<section class="pane model-pane">
  <h2>Model</h2>
  <select data-role="model-select"></select>
</section>
<section class="pane video-pane">
  <h2>Video &amp; query</h2>
  <input type="file" data-role="video-file" accept="video/*">
  <div class="frame-dir-row">
    <input type="text" data-role="frame-dir" placeholder="server-side frame directory">
    <button type="button" data-role="register-frames">Use frames</button>
  </div>
  <video data-role="player" controls width="480"></video>
  <input type="text" data-role="query" placeholder="Describe the moment...">
  <button type="button" data-role="submit" disabled>
    Retrieve Moment &amp; Highlight Detection
  </button>
</section>
<section class="pane results-pane">
  <h2>Retrieved moments</h2>
  <ol class="moments" data-role="moments"></ol>
  <h2>Saliency</h2>
  <div class="chart" data-role="chart"></div>
</section>
`;

export interface App {
    state: UiState;
    root: HTMLElement;
    player: HTMLVideoElement;
    submit(): Promise<void>;
}

function el<T extends HTMLElement>(root: HTMLElement, role: string): T {
    const found = root.querySelector(`[data-role="${role}"]`);
    if (!found) throw new Error(`missing element: ${role}`);
    return found as T;
}

export async function createApp(root: HTMLElement, base = ""): Promise<App> {
    root.innerHTML = TEMPLATE;
    const state = initialState();
    const banner = el<HTMLDivElement>(root, "banner");
    const modelSelect = el<HTMLSelectElement>(root, "model-select");
    const fileInput = el<HTMLInputElement>(root, "video-file");
    const frameDirInput = el<HTMLInputElement>(root, "frame-dir");
    const frameDirButton = el<HTMLButtonElement>(root, "register-frames");
    const player = el<HTMLVideoElement>(root, "player");
    const queryInput = el<HTMLInputElement>(root, "query");
    const submitButton = el<HTMLButtonElement>(root, "submit");
    const momentsList = el<HTMLOListElement>(root, "moments");
    const chartBox = el<HTMLDivElement>(root, "chart");

    function renderBanner() {
        banner.hidden = state.error === null;
        banner.textContent = state.error ?? "";
    }

    function renderResults() {
        // panes mirror the API response exactly: same order, same values
        momentsList.textContent = "";
        if (!state.result) return;
        state.result.moments.forEach(([start, end, score], i) => {
            const item = document.createElement("li");
            item.className = "moment-pane";
            item.dataset.start = String(start);
            item.innerHTML =
                `<span class="rank">#${i + 1}</span>` +
                `<span class="range">[${start.toFixed(1)} – ${end.toFixed(1)}]</span>` +
                `<span class="score">${score.toFixed(3)}</span>`;
            item.addEventListener("click", () => {
                player.currentTime = start;
            });
            momentsList.appendChild(item);
        });
        renderSaliencyChart(chartBox, state.result.saliency, state.duration,
            state.clipLen);
    }

    function refreshControls() {
        submitButton.disabled = !canSubmit(state);
    }

    async function submit(): Promise<void> {
        if (!canSubmit(state)) return;
        state.busy = true;
        refreshControls();
        try {
            state.result = await predictMoments({
                video_token: state.videoToken!,
                model_id: state.selectedModel!,
                query: state.query,
            }, base);
            state.error = null;
        } catch (err) {
            state.error = err instanceof ApiError
                ? err.message
                : `request failed: ${String(err)}`;
        } finally {
            state.busy = false;
        }
        renderBanner();
        renderResults();
        refreshControls();
    }

    async function registerVideo(kind: "file" | "frames") {
        try {
            if (kind === "file") {
                const file = fileInput.files?.[0];
                if (!file) return;
                const reg = await registerVideoFile(file, base);
                state.videoToken = reg.video_token;
                state.duration = reg.duration;
                state.clipLen = reg.clip_len;
                if (typeof URL.createObjectURL === "function") {
                    state.videoUrl = URL.createObjectURL(file);
                    player.src = state.videoUrl;
                }
            } else {
                const dir = frameDirInput.value.trim();
                if (!dir) return;
                const reg = await registerFrameDir(dir, base);
                state.videoToken = reg.video_token;
                state.duration = reg.duration;
                state.clipLen = reg.clip_len;
            }
            state.error = null;
        } catch (err) {
            state.error = err instanceof ApiError
                ? err.message
                : `upload failed: ${String(err)}`;
        }
        renderBanner();
        refreshControls();
    }

    modelSelect.addEventListener("change", () => {
        state.selectedModel = modelSelect.value || null;
        refreshControls();
    });
    fileInput.addEventListener("change", () => void registerVideo("file"));
    frameDirButton.addEventListener("click", () => void registerVideo("frames"));
    queryInput.addEventListener("input", () => {
        state.query = queryInput.value;
        refreshControls();
    });
    submitButton.addEventListener("click", () => void submit());

    state.models = await fetchModels(base);
    for (const model of state.models) {
        const option = document.createElement("option");
        option.value = model.id;
        option.textContent = `${model.id} (${model.feature_name})`;
        modelSelect.appendChild(option);
    }
    if (state.models.length > 0) {
        state.selectedModel = state.models[0].id;
        modelSelect.value = state.selectedModel;
    }
    refreshControls();

    return { state, root, player, submit };
}
