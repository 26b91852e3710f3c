import type { ModelInfo, PredictResponse } from "./api.js";

export interface UiState {
    models: ModelInfo[];
    selectedModel: string | null;
    videoToken: string | null;
    duration: number;
    clipLen: number;
    videoUrl: string | null;
    query: string;
    busy: boolean;
    result: PredictResponse | null;
    error: string | null;
}

export function initialState(): UiState {
    return {
        models: [],
        selectedModel: null,
        videoToken: null,
        duration: 0,
        clipLen: 2,
        videoUrl: null,
        query: "",
        busy: false,
        result: null,
        error: null,
    };
}

// The retrieve button is enabled iff a model is selected, a video is
// registered, the query is non-empty, and no request is in flight.
export function canSubmit(state: UiState): boolean {
    return state.selectedModel !== null
        && state.videoToken !== null
        && state.query.trim().length > 0
        && !state.busy;
}
