// Typed client for the demo backend's three endpoints.

export interface ModelInfo {
    id: string;
    feature_name: string;
}

export interface VideoRegistration {
    video_token: string;
    duration: number;
    clip_len: number;
}

export interface PredictRequest {
    video_token: string;
    model_id: string;
    query: string;
}

export interface PredictResponse {
    moments: [number, number, number][];   // [start, end, score]
    saliency: [number, number][];          // [clip_start, score]
}

export class ApiError extends Error {
    constructor(message: string, readonly status: number) {
        super(message);
        this.name = "ApiError";
    }
}

async function parseResponse<T>(resp: { ok: boolean; status: number; json(): Promise<unknown> }): Promise<T> {
    let body: unknown = null;
    try {
        body = await resp.json();
    } catch {
        body = null;
    }
    if (!resp.ok) {
        const message = body && typeof (body as { error?: unknown }).error === "string"
            ? (body as { error: string }).error
            : `request failed with status ${resp.status}`;
        throw new ApiError(message, resp.status);
    }
    return body as T;
}

export async function fetchModels(base = ""): Promise<ModelInfo[]> {
    return parseResponse(await fetch(`${base}/api/models`));
}

export async function registerVideoFile(file: File, base = ""): Promise<VideoRegistration> {
    const form = new FormData();
    form.append("file", file, file.name);
    return parseResponse(await fetch(`${base}/api/videos`, { method: "POST", body: form }));
}

export async function registerFrameDir(frameDir: string, base = ""): Promise<VideoRegistration> {
    const form = new FormData();
    form.append("frame_dir", frameDir);
    return parseResponse(await fetch(`${base}/api/videos`, { method: "POST", body: form }));
}

export async function predictMoments(req: PredictRequest, base = ""): Promise<PredictResponse> {
    return parseResponse(await fetch(`${base}/api/predict`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(req),
    }));
}
