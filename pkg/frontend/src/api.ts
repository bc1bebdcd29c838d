/** Thin wrappers over the view server's three endpoints. */

import type { RenderRequest, SceneMeta } from "./types.js";

export const CLOUD_URL = "/api/cloud";

export async function fetchMeta(base = ""): Promise<SceneMeta> {
    const response = await fetch(`${base}/api/meta`);
    if (!response.ok) {
        throw new Error(`meta request failed: HTTP ${response.status}`);
    }
    return (await response.json()) as SceneMeta;
}

export interface RenderedFrame {
    blob: Blob;
    /** Server-side render time from the X-Render-Millis header. */
    millis: number;
}

export async function fetchRender(
    body: RenderRequest,
    signal: AbortSignal,
    base = "",
): Promise<RenderedFrame> {
    const response = await fetch(`${base}/api/render`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
        signal,
    });
    if (!response.ok) {
        let detail = `HTTP ${response.status}`;
        try {
            const payload = (await response.json()) as { field?: string; message?: string };
            if (payload.message) {
                detail = payload.field
                    ? `${payload.field}: ${payload.message}`
                    : payload.message;
            }
        } catch {
            // keep the status-only message
        }
        throw new Error(`render failed: ${detail}`);
    }
    const millis = Number(response.headers.get("X-Render-Millis") ?? "0");
    return { blob: await response.blob(), millis };
}
