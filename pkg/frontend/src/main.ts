/** DOM wiring: canvas, fly controls, quality ladder, bookmarks. */

import { CLOUD_URL, fetchMeta, fetchRender } from "./api.js";
import {
    applyDrag,
    applyMove,
    clampCamera,
    initialCamera,
    renderRequest,
} from "./camera.js";
import { BookmarkStore } from "./bookmarks.js";
import { RenderLadder } from "./ladder.js";
import type { CameraState, SceneMeta } from "./types.js";

const RENDER_SIZE = 512;
const SAMPLES = 48;
const DRAG_RADIANS_PER_PX = 0.004;
const FLY_SPEED = 1.6; // meters per second
const THUMB_SIZE = 96;

function element<T extends HTMLElement>(id: string): T {
    const el = document.getElementById(id);
    if (!el) {
        throw new Error(`missing #${id}`);
    }
    return el as T;
}

async function boot(): Promise<void> {
    const canvas = element<HTMLCanvasElement>("view");
    const ctx = canvas.getContext("2d");
    if (!ctx) {
        throw new Error("2d canvas unsupported");
    }
    const banner = element<HTMLDivElement>("banner");
    const latency = element<HTMLSpanElement>("latency");
    const quality = element<HTMLSpanElement>("quality");
    const bookmarkList = element<HTMLUListElement>("bookmarks");
    const store = new BookmarkStore();

    let meta: SceneMeta;
    try {
        meta = await fetchMeta();
    } catch (err) {
        banner.textContent = err instanceof Error ? err.message : String(err);
        banner.hidden = false;
        return;
    }

    let camera: CameraState = initialCamera(meta);

    let bannerTimer = 0;
    const showBanner = (message: string) => {
        banner.textContent = message;
        banner.hidden = false;
        window.clearTimeout(bannerTimer);
        bannerTimer = window.setTimeout(() => {
            banner.hidden = true;
        }, 4000);
    };

    const ladder = new RenderLadder(
        async (_revision, rung, signal) => {
            const body = renderRequest(camera, rung, RENDER_SIZE, SAMPLES);
            const frame = await fetchRender(body, signal);
            const image = await createImageBitmap(frame.blob);
            return { image, millis: frame.millis };
        },
        {
            onDisplay: (shown) => {
                const image = shown.image as ImageBitmap;
                canvas.width = camera.panoramic ? 2 * RENDER_SIZE : RENDER_SIZE;
                canvas.height = RENDER_SIZE;
                ctx.imageSmoothingEnabled = shown.rung !== 1;
                ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
                latency.textContent = `${shown.millis.toFixed(0)} ms`;
                quality.textContent = `1/${shown.rung}`;
            },
            onError: showBanner,
        },
    );

    // pointer drag turns the view
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    canvas.addEventListener("pointerdown", (ev) => {
        dragging = true;
        lastX = ev.clientX;
        lastY = ev.clientY;
        canvas.setPointerCapture(ev.pointerId);
    });
    canvas.addEventListener("pointermove", (ev) => {
        if (!dragging) {
            return;
        }
        const dx = (ev.clientX - lastX) * DRAG_RADIANS_PER_PX;
        const dy = (lastY - ev.clientY) * DRAG_RADIANS_PER_PX;
        lastX = ev.clientX;
        lastY = ev.clientY;
        camera = applyDrag(camera, meta.bounds, dx, dy);
        ladder.cameraChanged();
    });
    const endDrag = () => {
        dragging = false;
    };
    canvas.addEventListener("pointerup", endDrag);
    canvas.addEventListener("pointercancel", endDrag);

    // WASD + QE fly keys, integrated per animation frame
    const held = new Set<string>();
    window.addEventListener("keydown", (ev) => {
        const key = ev.key.toLowerCase();
        if ("wasdqe".includes(key) && key.length === 1) {
            held.add(key);
            ev.preventDefault();
        } else if (key === "p") {
            camera = { ...camera, panoramic: !camera.panoramic };
            ladder.cameraChanged();
        }
    });
    window.addEventListener("keyup", (ev) => {
        held.delete(ev.key.toLowerCase());
    });

    let lastTick = performance.now();
    const tick = (now: number) => {
        const dt = Math.min(0.1, (now - lastTick) / 1000);
        lastTick = now;
        if (held.size > 0) {
            const input = {
                forward: (held.has("w") ? 1 : 0) - (held.has("s") ? 1 : 0),
                right: (held.has("d") ? 1 : 0) - (held.has("a") ? 1 : 0),
                up: (held.has("e") ? 1 : 0) - (held.has("q") ? 1 : 0),
            };
            if (input.forward || input.right || input.up) {
                camera = applyMove(camera, meta.bounds, input, dt, FLY_SPEED);
                ladder.cameraChanged();
            }
        }
        requestAnimationFrame(tick);
    };
    requestAnimationFrame(tick);

    // wheel zooms the perspective field of view
    canvas.addEventListener(
        "wheel",
        (ev) => {
            if (camera.panoramic) {
                return;
            }
            ev.preventDefault();
            const fov = Math.min(2.8, Math.max(0.3, camera.fov * (ev.deltaY > 0 ? 1.1 : 0.9)));
            camera = { ...camera, fov };
            ladder.cameraChanged();
        },
        { passive: false },
    );

    const refreshBookmarks = () => {
        bookmarkList.textContent = "";
        for (const bookmark of store.list()) {
            const item = document.createElement("li");
            const thumb = document.createElement("img");
            thumb.src = bookmark.thumbnail;
            thumb.alt = "";
            const label = document.createElement("span");
            label.textContent = bookmark.label;
            item.append(thumb, label);
            item.title = "jump to this viewpoint";
            item.addEventListener("click", () => {
                camera = clampCamera(bookmark.camera, meta.bounds);
                ladder.cameraChanged();
            });
            bookmarkList.append(item);
        }
    };

    element<HTMLButtonElement>("add-bookmark").addEventListener("click", () => {
        const label = window.prompt("Bookmark label");
        if (label === null) {
            return;
        }
        const thumb = document.createElement("canvas");
        thumb.width = THUMB_SIZE;
        thumb.height = THUMB_SIZE;
        thumb.getContext("2d")?.drawImage(canvas, 0, 0, THUMB_SIZE, THUMB_SIZE);
        try {
            store.add(label, camera, thumb.toDataURL("image/png"));
        } catch (err) {
            showBanner(err instanceof Error ? err.message : String(err));
            return;
        }
        refreshBookmarks();
    });

    const cloudLink = element<HTMLAnchorElement>("cloud-link");
    if (meta.overlays.includes("cloud")) {
        cloudLink.href = CLOUD_URL;
    } else {
        cloudLink.hidden = true;
    }
    element<HTMLSpanElement>("checkpoint").textContent = meta.checkpoint_id;

    ladder.cameraChanged();
}

boot().catch((err) => {
    console.error(err);
});

export { boot };
