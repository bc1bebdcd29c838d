/** Bookmark store invariants: labels non-empty and unique. */

import { describe, expect, it } from "vitest";

import { BookmarkStore } from "../src/bookmarks.js";
import type { CameraState } from "../src/types.js";

const CAMERA: CameraState = {
    position: { x: 1, y: 2, z: 3 },
    yaw: 0.5,
    pitch: -0.25,
    fov: 1.2,
    panoramic: false,
};

describe("bookmark store", () => {
    it("stores an independent camera snapshot", () => {
        const store = new BookmarkStore();
        const mutable = { ...CAMERA, position: { ...CAMERA.position } };
        store.add("desk", mutable, "data:,");
        mutable.position.x = 99;
        expect(store.get("desk")?.camera.position.x).toBe(1);
    });

    it("rejects empty and duplicate labels", () => {
        const store = new BookmarkStore();
        expect(() => store.add("", CAMERA, "data:,")).toThrow(/empty/);
        expect(() => store.add("   ", CAMERA, "data:,")).toThrow(/empty/);
        store.add("spot", CAMERA, "data:,");
        expect(() => store.add("spot", CAMERA, "data:,")).toThrow(/already/);
        expect(() => store.add("  spot ", CAMERA, "data:,")).toThrow(/already/);
    });

    it("removes by label", () => {
        const store = new BookmarkStore();
        store.add("a", CAMERA, "data:,");
        store.add("b", CAMERA, "data:,");
        expect(store.remove("a")).toBe(true);
        expect(store.remove("a")).toBe(false);
        expect(store.list().map((b) => b.label)).toEqual(["b"]);
    });
});
