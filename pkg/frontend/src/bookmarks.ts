/** Session-local viewpoint bookmarks. */

import type { Bookmark, CameraState } from "./types.js";

export class BookmarkStore {
    private items: Bookmark[] = [];

    list(): readonly Bookmark[] {
        return this.items;
    }

    /**
     * Add a bookmark.  The label must be non-empty after trimming and
     * unique within the session.
     *
     * @throws Error when the label is empty or already taken.
     */
    add(label: string, camera: CameraState, thumbnail: string): Bookmark {
        const trimmed = label.trim();
        if (!trimmed) {
            throw new Error("bookmark label must not be empty");
        }
        if (this.items.some((b) => b.label === trimmed)) {
            throw new Error(`bookmark label "${trimmed}" already exists`);
        }
        const bookmark: Bookmark = {
            label: trimmed,
            camera: { ...camera, position: { ...camera.position } },
            thumbnail,
        };
        this.items.push(bookmark);
        return bookmark;
    }

    remove(label: string): boolean {
        const before = this.items.length;
        this.items = this.items.filter((b) => b.label !== label);
        return this.items.length < before;
    }

    get(label: string): Bookmark | undefined {
        return this.items.find((b) => b.label === label);
    }
}
