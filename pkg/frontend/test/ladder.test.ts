/**
 * Event-sequence tests for the render ladder, driven against a stub
 * transport with manually resolved responses and a fake timer, so no
 * server or rendering is involved.
 */

import { describe, expect, it } from "vitest";

import { RenderLadder, type Displayed, type RenderResult } from "../src/ladder.js";
import type { Rung } from "../src/types.js";

interface Issued {
    revision: number;
    rung: Rung;
    signal: AbortSignal;
    resolve: (r: RenderResult) => void;
    reject: (e: unknown) => void;
}

class Stub {
    issued: Issued[] = [];
    displays: Displayed[] = [];
    errors: string[] = [];
    timers: { fn: () => void; ms: number; id: number }[] = [];
    private nextTimer = 1;
    ladder: RenderLadder;

    constructor(settleMs = 200) {
        this.ladder = new RenderLadder(
            (revision, rung, signal) =>
                new Promise<RenderResult>((resolve, reject) => {
                    this.issued.push({ revision, rung, signal, resolve, reject });
                    signal.addEventListener("abort", () => {
                        const error = new Error("aborted");
                        error.name = "AbortError";
                        reject(error);
                    });
                }),
            {
                settleMs,
                setTimer: (fn, ms) => {
                    const id = this.nextTimer++;
                    this.timers.push({ fn, ms, id });
                    return id;
                },
                clearTimer: (handle) => {
                    this.timers = this.timers.filter((t) => t.id !== handle);
                },
                onDisplay: (shown) => this.displays.push(shown),
                onError: (message) => this.errors.push(message),
            },
        );
    }

    /** Fire the pending settle timer, as if the quiet period elapsed. */
    settle(): void {
        const timer = this.timers.shift();
        if (!timer) {
            throw new Error("no timer armed");
        }
        timer.fn();
    }

    async finish(index: number, tag = "img"): Promise<void> {
        const flight = this.issued[index];
        if (!flight) {
            throw new Error(`no request ${index}`);
        }
        flight.resolve({ image: `${tag}-r${flight.revision}-q${flight.rung}`, millis: 5 });
        await Promise.resolve();
        await Promise.resolve();
    }

    shownImage(): unknown {
        return this.displays[this.displays.length - 1]?.image;
    }

    requests(): [number, Rung][] {
        return this.issued.map((i) => [i.revision, i.rung]);
    }
}

describe("camera motion", () => {
    it("issues a rung-4 request per settled change and escalates 4 -> 2 -> 1", async () => {
        const s = new Stub();
        s.ladder.cameraChanged();
        expect(s.requests()).toEqual([[1, 4]]);

        await s.finish(0);
        expect(s.shownImage()).toBe("img-r1-q4");

        s.settle();
        expect(s.requests()).toEqual([[1, 4], [1, 2]]);
        await s.finish(1);
        expect(s.shownImage()).toBe("img-r1-q2");

        expect(s.requests()).toEqual([[1, 4], [1, 2], [1, 1]]);
        await s.finish(2);
        expect(s.shownImage()).toBe("img-r1-q1");

        // ladder complete: nothing else goes out
        expect(s.issued).toHaveLength(3);
        expect(s.timers).toHaveLength(0);
    });

    it("never escalates during continuous motion", async () => {
        const s = new Stub();
        for (let i = 0; i < 5; i++) {
            s.ladder.cameraChanged();
            if (i % 2 === 0 && s.issued.length > 0) {
                await s.finish(s.issued.length - 1);
            }
        }
        expect(s.issued.every((r) => r.rung === 4)).toBe(true);
    });

    it("aborts in-flight escalation rungs when the camera moves", async () => {
        const s = new Stub();
        s.ladder.cameraChanged();
        await s.finish(0);
        s.settle();
        const escalation = s.issued[1]!;
        expect(escalation.rung).toBe(2);
        expect(escalation.signal.aborted).toBe(false);

        s.ladder.cameraChanged();
        expect(escalation.signal.aborted).toBe(true);
        await Promise.resolve();
        // the aborted rung-2 never displays and never reports an error
        expect(s.errors).toEqual([]);
        expect(s.shownImage()).toBe("img-r1-q4");
    });
});

describe("one in flight per rung", () => {
    it("coalesces base-rung requests and chases the final revision", async () => {
        const s = new Stub();
        s.ladder.cameraChanged(); // revision 1, rung 4 in flight
        s.ladder.cameraChanged(); // revision 2 while busy
        s.ladder.cameraChanged(); // revision 3 while busy
        expect(s.requests()).toEqual([[1, 4]]);

        await s.finish(0);
        // exactly one follow-up, for the latest revision
        expect(s.requests()).toEqual([[1, 4], [3, 4]]);
        await s.finish(1);
        expect(s.shownImage()).toBe("img-r3-q4");
        expect(s.issued).toHaveLength(2);
    });

    it("keeps at most one request per rung at all times", async () => {
        const s = new Stub();
        s.ladder.cameraChanged();
        s.settle();
        s.ladder.cameraChanged();
        s.settle();
        const counts = new Map<Rung, number>();
        for (const flight of s.issued) {
            if (!flight.signal.aborted) {
                counts.set(flight.rung, (counts.get(flight.rung) ?? 0) + 1);
            }
        }
        for (const [, count] of counts) {
            expect(count).toBeLessThanOrEqual(1);
        }
    });
});

describe("display ordering", () => {
    it("discards an out-of-order coarse response for the same revision", async () => {
        const s = new Stub(0);
        s.ladder.cameraChanged();
        s.settle();
        // rung 4 and rung 2 both in flight for revision 1
        expect(s.requests()).toEqual([[1, 4], [1, 2]]);

        await s.finish(1); // fine frame lands first
        expect(s.shownImage()).toBe("img-r1-q2");

        await s.finish(0); // the older, coarser frame arrives late
        expect(s.shownImage()).toBe("img-r1-q2");
    });

    it("discards responses for older camera revisions", async () => {
        const s = new Stub();
        s.ladder.cameraChanged();
        await s.finish(0);
        s.settle();
        s.ladder.cameraChanged(); // aborts rung 2, issues a fresh rung 4
        const fresh = s.issued.findIndex((f) => f.revision === 2 && f.rung === 4);
        await s.finish(fresh);
        expect(s.shownImage()).toBe("img-r2-q4");

        // display revision never decreases across the whole run
        const revisions = s.displays.map((d) => d.revision);
        expect([...revisions].sort((a, b) => a - b)).toEqual(revisions);
    });

    it("a late rung-4 for a newer revision replaces a fine frame of an older one", async () => {
        const s = new Stub();
        s.ladder.cameraChanged();
        s.settle();
        await s.finish(1); // revision 1 rung 2 displayed
        expect(s.shownImage()).toBe("img-r1-q2");

        s.ladder.cameraChanged(); // revision 2 coalesces onto the in-flight base
        await s.finish(0); // stale revision 1 rung 4 lands: discarded, chase goes out
        expect(s.shownImage()).toBe("img-r1-q2");
        const fresh = s.issued.findIndex((f) => f.revision === 2);
        expect(fresh).toBeGreaterThan(-1);
        await s.finish(fresh);
        expect(s.shownImage()).toBe("img-r2-q4");
    });
});

describe("errors", () => {
    it("surfaces transport failures without dropping the shown frame", async () => {
        const s = new Stub();
        s.ladder.cameraChanged();
        await s.finish(0);
        s.settle();
        s.issued[1]!.reject(new Error("HTTP 500"));
        await Promise.resolve();
        await Promise.resolve();
        expect(s.errors).toEqual(["HTTP 500"]);
        expect(s.shownImage()).toBe("img-r1-q4");
    });
});
