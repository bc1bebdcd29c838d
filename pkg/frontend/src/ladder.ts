/**
 * Progressive-quality render scheduling.
 *
 * Every camera change bumps a revision counter and wants a cheap
 * rung-4 frame as soon as possible; once the camera settles, quality
 * escalates through rung 2 to rung 1.  Escalation requests are
 * cancelled the moment the camera moves again, at most one request is
 * in flight per rung, and a response for an older revision than the
 * one on screen is discarded, so the display never travels back in
 * time.
 *
 * The class is free of DOM and network specifics: the caller supplies
 * the transport and a timer, which is what makes the event sequences
 * testable against a stub server.
 */

import { RUNGS, type Rung } from "./types.js";

export interface RenderResult {
    /** Decoded or raw image payload; the ladder never inspects it. */
    image: unknown;
    /** Server-reported render time, milliseconds. */
    millis: number;
}

export type Transport = (
    revision: number,
    rung: Rung,
    signal: AbortSignal,
) => Promise<RenderResult>;

export interface Displayed {
    image: unknown;
    revision: number;
    rung: Rung;
    millis: number;
}

export interface LadderOptions {
    /** Quiet period after the last camera change before quality escalates, ms. */
    settleMs?: number;
    /** Timer installer, injectable for tests; defaults to setTimeout. */
    setTimer?: (fn: () => void, ms: number) => unknown;
    clearTimer?: (handle: unknown) => void;
    onDisplay?: (shown: Displayed) => void;
    onError?: (message: string) => void;
}

interface Inflight {
    revision: number;
    controller: AbortController;
}

export class RenderLadder {
    private revision = 0;
    private shown: Displayed | null = null;
    private inflight = new Map<Rung, Inflight>();
    private pendingBase = false;
    private settleHandle: unknown = null;
    private readonly settleMs: number;
    private readonly setTimer: (fn: () => void, ms: number) => unknown;
    private readonly clearTimer: (handle: unknown) => void;
    private readonly onDisplay: (shown: Displayed) => void;
    private readonly onError: (message: string) => void;

    constructor(private transport: Transport, options: LadderOptions = {}) {
        this.settleMs = options.settleMs ?? 200;
        this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
        this.clearTimer = options.clearTimer ?? ((h) => clearTimeout(h as number));
        this.onDisplay = options.onDisplay ?? (() => {});
        this.onError = options.onError ?? (() => {});
    }

    /** Revision of the latest camera state. */
    get currentRevision(): number {
        return this.revision;
    }

    /** What the screen is currently showing, if anything. */
    get displayed(): Displayed | null {
        return this.shown;
    }

    /** Rungs with a request in flight, coarsest first. */
    get inflightRungs(): Rung[] {
        return RUNGS.filter((r) => this.inflight.has(r));
    }

    /**
     * The camera moved: invalidate escalation work and request a fresh
     * coarse frame.  Safe to call at input-event rate.
     */
    cameraChanged(): void {
        this.revision += 1;
        for (const rung of [2, 1] as Rung[]) {
            const flight = this.inflight.get(rung);
            if (flight) {
                flight.controller.abort();
                this.inflight.delete(rung);
            }
        }
        this.requestRung(4);
        this.armSettleTimer();
    }

    /** Abort everything and stop timers (page teardown). */
    dispose(): void {
        if (this.settleHandle !== null) {
            this.clearTimer(this.settleHandle);
            this.settleHandle = null;
        }
        for (const flight of this.inflight.values()) {
            flight.controller.abort();
        }
        this.inflight.clear();
    }

    private armSettleTimer(): void {
        if (this.settleHandle !== null) {
            this.clearTimer(this.settleHandle);
        }
        this.settleHandle = this.setTimer(() => {
            this.settleHandle = null;
            this.requestRung(2);
        }, this.settleMs);
    }

    private requestRung(rung: Rung): void {
        if (
            this.shown !== null &&
            this.shown.revision === this.revision &&
            this.shown.rung <= rung
        ) {
            return; // the screen is already at least this good
        }
        if (this.inflight.has(rung)) {
            // one request per rung; remember that the base rung is stale
            if (rung === 4) {
                this.pendingBase = true;
            }
            return;
        }
        const revision = this.revision;
        const controller = new AbortController();
        this.inflight.set(rung, { revision, controller });
        this.transport(revision, rung, controller.signal).then(
            (result) => this.completed(rung, revision, result),
            (error) => this.failed(rung, revision, error),
        );
    }

    private completed(rung: Rung, revision: number, result: RenderResult): void {
        const flight = this.inflight.get(rung);
        if (!flight || flight.revision !== revision) {
            return; // superseded while resolving
        }
        this.inflight.delete(rung);

        const better =
            this.shown === null ||
            revision > this.shown.revision ||
            (revision === this.shown.revision && rung < this.shown.rung);
        if (better) {
            this.shown = { image: result.image, revision, rung, millis: result.millis };
            this.onDisplay(this.shown);
        }

        if (rung === 4 && (this.pendingBase || revision < this.revision)) {
            // the camera moved while this frame rendered; chase it
            this.pendingBase = false;
            this.requestRung(4);
            return;
        }

        if (revision === this.revision && this.settleHandle === null) {
            // settled: walk down the ladder toward full quality
            if (rung === 2) {
                this.requestRung(1);
            } else if (rung === 4) {
                this.requestRung(2);
            }
        }
    }

    private failed(rung: Rung, revision: number, error: unknown): void {
        const flight = this.inflight.get(rung);
        if (!flight || flight.revision !== revision) {
            return;
        }
        this.inflight.delete(rung);
        if ((error as Error | null)?.name === "AbortError") {
            return; // cancellation is part of normal operation
        }
        this.onError(error instanceof Error ? error.message : String(error));
        if (rung === 4 && this.pendingBase) {
            this.pendingBase = false;
            this.requestRung(4);
        }
    }
}
