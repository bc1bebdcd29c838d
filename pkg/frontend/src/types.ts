/** Shared types for the explorer client. */

export interface Vec3 {
    x: number;
    y: number;
    z: number;
}

export interface SceneBounds {
    lo: [number, number, number];
    hi: [number, number, number];
}

export interface SceneMeta {
    bounds: SceneBounds;
    start_pose: { quat: [number, number, number, number]; t: [number, number, number] };
    checkpoint_id: string;
    overlays: string[];
}

/**
 * Free-flight camera state.  Yaw turns about the world up axis, pitch
 * tilts toward the poles and stays strictly inside (-pi/2, pi/2); the
 * position is confined to the scene bounds scaled 1.5x about their
 * center.  Panoramic mode ignores fov and renders a full 360 frame.
 */
export interface CameraState {
    position: Vec3;
    yaw: number;
    pitch: number;
    fov: number;
    panoramic: boolean;
}

export interface Bookmark {
    label: string;
    camera: CameraState;
    /** Data URL of a small canvas snapshot taken when the bookmark was saved. */
    thumbnail: string;
}

/** Body of POST /api/render. */
export interface RenderRequest {
    pose: { quat: [number, number, number, number]; t: [number, number, number] };
    width: number;
    height: number;
    samples: number;
    rung: number;
    fov?: number;
}

/** Quality rungs in escalation order: quarter, half, full resolution. */
export const RUNGS = [4, 2, 1] as const;
export type Rung = (typeof RUNGS)[number];
