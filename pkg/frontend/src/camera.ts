/** Camera state math: clamping, input integration, pose conversion. */

import type { CameraState, RenderRequest, SceneBounds, SceneMeta, Vec3 } from "./types.js";

/** Pitch limit just inside the poles so the view direction never degenerates. */
export const PITCH_LIMIT = Math.PI / 2 - 1e-3;

/** The camera may roam this factor beyond the scene bounds, about their center. */
export const ROAM_FACTOR = 1.5;

export interface MoveInput {
    forward: number;
    right: number;
    up: number;
}

function clamp(value: number, lo: number, hi: number): number {
    return Math.min(hi, Math.max(lo, value));
}

function wrapAngle(a: number): number {
    const two = 2 * Math.PI;
    return ((a + Math.PI) % two + two) % two - Math.PI;
}

/** Per-axis roam interval: bounds scaled by ROAM_FACTOR about their center. */
export function roamBox(bounds: SceneBounds): { lo: Vec3; hi: Vec3 } {
    const lo = { x: 0, y: 0, z: 0 } as Vec3;
    const hi = { x: 0, y: 0, z: 0 } as Vec3;
    const axes: (keyof Vec3)[] = ["x", "y", "z"];
    axes.forEach((axis, i) => {
        const a = bounds.lo[i] ?? 0;
        const b = bounds.hi[i] ?? 0;
        const center = (a + b) / 2;
        const half = ((b - a) / 2) * ROAM_FACTOR;
        lo[axis] = center - half;
        hi[axis] = center + half;
    });
    return { lo, hi };
}

/** Enforce the state invariants: pitch inside the poles, position inside the roam box. */
export function clampCamera(state: CameraState, bounds: SceneBounds): CameraState {
    const box = roamBox(bounds);
    return {
        ...state,
        yaw: wrapAngle(state.yaw),
        pitch: clamp(state.pitch, -PITCH_LIMIT, PITCH_LIMIT),
        position: {
            x: clamp(state.position.x, box.lo.x, box.hi.x),
            y: clamp(state.position.y, box.lo.y, box.hi.y),
            z: clamp(state.position.z, box.lo.z, box.hi.z),
        },
    };
}

/** Apply a mouse-drag delta (pixels scaled by sensitivity) to the view angles. */
export function applyDrag(
    state: CameraState,
    bounds: SceneBounds,
    dxRadians: number,
    dyRadians: number,
): CameraState {
    return clampCamera(
        { ...state, yaw: state.yaw + dxRadians, pitch: state.pitch + dyRadians },
        bounds,
    );
}

/** Integrate WASD-style movement over dt seconds in the camera frame. */
export function applyMove(
    state: CameraState,
    bounds: SceneBounds,
    input: MoveInput,
    dt: number,
    speed: number,
): CameraState {
    const cy = Math.cos(state.yaw);
    const sy = Math.sin(state.yaw);
    const cp = Math.cos(state.pitch);
    const sp = Math.sin(state.pitch);
    // forward follows the view direction; right stays horizontal
    const fwd = { x: cp * sy, y: sp, z: cp * cy };
    const right = { x: cy, y: 0, z: -sy };
    const step = speed * dt;
    return clampCamera(
        {
            ...state,
            position: {
                x: state.position.x + step * (input.forward * fwd.x + input.right * right.x),
                y: state.position.y + step * (input.forward * fwd.y + input.right * right.y + input.up),
                z: state.position.z + step * (input.forward * fwd.z + input.right * right.z),
            },
        },
        bounds,
    );
}

/**
 * Camera-to-world rotation as a unit quaternion (w, x, y, z) for a
 * +z-forward, +y-up camera: yaw about world +y composed with pitch
 * about the camera x axis, positive pitch looking up, so the forward
 * direction is (cos p sin y, sin p, cos p cos y).
 */
export function cameraQuat(state: CameraState): [number, number, number, number] {
    const a = Math.cos(state.yaw / 2);
    const b = Math.sin(state.yaw / 2);
    const c = Math.cos(state.pitch / 2);
    const d = -Math.sin(state.pitch / 2);
    // Hamilton product (a, 0, b, 0) * (c, d, 0, 0)
    return [a * c, a * d, b * c, -b * d];
}

/** Build the render request body for a camera state at a given rung. */
export function renderRequest(
    state: CameraState,
    rung: number,
    size: number,
    samples: number,
): RenderRequest {
    const body: RenderRequest = {
        pose: {
            quat: cameraQuat(state),
            t: [state.position.x, state.position.y, state.position.z],
        },
        width: state.panoramic ? 2 * size : size,
        height: size,
        samples,
        rung,
    };
    if (!state.panoramic) {
        body.fov = state.fov;
    }
    return body;
}

/** Initial camera derived from scene metadata. */
export function initialCamera(meta: SceneMeta): CameraState {
    const [tx, ty, tz] = meta.start_pose.t;
    return clampCamera(
        {
            position: { x: tx, y: ty, z: tz },
            yaw: 0,
            pitch: 0,
            fov: 1.2,
            panoramic: false,
        },
        meta.bounds,
    );
}
