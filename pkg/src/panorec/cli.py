"""Command-line pipeline driver.

One pipeline stage per invocation: synthesize or ingest a dataset,
train a radiance field, render views, export point clouds, run
panoramic stereo, fuse depth maps, or serve renders over HTTP.  Every
successful run appends one line to a JSONL run report recording the
stage name, wall-clock seconds, peak resident memory, the artifact
paths written, and a hash of the effective configuration, so a batch
of invocations is auditable and replayable: the same config and seed
reproduce the same output bytes.

Configuration is a single JSON document shared by all stages, with
optional blocks "train", "match", "export", and "keyframes" plus
top-level "output_dir", "threads", and "seed".  Unknown keys anywhere
abort the run before any work starts.  Precedence per setting is
command-line flag, then environment (PANOREC_OUTPUT_DIR relocates
relative output paths, PANOREC_THREADS caps workers), then the config
document, then the built-in default.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O
error, 5 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import resource
import shutil
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, PlyParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4
EXIT_INTERNAL = 5

_TOP_KEYS = {"output_dir", "threads", "seed", "train", "match", "export", "keyframes"}
_BLOCK_KEYS = {
    "train": {
        "iterations",
        "rays_per_batch",
        "samples_per_ray",
        "learning_rate",
        "levels",
        "table_size",
        "features_per_level",
        "base_resolution",
        "max_resolution",
        "hidden",
        "t_near",
        "t_far",
    },
    "match": {
        "d_min",
        "d_max",
        "patch_radius",
        "iterations",
        "neighbors",
        "cost_max",
        "consistency_threshold",
        "min_consistent_views",
    },
    "export": {"grid_resolution", "density_threshold", "color_mode"},
    "keyframes": {"min_baseline", "min_sharpness_quantile"},
}


def load_config(path) -> dict:
    """Parse and validate the shared JSON config document.

    Raises:
        ConfigError: unreadable file, invalid JSON, a non-object
            document or block, or any key outside the schema.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for block, allowed in _BLOCK_KEYS.items():
        if block not in doc:
            continue
        if not isinstance(doc[block], dict):
            raise ConfigError(f"config block {block!r} must be a JSON object")
        extra = set(doc[block]) - allowed
        if extra:
            raise ConfigError(f"unknown keys in config block {block!r}: {sorted(extra)}")
    return doc


def _env_int(name: str):
    raw = os.environ.get(name)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")


def _resolve_threads(args, doc: dict):
    n = args.threads
    if n is None:
        n = _env_int("PANOREC_THREADS")
    if n is None:
        n = doc.get("threads")
    if n is None:
        return None
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"threads must be a positive integer, got {n!r}")
    return n


def _apply_threads(n):
    """Cap worker threads; never raises the count above what exists."""
    if n is None:
        return
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _resolve_seed(args, doc: dict) -> int:
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    return seed


def _base_dir(doc: dict) -> Path:
    env = os.environ.get("PANOREC_OUTPUT_DIR")
    if env:
        return Path(env)
    return Path(doc.get("output_dir", "."))


def _out_path(args, doc: dict, default: str) -> Path:
    """Resolve --out: absolute paths win, relative ones sit under the
    base output directory (PANOREC_OUTPUT_DIR, else config output_dir,
    else the working directory)."""
    raw = Path(args.out) if args.out else Path(default)
    if raw.is_absolute():
        return raw
    return _base_dir(doc) / raw


def _report_path(args, doc: dict) -> Path:
    if args.report:
        raw = Path(args.report)
        return raw if raw.is_absolute() else _base_dir(doc) / raw
    return _base_dir(doc) / "run_report.jsonl"


def _append_report(path: Path, stage: str, seconds: float, outputs, effective: dict):
    digest = hashlib.sha256(
        json.dumps(effective, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    entry = {
        "stage": stage,
        "seconds": round(seconds, 6),
        "peak_rss_bytes": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024,
        "outputs": [os.fspath(p) for p in outputs],
        "config_sha256": digest,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as f:
        f.write(json.dumps(entry, sort_keys=True) + "\n")


def _block(doc: dict, name: str) -> dict:
    return doc.get(name, {})


def _match_config(doc: dict, bounds, seed: int):
    from .stereo import MatchConfig

    block = _block(doc, "match")
    d_max = block.get("d_max")
    if d_max is None:
        d_max = float(np.ceil(bounds.diagonal))
    return MatchConfig(
        d_min=block.get("d_min", 0.2),
        d_max=d_max,
        patch_radius=block.get("patch_radius", 5),
        iterations=block.get("iterations", 4),
        neighbors=block.get("neighbors", 4),
        cost_max=block.get("cost_max", 0.3),
        consistency_threshold=block.get("consistency_threshold", 0.02),
        min_consistent_views=block.get("min_consistent_views", 2),
        seed=seed,
    )


def _load_dataset(path):
    from .manifest import load_frames, load_manifest

    root = Path(path)
    manifest = load_manifest(root / "manifest.json")
    return manifest, load_frames(manifest, root)


# ---------------------------------------------------------------------------
# synth


def _trajectory(scene, args):
    from .oracle import make_trajectory

    if args.kind == "survey":
        n_orbit = (args.count + 1) // 2
        poses = make_trajectory(
            scene, n_orbit, "orbit", radius=args.radius, height=args.height
        )
        rest = args.count - n_orbit
        if rest:
            poses += make_trajectory(
                scene,
                rest,
                "lawnmower",
                height=args.height,
                rows=args.rows,
                margin=args.margin,
            )
        return poses
    return make_trajectory(
        scene,
        args.count,
        args.kind,
        radius=args.radius,
        height=args.height,
        rows=args.rows,
        margin=args.margin,
    )


def cmd_synth(args, doc: dict):
    from .geometry import EquirectCamera
    from .images import to_uint8, write_depth_png, write_png
    from .ingest import occlusion_mask, sharpness_score
    from .manifest import DatasetManifest, FrameRecord, save_manifest
    from .oracle import load_scene, render_panorama

    if args.width < 8 or args.width % 2:
        raise ConfigError(f"--width must be an even number >= 8, got {args.width}")
    if args.count < 1:
        raise ConfigError(f"--count must be >= 1, got {args.count}")
    seed = _resolve_seed(args, doc)
    scene = load_scene(args.scene)
    cam = EquirectCamera(width=args.width, height=args.width // 2)
    poses = _trajectory(scene, args)
    out = _out_path(args, doc, "dataset")
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    mask = occlusion_mask(cam, args.mask)
    records = []
    for i, pose in enumerate(poses):
        render = render_panorama(scene, pose, cam)
        img = to_uint8(render.image)
        name = f"frame_{i:04d}.png"
        write_png(out / "images" / name, img)
        depth = np.where(np.isfinite(render.depth), render.depth, 0.0)
        write_depth_png(out / "truth" / name, depth, frame_id=f"images/{name}")
        records.append(
            FrameRecord(
                path=f"images/{name}",
                pose=pose,
                mask=args.mask,
                sharpness=sharpness_score(img, mask),
            )
        )
    manifest = DatasetManifest(camera=cam, bounds=scene.bounds, frames=tuple(records))
    save_manifest(out / "manifest.json", manifest)
    effective = {
        "stage": "synth",
        "scene": os.fspath(args.scene),
        "count": args.count,
        "kind": args.kind,
        "width": args.width,
        "radius": args.radius,
        "height": args.height,
        "rows": args.rows,
        "margin": args.margin,
        "mask": args.mask,
        "seed": seed,
        "out": os.fspath(out),
    }
    return [out / "manifest.json", out / "images", out / "truth"], effective


# ---------------------------------------------------------------------------
# ingest


def _load_rig(path):
    from .geometry import FisheyeCamera, Pose, quat_from_axis_angle
    from .ingest import RigCalibration

    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read rig file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"rig file {path} is not valid JSON: {e}") from e
    allowed = {"front", "back", "blend_width", "back_rotation"}
    if not isinstance(doc, dict) or set(doc) - allowed:
        raise ConfigError(f"rig file must be an object with keys from {sorted(allowed)}")
    lenses = {}
    for side in ("front", "back"):
        lens = doc.get(side)
        if not isinstance(lens, dict) or set(lens) - {"width", "height", "fov"}:
            raise ConfigError(f"rig {side!r} needs width, height, and fov (radians)")
        lenses[side] = FisheyeCamera(
            width=lens["width"], height=lens["height"], fov=lens["fov"]
        )
    kwargs = {}
    if "blend_width" in doc:
        kwargs["blend_width"] = doc["blend_width"]
    if "back_rotation" in doc:
        axis_angle = doc["back_rotation"]
        if not isinstance(axis_angle, list) or len(axis_angle) != 4:
            raise ConfigError("rig back_rotation must be [ax, ay, az, angle]")
        q = quat_from_axis_angle(np.array(axis_angle[:3], dtype=float), axis_angle[3])
        kwargs["back_rotation"] = Pose(q=q, t=np.zeros(3))
    return RigCalibration(front=lenses["front"], back=lenses["back"], **kwargs)


def _load_poses(raw: Path, count: int):
    from .geometry import Pose

    path = raw / "poses.json"
    if not path.exists():
        raise DomainError(
            f"{raw} has no poses.json; ingest needs a JSON list with one "
            '{"quat": [w, x, y, z], "t": [x, y, z]} entry per frame, in frame order'
        )
    doc = json.loads(path.read_text())
    if not isinstance(doc, list) or len(doc) != count:
        raise DomainError(
            f"poses.json must list exactly one pose per frame "
            f"({count} frames, {len(doc) if isinstance(doc, list) else 'not a list'} poses)"
        )
    poses = []
    for i, entry in enumerate(doc):
        if not isinstance(entry, dict) or set(entry) != {"quat", "t"}:
            raise DomainError(f'poses.json entry {i} must be {{"quat", "t"}}')
        poses.append(
            Pose(
                q=np.asarray(entry["quat"], dtype=float),
                t=np.asarray(entry["t"], dtype=float),
            )
        )
    return poses


def _auto_bounds(poses):
    from .geometry import Aabb

    t = np.array([p.t for p in poses])
    lo, hi = t.min(axis=0), t.max(axis=0)
    pad = max(1.0, 0.5 * float(np.max(hi - lo)))
    return Aabb(lo=lo - pad, hi=hi + pad)


def cmd_ingest(args, doc: dict):
    from .geometry import Aabb, EquirectCamera
    from .images import read_png, write_png
    from .ingest import occlusion_mask, select_frames, sharpness_score, stitch_dual_fisheye
    from .manifest import DatasetManifest, FrameRecord, save_manifest

    raw = Path(args.raw)
    if not raw.is_dir():
        raise DomainError(f"raw capture directory {raw} does not exist")
    rig = _load_rig(args.rig) if args.rig else None
    if rig is not None:
        fronts = sorted(raw.glob("front_*.png"))
        backs = sorted(raw.glob("back_*.png"))
        if not fronts or len(fronts) != len(backs):
            raise DomainError(
                f"dual-fisheye ingest needs matching front_*.png and back_*.png "
                f"files, found {len(fronts)} front and {len(backs)} back"
            )
        sources = list(zip(fronts, backs))
    else:
        sources = sorted(raw.glob("frame_*.png"))
        if not sources:
            raise DomainError(f"{raw} has no frame_*.png images")
    poses = _load_poses(raw, len(sources))
    start = args.start or 0
    end = args.end if args.end is not None else len(sources)
    if not (0 <= start < end <= len(sources)):
        raise ConfigError(
            f"frame range {start}..{end} is invalid for {len(sources)} frames"
        )
    sources = sources[start:end]
    poses = poses[start:end]

    out = _out_path(args, doc, "dataset")
    cam = None
    mask = None
    candidates = []
    for source, pose in zip(sources, poses):
        if rig is not None:
            if cam is None:
                h = rig.front.height
                cam = EquirectCamera(width=2 * h, height=h)
                mask = occlusion_mask(cam, args.mask)
            front = read_png(source[0])
            back = read_png(source[1])
            img, _ = stitch_dual_fisheye(front, back, rig, cam)
        else:
            img = read_png(source)
            if img.ndim != 3 or img.shape[2] != 3:
                raise DomainError(f"{source} is not an RGB image")
            if cam is None:
                cam = EquirectCamera(width=img.shape[1], height=img.shape[0])
                mask = occlusion_mask(cam, args.mask)
            if (img.shape[0], img.shape[1]) != (cam.height, cam.width):
                raise DomainError(
                    f"{source} is {img.shape[1]}x{img.shape[0]}, expected "
                    f"{cam.width}x{cam.height} like the first frame"
                )
        candidates.append(
            _Candidate(
                source=source,
                image=img,
                pose=pose,
                sharpness=sharpness_score(img, mask),
            )
        )

    count = args.count if args.count is not None else len(candidates)
    chosen = select_frames(candidates, count, window=args.window)

    if args.bounds:
        vals = [float(x) for x in args.bounds.split(",")]
        if len(vals) != 6:
            raise ConfigError("--bounds needs six comma-separated numbers")
        bounds = Aabb(lo=np.array(vals[:3]), hi=np.array(vals[3:]))
    else:
        bounds = _auto_bounds([c.pose for c in chosen])

    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i, cand in enumerate(chosen):
        name = f"frame_{i:04d}.png"
        if rig is None:
            shutil.copyfile(cand.source, out / "images" / name)
        else:
            write_png(out / "images" / name, cand.image)
        records.append(
            FrameRecord(
                path=f"images/{name}",
                pose=cand.pose,
                mask=args.mask,
                sharpness=cand.sharpness,
            )
        )
    manifest = DatasetManifest(camera=cam, bounds=bounds, frames=tuple(records))
    save_manifest(out / "manifest.json", manifest)
    effective = {
        "stage": "ingest",
        "raw": os.fspath(raw),
        "rig": os.fspath(args.rig) if args.rig else None,
        "count": count,
        "window": args.window,
        "mask": args.mask,
        "start": start,
        "end": end,
        "bounds": args.bounds,
        "out": os.fspath(out),
    }
    return [out / "manifest.json", out / "images"], effective


class _Candidate:
    def __init__(self, source, image, pose, sharpness):
        self.source = source
        self.image = image
        self.pose = pose
        self.sharpness = sharpness


# ---------------------------------------------------------------------------
# train / render / export-cloud


def _parse_holdout(spec: str):
    if not spec:
        return []
    try:
        return sorted({int(tok) for tok in spec.split(",")})
    except ValueError:
        raise ConfigError(f"--holdout must be comma-separated integers, got {spec!r}")


def cmd_train(args, doc: dict):
    from .field import HashGridConfig, RadianceField, TrainConfig, save_checkpoint, train

    seed = _resolve_seed(args, doc)
    block = _block(doc, "train")
    manifest, frames = _load_dataset(args.dataset)
    holdout = _parse_holdout(args.holdout)
    bad = [i for i in holdout if not (0 <= i < len(frames))]
    if bad:
        raise ConfigError(f"--holdout indices {bad} outside 0..{len(frames) - 1}")
    train_frames = [f for i, f in enumerate(frames) if i not in set(holdout)]
    if not train_frames:
        raise DomainError("training needs at least one frame after holdout")

    iterations = args.iterations
    if iterations is None:
        iterations = block.get("iterations", 2000)
    tc = TrainConfig(
        iterations=iterations,
        rays_per_batch=block.get("rays_per_batch", 4096),
        samples_per_ray=block.get("samples_per_ray", 48),
        learning_rate=block.get("learning_rate", 1e-2),
        seed=seed,
    )
    grid_keys = ("levels", "table_size", "features_per_level", "base_resolution", "max_resolution")
    grid = HashGridConfig(**{k: block[k] for k in grid_keys if k in block})
    field = RadianceField.create(
        manifest.bounds,
        config=grid,
        seed=seed,
        hidden=block.get("hidden", 64),
        t_near=block.get("t_near", 0.05),
        t_far=block.get("t_far"),
    )

    every = max(1, iterations // 20)

    def progress(iteration, loss):
        if iteration % every == 0 or iteration == iterations - 1:
            print(f"iter {iteration:6d}  loss {loss:.6f}", file=sys.stderr, flush=True)

    curve = train(field, train_frames, tc, progress=progress)
    out = _out_path(args, doc, "field")
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "field.ckpt"
    save_checkpoint(field, ckpt)
    loss_path = out / "loss.json"
    loss_path.write_text(
        json.dumps({"loss": [float(x) for x in curve], "holdout": holdout}) + "\n"
    )
    effective = {
        "stage": "train",
        "dataset": os.fspath(args.dataset),
        "holdout": holdout,
        "iterations": iterations,
        "rays_per_batch": tc.rays_per_batch,
        "samples_per_ray": tc.samples_per_ray,
        "learning_rate": tc.learning_rate,
        "grid": {k: getattr(grid, k) for k in grid_keys},
        "hidden": block.get("hidden", 64),
        "seed": seed,
        "out": os.fspath(out),
    }
    return [ckpt, loss_path], effective


def _parse_pose(spec: str):
    from .geometry import Pose

    try:
        vals = [float(x) for x in spec.split(",")]
    except ValueError:
        vals = []
    if len(vals) != 7:
        raise ConfigError(
            "--pose needs 'qw,qx,qy,qz,tx,ty,tz' (unit quaternion plus position)"
        )
    q = np.array(vals[:4])
    norm = float(np.linalg.norm(q))
    if norm < 1e-9:
        raise ConfigError("--pose quaternion has zero norm")
    return Pose(q=q / norm, t=np.array(vals[4:]))


def cmd_render(args, doc: dict):
    from .field import load_checkpoint, render_panorama_view
    from .geometry import EquirectCamera
    from .images import to_uint8, write_depth_png, write_png

    if (args.pose is None) == (args.frame is None):
        raise ConfigError("render needs exactly one of --pose or --dataset with --frame")
    if args.width < 8 or args.width % 2:
        raise ConfigError(f"--width must be an even number >= 8, got {args.width}")
    field = load_checkpoint(args.checkpoint)
    if args.pose is not None:
        pose = _parse_pose(args.pose)
    else:
        if args.dataset is None:
            raise ConfigError("--frame needs --dataset for the pose")
        from .manifest import load_manifest

        manifest = load_manifest(Path(args.dataset) / "manifest.json")
        if not (0 <= args.frame < len(manifest)):
            raise ConfigError(f"--frame {args.frame} outside 0..{len(manifest) - 1}")
        pose = manifest.frames[args.frame].pose
    cam = EquirectCamera(width=args.width, height=args.width // 2)
    image, depth, _ = render_panorama_view(field, pose, cam, args.samples)
    out = _out_path(args, doc, "render.png")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_png(out, to_uint8(image))
    outputs = [out]
    if args.depth:
        depth_path = out.with_name(out.stem + "_depth.png")
        write_depth_png(depth_path, depth, frame_id=out.stem)
        outputs.append(depth_path)
    effective = {
        "stage": "render",
        "checkpoint": os.fspath(args.checkpoint),
        "pose": args.pose,
        "dataset": os.fspath(args.dataset) if args.dataset else None,
        "frame": args.frame,
        "width": args.width,
        "samples": args.samples,
        "depth": bool(args.depth),
        "out": os.fspath(out),
    }
    return outputs, effective


def cmd_export_cloud(args, doc: dict):
    from .cloud import write_ply
    from .field import export_pointcloud, load_checkpoint

    block = _block(doc, "export")
    resolution = args.resolution or block.get("grid_resolution", 128)
    threshold = args.threshold if args.threshold is not None else block.get("density_threshold", 5.0)
    color = args.color or block.get("color_mode", "view")
    field = load_checkpoint(args.checkpoint)
    cloud = export_pointcloud(field, resolution, threshold, color_mode=color)
    out = _out_path(args, doc, "cloud.ply")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ply(cloud, out)
    effective = {
        "stage": "export-cloud",
        "checkpoint": os.fspath(args.checkpoint),
        "grid_resolution": resolution,
        "density_threshold": threshold,
        "color_mode": color,
        "out": os.fspath(out),
    }
    return [out], effective


# ---------------------------------------------------------------------------
# depth / fuse


def cmd_depth(args, doc: dict):
    from .images import write_depth_png
    from .stereo import patchmatch_depth, select_keyframes, select_views

    seed = _resolve_seed(args, doc)
    manifest, frames = _load_dataset(args.dataset)
    cfg = _match_config(doc, manifest.bounds, seed)
    kf_block = _block(doc, "keyframes")
    keyframes = select_keyframes(
        frames,
        min_baseline=kf_block.get("min_baseline", 0.25),
        min_sharpness_quantile=kf_block.get("min_sharpness_quantile", 0.0),
    )
    if args.reference is not None:
        if not (0 <= args.reference < len(frames)):
            raise ConfigError(
                f"--reference {args.reference} outside 0..{len(frames) - 1}"
            )
        refs = [frames[args.reference]]
    else:
        refs = keyframes

    out = _out_path(args, doc, "depth")
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for ref in refs:
        views = select_views(ref, keyframes, cfg)
        if not views:
            if args.reference is not None:
                raise DomainError(
                    f"no usable stereo partners for frame {ref.timestamp_index}"
                )
            print(
                f"frame {ref.timestamp_index}: no usable stereo partners, skipped",
                file=sys.stderr,
            )
            continue
        dm = patchmatch_depth(ref, views, cfg)
        stem = Path(manifest.frames[ref.timestamp_index].path).stem
        png = out / f"depth_{stem}.png"
        write_depth_png(png, dm.depth, frame_id=manifest.frames[ref.timestamp_index].path)
        np.savez(
            out / f"depth_{stem}.npz",
            normal=dm.normal.astype(np.float32),
            cost=dm.cost.astype(np.float32),
            reference=np.int64(ref.timestamp_index),
        )
        outputs.append(png)
        print(
            f"frame {ref.timestamp_index}: {int(dm.valid.sum())} valid pixels "
            f"from {len(views)} views",
            file=sys.stderr,
        )
    if not outputs:
        raise DomainError("no depth maps produced; dataset has no stereo pairs")
    effective = {
        "stage": "depth",
        "dataset": os.fspath(args.dataset),
        "reference": args.reference,
        "match": {
            "d_min": cfg.d_min,
            "d_max": cfg.d_max,
            "patch_radius": cfg.patch_radius,
            "iterations": cfg.iterations,
            "neighbors": cfg.neighbors,
            "cost_max": cfg.cost_max,
        },
        "keyframes": {
            "min_baseline": kf_block.get("min_baseline", 0.25),
            "min_sharpness_quantile": kf_block.get("min_sharpness_quantile", 0.0),
        },
        "seed": seed,
        "out": os.fspath(out),
    }
    return outputs, effective


def _load_depth_maps(depth_dir: Path, manifest):
    from .geometry import EquirectCamera
    from .images import read_depth_png
    from .stereo import DepthMap

    files = sorted(depth_dir.glob("depth_*.png"))
    if not files:
        raise DomainError(f"{depth_dir} has no depth_*.png maps")
    by_path = {rec.path: i for i, rec in enumerate(manifest.frames)}
    maps = []
    for png in files:
        depth, sidecar = read_depth_png(png)
        frame_id = sidecar.get("frame_id")
        if frame_id not in by_path:
            raise DomainError(
                f"{png} names frame {frame_id!r} which is not in the manifest"
            )
        index = by_path[frame_id]
        npz_path = png.with_suffix(".npz")
        if npz_path.exists():
            with np.load(npz_path) as payload:
                normal = payload["normal"].astype(np.float64)
                cost = payload["cost"].astype(np.float64)
            norms = np.linalg.norm(normal, axis=-1, keepdims=True)
            normal = np.where(norms > 0, normal / np.maximum(norms, 1e-30), normal)
        else:
            cam = EquirectCamera(width=depth.shape[1], height=depth.shape[0])
            normal = -cam.direction_grid()
            cost = np.where(depth > 0, 0.5, 1.0)
        maps.append(DepthMap(depth=depth, normal=normal, cost=cost, reference=index))
    return maps


def cmd_fuse(args, doc: dict):
    from .cloud import write_ply
    from .stereo import clean_depth, fuse

    seed = _resolve_seed(args, doc)
    manifest, frames = _load_dataset(args.dataset)
    cfg = _match_config(doc, manifest.bounds, seed)
    maps = _load_depth_maps(Path(args.depths), manifest)
    poses = [frames[m.reference].pose for m in maps]
    cleaned = not args.no_clean and len(maps) >= 2
    if cleaned:
        maps = clean_depth(maps, poses, cfg)
    fused = fuse(maps, [frames[m.reference] for m in maps], args.voxel)
    out = _out_path(args, doc, "fused.ply")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ply(fused.cloud, out)
    print(f"fused {len(fused.cloud)} points at voxel {args.voxel}", file=sys.stderr)
    effective = {
        "stage": "fuse",
        "dataset": os.fspath(args.dataset),
        "depths": os.fspath(args.depths),
        "voxel": args.voxel,
        "cleaned": cleaned,
        "consistency_threshold": cfg.consistency_threshold,
        "min_consistent_views": cfg.min_consistent_views,
        "out": os.fspath(out),
    }
    return [out], effective


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args, doc: dict):
    import uvicorn

    from .server import create_app

    app = create_app(
        checkpoint=args.checkpoint,
        cloud=args.cloud,
        workers=args.workers,
        frontend_dir=args.frontend,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    effective = {
        "stage": "serve",
        "checkpoint": os.fspath(args.checkpoint) if args.checkpoint else None,
        "cloud": os.fspath(args.cloud) if args.cloud else None,
        "port": args.port,
        "workers": args.workers,
    }
    return [], effective


# ---------------------------------------------------------------------------
# wiring


def _add_common(sub):
    sub.add_argument("--config", help="shared JSON config document")
    sub.add_argument("--out", help="output path (relative paths sit under the base output dir)")
    sub.add_argument("--report", help="run report JSONL path (default <base>/run_report.jsonl)")
    sub.add_argument("--threads", type=int, help="cap worker threads")
    sub.add_argument("--seed", type=int, help="random seed (default from config, else 0)")


def build_parser() -> argparse.ArgumentParser:
    from .manifest import MASK_KINDS

    parser = argparse.ArgumentParser(
        prog="panorec",
        description="Panoramic reconstruction pipeline, one stage per invocation.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="render a synthetic dataset with ground truth")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--count", type=int, default=8, help="number of panoramas")
    p.add_argument(
        "--kind",
        choices=("orbit", "lawnmower", "survey"),
        default="orbit",
        help="trajectory shape; survey is half orbit, half lawnmower",
    )
    p.add_argument("--width", type=int, default=256, help="panorama width (height is half)")
    p.add_argument("--radius", type=float, help="orbit radius, meters")
    p.add_argument("--height", type=float, default=0.0, help="camera height offset, meters")
    p.add_argument("--rows", type=int, help="lawnmower rows")
    p.add_argument("--margin", type=float, default=0.5, help="lawnmower wall margin, meters")
    p.add_argument("--mask", choices=MASK_KINDS, default="none", help="occlusion mask kind")
    _add_common(p)
    p.set_defaults(handler=cmd_synth)

    p = subs.add_parser("ingest", help="turn a raw capture into a dataset")
    p.add_argument("--raw", required=True, help="directory of frame_*.png (or front_*/back_*) plus poses.json")
    p.add_argument("--rig", help="dual-fisheye rig JSON (front/back lens geometry)")
    p.add_argument("--count", type=int, help="frames to keep (default all)")
    p.add_argument("--window", type=int, default=0, help="sharpness search half-width per bin")
    p.add_argument("--mask", choices=MASK_KINDS, default="none", help="occlusion mask kind")
    p.add_argument("--start", type=int, help="first frame index to consider")
    p.add_argument("--end", type=int, help="one past the last frame index")
    p.add_argument("--bounds", help="scene bounds 'x0,y0,z0,x1,y1,z1' (default from poses)")
    _add_common(p)
    p.set_defaults(handler=cmd_ingest)

    p = subs.add_parser("train", help="fit a radiance field to a dataset")
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    p.add_argument("--iterations", type=int, help="training iterations")
    p.add_argument("--holdout", default="", help="comma-separated frame indices to exclude")
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = subs.add_parser("render", help="render a panorama from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="field checkpoint")
    p.add_argument("--pose", help="'qw,qx,qy,qz,tx,ty,tz' camera-to-world pose")
    p.add_argument("--dataset", help="dataset whose pose to reuse (with --frame)")
    p.add_argument("--frame", type=int, help="frame index in --dataset")
    p.add_argument("--width", type=int, default=512, help="output width (height is half)")
    p.add_argument("--samples", type=int, default=96, help="samples per ray")
    p.add_argument("--depth", action="store_true", help="also write a 16-bit depth PNG")
    _add_common(p)
    p.set_defaults(handler=cmd_render)

    p = subs.add_parser("export-cloud", help="sample a checkpoint into a PLY point cloud")
    p.add_argument("--checkpoint", required=True, help="field checkpoint")
    p.add_argument("--resolution", type=int, help="grid cells per axis")
    p.add_argument("--threshold", type=float, help="keep cells with density >= this")
    p.add_argument("--color", choices=("view", "gray"), help="color mode")
    _add_common(p)
    p.set_defaults(handler=cmd_export_cloud)

    p = subs.add_parser("depth", help="PatchMatch depth maps for dataset keyframes")
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    p.add_argument("--reference", type=int, help="single frame index instead of all keyframes")
    _add_common(p)
    p.set_defaults(handler=cmd_depth)

    p = subs.add_parser("fuse", help="clean depth maps and fuse them into a PLY cloud")
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    p.add_argument("--depths", required=True, help="directory of depth_*.png maps")
    p.add_argument("--voxel", type=float, default=0.02, help="fusion voxel edge, meters")
    p.add_argument("--no-clean", action="store_true", help="skip consistency cleaning")
    _add_common(p)
    p.set_defaults(handler=cmd_fuse)

    p = subs.add_parser("serve", help="serve renders and clouds over HTTP")
    p.add_argument("--checkpoint", help="field checkpoint to render from")
    p.add_argument("--cloud", help="PLY cloud served as the overlay")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8080, help="bind port")
    p.add_argument("--workers", type=int, default=1, help="render worker threads")
    p.add_argument("--frontend", help="static assets directory mounted under /")
    _add_common(p)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv=None) -> int:
    t0 = time.monotonic()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = load_config(args.config) if args.config else {}
        _apply_threads(_resolve_threads(args, doc))
        outputs, effective = args.handler(args, doc)
        if args.command != "serve":
            _append_report(
                _report_path(args, doc),
                args.command,
                time.monotonic() - t0,
                outputs,
                effective,
            )
        return EXIT_OK
    except ConfigError as e:
        print(f"panorec: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, PlyParseError) as e:
        print(f"panorec: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"panorec: i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
