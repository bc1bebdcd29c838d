"""
Serving a trained field over HTTP
=================================

Loads a checkpoint (training a quick one if none exists), starts the
view server on a background thread, and walks the HTTP contract a
browser client would use: scene metadata, a coarse panoramic preview,
the full-quality refinement, a perspective view, and the point-cloud
overlay.  Pass --serve to keep the server up for a real browser
afterwards.
"""

import argparse
import json
import threading
import time
import urllib.request
from pathlib import Path

import uvicorn

from panorec.field import (
    RadianceField,
    TrainConfig,
    export_pointcloud,
    save_checkpoint,
    train,
)
from panorec.cloud import write_ply
from panorec.geometry import EquirectCamera
from panorec.images import to_uint8
from panorec.ingest import occlusion_mask, sharpness_score
from panorec.manifest import PanoramaFrame
from panorec.oracle import demo_room_scene, make_trajectory, render_panorama
from panorec.server import create_app

parser = argparse.ArgumentParser()
parser.add_argument("--checkpoint", type=Path, default=Path("demo_out/room/field.ckpt"))
parser.add_argument("--port", type=int, default=8008)
parser.add_argument("--serve", action="store_true", help="keep serving after the tour")
parser.add_argument("--out", type=Path, default=Path("demo_out/server"))
args = parser.parse_args()
args.out.mkdir(parents=True, exist_ok=True)

# reuse the reconstruction demo's checkpoint when available, otherwise
# fit a rough field right here; blurry is fine for an API tour
if not args.checkpoint.exists():
    print(f"{args.checkpoint} not found, training a quick stand-in")
    scene = demo_room_scene()
    cam = EquirectCamera(width=96, height=48)
    mask = occlusion_mask(cam, "none")
    frames = []
    for i, pose in enumerate(make_trajectory(scene, 8, kind="orbit")):
        image = to_uint8(render_panorama(scene, pose, cam).image)
        frames.append(
            PanoramaFrame(
                image=image,
                pose=pose,
                mask=mask,
                sharpness=sharpness_score(image, mask),
                timestamp_index=i,
            )
        )
    field = RadianceField.create(scene.bounds, seed=0)
    train(field, frames, TrainConfig(iterations=300, rays_per_batch=2048, samples_per_ray=32))
    args.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(field, args.checkpoint)

# an overlay cloud makes the third endpoint interesting too
cloud_path = args.out / "overlay.ply"
if not cloud_path.exists():
    from panorec.field import load_checkpoint

    field = load_checkpoint(args.checkpoint)
    write_ply(export_pointcloud(field, grid_resolution=64, density_threshold=5.0), cloud_path)

app = create_app(checkpoint=args.checkpoint, cloud=cloud_path, workers=2)
server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=args.port, log_level="warning"))
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.05)
base = f"http://127.0.0.1:{args.port}"
print(f"server up at {base}")

# 1. metadata tells a client where it may roam and where to start
with urllib.request.urlopen(f"{base}/api/meta") as resp:
    meta = json.load(resp)
print(f"bounds {meta['bounds']['lo']} .. {meta['bounds']['hi']}, "
      f"checkpoint {meta['checkpoint_id'][:12]}, overlays {meta['overlays']}")


def render(body, name):
    req = urllib.request.Request(
        f"{base}/api/render",
        data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        png = resp.read()
        millis = resp.headers["X-Render-Millis"]
    (args.out / name).write_bytes(png)
    print(f"  {name}: {len(png)} bytes in {millis} ms")
    return png


# 2. the progressive ladder: a rung-4 preview answers fast, rung 1 refines
pose = meta["start_pose"]
print("panoramic 512x256 at two quality rungs:")
render({"pose": pose, "width": 512, "height": 256, "samples": 48, "rung": 4}, "preview.png")
render({"pose": pose, "width": 512, "height": 256, "samples": 48, "rung": 1}, "full.png")

# 3. square output plus a field of view switches to perspective mode
print("perspective 256x256, fov 1.2 rad:")
render({"pose": pose, "width": 256, "height": 256, "samples": 48, "fov": 1.2}, "persp.png")

# 4. the overlay cloud streams back verbatim
with urllib.request.urlopen(f"{base}/api/cloud") as resp:
    ply = resp.read()
print(f"/api/cloud returned {len(ply)} bytes of PLY")

if args.serve:
    print(f"serving until Ctrl+C; try the endpoints at {base}")
    thread.join()
else:
    server.should_exit = True
    thread.join()
