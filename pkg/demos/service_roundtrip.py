"""Render-service round trip against a live HTTP server.

Builds a small detail-level scene, serves it with uvicorn on a local port,
then drives it the way a viewer would: scene metadata, a render request,
a per-request interval override, and a persistent interval swap.

Run:  python3 demos/service_roundtrip.py
"""

import json
import socket
import threading
import time
import urllib.request
from pathlib import Path

from citysplat.config import RunConfig
from citysplat.lod import build_lod
from citysplat.partition import ContractionMap, grid_partition
from citysplat.render import RenderSettings
from citysplat.service import create_app
from citysplat.synthetic import generate_synthetic_city


def get(url):
    with urllib.request.urlopen(url) as resp:
        return json.loads(resp.read())


def post(url, body):
    req = urllib.request.Request(
        url, data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return resp.read(), resp.headers  # case-insensitive mapping


city = generate_synthetic_city(seed=9, extent=60.0, n_buildings=8,
                               n_cameras=8, target_gaussians=6_000)
cmap = ContractionMap.central_third(city.cloud)
grid = grid_partition(city.cloud, cmap, (2, 2))
config = RunConfig(block_dims=(2, 2),
                   distance_intervals=((0, 30), (30, 60), (60, float("inf"))))
scene = build_lod(city.cloud, grid, [r.view for r in city.cameras], config)

app = create_app(scene, RenderSettings(), max_dim=640)

with socket.socket() as probe:  # grab a free port
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]

import uvicorn

server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                       log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
base = f"http://127.0.0.1:{port}"
while True:
    try:
        get(base + "/scene/info")
        break
    except OSError:
        time.sleep(0.05)

info = get(base + "/scene/info")
print(f"serving {info['n_blocks']} blocks x {info['n_levels']} levels "
      f"on {base}")
print(f"  intervals: {info['intervals']}  (null = unbounded)")

view = city.cameras[0].view
camera = {
    "width": view.width, "height": view.height,
    "fx": view.fx, "fy": view.fy, "cx": view.cx, "cy": view.cy,
    "rotation": view.rotation_w2c.tolist(),
    "translation": view.translation_w2c.tolist(),
}

png, headers = post(base + "/render", {"camera": camera})
Path("demo_out").mkdir(exist_ok=True)
Path("demo_out/service.png").write_bytes(png)
print(f"\nrendered {len(png)} PNG bytes in {headers['X-Render-Ms']} ms, "
      f"{headers['X-Visible-Gaussians']} visible gaussians")

# same pose, far-biased intervals for this request only
override = {"camera": camera,
            "lod": {"intervals": [[0, 5], [5, 10], [10, None]]}}
_, coarse_headers = post(base + "/render", override)
print(f"per-request far-biased intervals: "
      f"{coarse_headers['X-Visible-Gaussians']} visible "
      f"(persistent config untouched)")

post(base + "/lod", {"intervals": [[0, 15], [15, 30], [30, None]]})
_, swapped = post(base + "/render", {"camera": camera})
print(f"after persistent /lod swap: {swapped['X-Visible-Gaussians']} visible")

stats = get(base + "/stats/last")
by_level = {}
for block in stats["blocks"]:
    by_level[block["level"]] = by_level.get(block["level"], 0) + 1
print(f"last frame: {stats['render_ms']:.1f} ms, "
      f"{stats['fps_estimate']:.1f} fps estimate, "
      f"visible blocks per level {by_level}")

server.should_exit = True
