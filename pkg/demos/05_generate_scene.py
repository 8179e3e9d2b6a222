# Writing and checking a synthetic scene on disk.
#
# Produces <out>/manifest.json, aif.png, depth.pfm and per-shot focused
# images and defocus maps, then validates the scene. Pass an output
# directory as the first argument (defaults to a temporary one).
import sys
import tempfile
from pathlib import Path

import numpy as np

from defocuskit import DepthMap, LensConfig, SceneManifest, generate_scene, validate_scene

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "scene"
rng = np.random.default_rng(3)

yy, xx = np.mgrid[0:80, 0:80]
depth = DepthMap(600.0 + 300.0 * (xx / 79.0) + 40.0 * ((yy // 20) % 2))
image = rng.random((80, 80, 3))

manifest = generate_scene(image, depth, LensConfig.reference_rig(), np.linspace(580, 960, 8), out)
print("scene written to", out)
for p in sorted(out.rglob("*")):
    if p.is_file():
        print("  ", p.relative_to(out))

print("findings:", validate_scene(out))

# Tamper with one focus depth and validate again.
m = SceneManifest.load(out)
m.shots[3].focus_depth_mm += 10.0
for f in validate_scene(m):
    print("finding:", f)
