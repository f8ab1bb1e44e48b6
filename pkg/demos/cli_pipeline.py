"""
The command-line pipeline end to end
====================================

Writes a point cloud and a posed image set to a scratch folder, then runs
``init``, ``train``, ``render``, ``metrics`` and ``sh-variance`` through the
same entry point the ``splatlab`` console script uses.
"""

import tempfile
from pathlib import Path

import numpy as np

from splatlab import PointCloud, save_image, save_ply
from splatlab.cli import main
from splatlab.io import save_cameras
from splatlab.synthetic import orbit_cameras, random_scene, render_views

work = Path(tempfile.mkdtemp(prefix="splatlab-demo-"))
rng = np.random.default_rng(4)

truth = random_scene(6, rng, scale_range=(0.15, 0.3))
cams = orbit_cameras(4, size=32)
names = []
for k, img in enumerate(render_views(truth, cams)):
    names.append(f"view{k}.png")
    save_image(work / names[-1], img)
save_cameras(work / "cameras.json", cams, names)
save_ply(work / "cloud.ply", PointCloud(truth.positions + rng.normal(0, 0.05, (6, 3)),
                                        rng.uniform(size=(6, 3))))
(work / "train.toml").write_text("prune_every = 50\n[loss]\nk_switch = 40\nP = 4\n")


def run(*args):
    print("$ splatlab", " ".join(str(a) for a in args))
    code = main([str(a) for a in args])
    print(f"(exit {code})\n")


run("init", work / "cloud.ply", work / "init.ckpt", "--sh-mode", "dynamic")
run("sh-variance", work / "init.ckpt")
run("train", work / "init.ckpt", work / "cameras.json", work / "trained.ckpt",
    "--iterations", 80, "--config", work / "train.toml", "--seed", 1)
run("render", work / "trained.ckpt", work / "cameras.json", 0, work / "render0.png")
run("metrics", work / "trained.ckpt", work / "cameras.json")
print("outputs in", work)
