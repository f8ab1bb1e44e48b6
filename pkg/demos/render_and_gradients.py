"""
Rendering a few Gaussians and checking their gradients
======================================================

Builds a small random scene, renders it from one camera, then compares the
analytic gradient of a simple image loss with central finite differences.
"""

import numpy as np

from splatlab import Camera, render, render_backward, save_image
from splatlab.synthetic import random_scene

rng = np.random.default_rng(0)

# Six Gaussians about three units in front of a camera at the origin.
scene = random_scene(6, rng, max_degree=2, extent=0.6, scale_range=(0.2, 0.4))
scene.positions[:, 2] += 3.0
cam = Camera(64, 64, 64.0, 64.0, 32.0, 32.0, np.eye(3), np.zeros(3))

img = render(scene, cam)
save_image("render.png", img)
print(f"rendered {img.shape}, mean colour {img.mean(axis=(0, 1)).round(3)}")

# A weighted pixel sum is linear in the image, so dL/dimage is just the weights.
weights = rng.normal(size=img.shape)
grads = render_backward(scene, cam, None, weights)


def loss(s):
    return float((render(s, cam) * weights).sum())


# Finite differences on the first Gaussian's centre.
h = 1e-5
fd = np.zeros(3)
for k in range(3):
    plus, minus = scene.copy(), scene.copy()
    plus.positions[0, k] += h
    minus.positions[0, k] -= h
    fd[k] = (loss(plus) - loss(minus)) / (2 * h)

print("analytic dL/dposition[0]:", grads.positions[0])
print("finite difference       :", fd)
