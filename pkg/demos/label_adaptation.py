"""Learn to translate synthetic landmark conventions into another dataset's.

Annotators place landmarks slightly differently from where a rig defines
them. Given pairs of (synthetic, target-convention) landmarks, a small
perceptron learns the mapping. Here the target convention is a small affine
shift of the synthetic one, so we can measure how much of it is learned.
"""

import time

import numpy as np

from synthface.adapt import AdapterHyper, forward, train_adapter
from synthface.config import GenerationConfig
from synthface.desk import desk_assets
from synthface.metrics import nme
from synthface.raster import scene_landmarks
from synthface.scene import assemble_scene

assets = desk_assets()
config = GenerationConfig()


def landmarks(seeds):
    return np.stack([scene_landmarks(assemble_scene(config, assets, s), assets.rig, 128)[:, :2] / 128
                     for s in seeds])


def target_convention(p):
    a = np.array([[1.03, 0.02], [-0.015, 0.97]])
    return (p - 0.5) @ a.T + 0.5 + [0.01, 0.025]


train, held = landmarks(range(3000)), landmarks(range(10**6, 10**6 + 200))
start = time.perf_counter()
result = train_adapter(train.reshape(len(train), -1), target_convention(train).reshape(len(train), -1),
                       AdapterHyper(epochs=120))
print(f"trained in {time.perf_counter() - start:.1f} s, best epoch {result.best_epoch}, "
      f"validation loss {result.best_val:.2e}")
for epoch, tl, vl in result.log[::30]:
    print(f"  epoch {epoch:3d}: train {tl:.2e}  val {vl:.2e}")

adapted = forward(result.model, held.reshape(len(held), -1)).reshape(held.shape)
truth = target_convention(held)
before = np.mean([nme(s, t) for s, t in zip(held, truth)])
after = np.mean([nme(a, t) for a, t in zip(adapted, truth)])
print(f"held-out NME against the target convention: {before:.2%} raw, {after:.2%} adapted "
      f"({1 - after / before:.0%} reduction)")
