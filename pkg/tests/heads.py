"""Random synthetic detection heads for decode tests."""

import numpy as np

from gazetrack.detect import DEFAULT_ANCHORS, FeatureMap


def random_heads(rng, input_size=128, n_classes=None, obj_bias=-1.0):
    """Three heads (strides 8, 16, 32) with a handful of confident cells."""
    nc = int(rng.integers(1, 4)) if n_classes is None else n_classes
    maps = []
    for stride in (8, 16, 32):
        g = input_size // stride
        raw = rng.normal(0.0, 1.5, (3, g, g, 5 + nc))
        raw[..., 4] += obj_bias
        # a few strong objects, some placed in neighboring cells so NMS has work to do
        for _ in range(int(rng.integers(1, 5))):
            a, y, x = rng.integers(0, 3), rng.integers(0, g), rng.integers(0, g)
            raw[a, y, x, 4] = rng.uniform(2, 6)
            raw[a, y, x, 5:] = rng.normal(2, 1, nc)
            if x + 1 < g:
                raw[a, y, x + 1] = raw[a, y, x] + rng.normal(0, 0.2, 5 + nc)
                raw[a, y, x + 1, 0] -= 3.0
        maps.append((FeatureMap(g, g, stride, DEFAULT_ANCHORS[stride], raw.reshape(-1), nc), raw))
    return maps, nc
