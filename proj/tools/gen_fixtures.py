#!/usr/bin/env python3
"""Regenerates the model and seed fixtures under fixtures/.

Deterministic: running it twice produces byte-identical files.
"""
import json
import os
import sys

import numpy as np

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")


def dense(w, b):
    return {"kind": "dense",
            "weights": [[round(float(v), 6) for v in row] for row in np.atleast_2d(w)],
            "bias": [round(float(v), 6) for v in b]}


def write_json(path, doc):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def write_pgm(path, img):
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.astype(np.uint8).tobytes())


def model(mid, task, shape, layers, normalizer=255.0):
    return {"id": mid, "task": task, "input_shape": shape, "normalizer": normalizer,
            "layers": layers}


def linear_pair():
    d = os.path.join(ROOT, "linear_pair")
    write_json(os.path.join(d, "lin_a.json"), model("lin_a", "classification", [1, 4], [
        dense([[0, 0, 0, 0], [1.0, 1.0, 1.0, 1.0]], [0.0, -2.0]), {"kind": "softmax"}]))
    write_json(os.path.join(d, "lin_b.json"), model("lin_b", "classification", [1, 4], [
        dense([[0, 0, 0, 0], [0.8, 1.0, 1.2, 1.0]], [0.0, -2.4]), {"kind": "softmax"}]))
    write_pgm(os.path.join(d, "seed.pgm"), np.full((1, 4), 100))
    write_json(os.path.join(d, "seeds.json"),
               {"shape": [1, 4], "seeds": [{"id": "flat100", "file": "seed.pgm"}]})


def brightness_mlp(mid, rng, seeds, strongest_pixel, margin, hidden=6):
    """Two-class MLP whose class-1 logit grows with a weighted image brightness.

    The gain is set so that raising the most influential pixel from ~30 to 255
    adds `strongest_pixel` logits; the threshold puts the mean seed `margin`
    logits on the class-0 side.
    """
    w1 = rng.uniform(0.0, 1.0, size=(hidden, 64)) * rng.uniform(0.1, 1.0, size=(1, 64))
    per_pixel = w1.sum(axis=0) / hidden / 255.0
    gain = strongest_pixel / (per_pixel.max() * 225.0)
    scores = [gain * float(per_pixel @ img.ravel()) for img in seeds]
    theta = float(np.mean(scores)) + margin
    w2 = np.vstack([np.zeros(hidden), np.full(hidden, gain / hidden)])
    b2 = np.array([0.0, -theta])
    return model(mid, "classification", [8, 8],
                 [dense(w1, np.zeros(hidden)), {"kind": "relu"}, dense(w2, b2),
                  {"kind": "softmax"}])


def make_seeds(rng, count):
    seeds = []
    for _ in range(count):
        img = rng.integers(20, 41, size=(8, 8))
        r, c = rng.integers(1, 6, size=2)
        img[r:r + 2, c:c + 2] += 15
        seeds.append(img)
    return seeds


def pair_a(seeds):
    d = os.path.join(ROOT, "pair_a")
    os.makedirs(os.path.join(d, "seeds"), exist_ok=True)
    write_json(os.path.join(d, "mlp_a.json"),
               brightness_mlp("mlp_a", np.random.default_rng(11), seeds, 3.5, 1.6))
    write_json(os.path.join(d, "mlp_b.json"),
               brightness_mlp("mlp_b", np.random.default_rng(12), seeds, 3.5, 2.0))
    entries = []
    for i, img in enumerate(seeds):
        name = "seed_%02d.pgm" % i
        write_pgm(os.path.join(d, "seeds", name), img)
        entries.append({"id": "s%02d" % i, "file": "seeds/" + name})
    write_json(os.path.join(d, "seeds.json"), {"shape": [8, 8], "seeds": entries})


def zoo(seeds):
    d = os.path.join(ROOT, "zoo5")
    for k in range(5):
        mid = "zoo_%d" % (k + 1)
        write_json(os.path.join(d, mid + ".json"),
                   brightness_mlp(mid, np.random.default_rng(100 + k), seeds[:10], 3.5,
                                  1.4 + 0.2 * k))
    entries = [{"id": "s%02d" % i, "file": "../pair_a/seeds/seed_%02d.pgm" % i}
               for i in range(10)]
    write_json(os.path.join(d, "seeds.json"), {"shape": [8, 8], "seeds": entries})


def steering(mid, rng):
    hidden = 4
    w1 = rng.uniform(0.0, 1.0, size=(hidden, 64)) * rng.uniform(0.0, 1.0, size=(1, 64))
    w1 /= w1.sum(axis=1, keepdims=True)
    w2 = np.full((1, hidden), 5.0 / hidden)
    return model(mid, "regression", [8, 8],
                 [dense(w1, np.zeros(hidden)), {"kind": "relu"}, dense(w2, [-0.45])])


def regression(seeds):
    d = os.path.join(ROOT, "regression")
    write_json(os.path.join(d, "steer_a.json"), steering("steer_a", np.random.default_rng(21)))
    write_json(os.path.join(d, "steer_b.json"), steering("steer_b", np.random.default_rng(22)))
    entries = [{"id": "s%02d" % i, "file": "../pair_a/seeds/seed_%02d.pgm" % i}
               for i in range(20)]
    write_json(os.path.join(d, "seeds.json"), {"shape": [8, 8], "seeds": entries})


def threshold():
    d = os.path.join(ROOT, "threshold")
    # class 1 iff pixel 0 exceeds the bias magnitude (normalizer 1 keeps raw units)
    for mid, cut in (("thr_128", 128.0), ("thr_200", 200.0)):
        write_json(os.path.join(d, mid + ".json"), model(mid, "classification", [1, 2], [
            dense([[0, 0], [1, 0]], [0.0, -cut]), {"kind": "softmax"}], normalizer=1.0))
    entries = []
    for i, v in enumerate((150, 220)):
        name = "adv_%d.raw" % i
        with open(os.path.join(d, name), "wb") as f:
            f.write(bytes([v, 0]))
        entries.append({"id": "adv%d" % i, "file": name, "success": True, "label": 1})
    write_json(os.path.join(d, "adversarials.json"),
               {"shape": [1, 2], "model_a": "thr_128", "entries": entries})
    write_json(os.path.join(d, "none_succeeded.json"),
               {"shape": [1, 2], "model_a": "thr_128",
                "entries": [dict(e, success=False) for e in entries]})


def main():
    seeds = make_seeds(np.random.default_rng(7), 50)
    linear_pair()
    pair_a(seeds)
    zoo(seeds)
    regression(seeds)
    threshold()
    return 0


if __name__ == "__main__":
    sys.exit(main())
