import json
import os
import shutil
import tempfile

import numpy as np

from scalecs.image import Image, save_pgm


def make_tmpfile(config):
    fd, tmp_path = tempfile.mkstemp(prefix="scalecs_tests")

    with os.fdopen(fd, "w") as tmp:
        json.dump(config, tmp)

    return tmp_path


def close_tmpfile(tmp_path):
    if os.path.isdir(tmp_path):
        shutil.rmtree(tmp_path)
    else:
        os.remove(tmp_path)


def make_tmpdir():
    tmp_path = tempfile.mkdtemp(prefix="scalecs_test_dir")

    return tmp_path


def smooth_image(size, seed=0):
    """
    Integer-valued natural-looking test image: a tilted gradient, a few Gaussian blobs and one bright rectangle.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)

    pixels = 60.0 + 80.0 * xx + 40.0 * yy
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8, size=2)
        width = rng.uniform(0.08, 0.2)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        pixels += rng.uniform(-60, 80) * blob

    lo, hi = size // 4, size // 2
    pixels[lo:hi, lo : lo + size // 3] += 50.0

    return Image(np.round(np.clip(pixels, 0, 255)))


def phantom(size):
    """
    Piecewise-constant image with four regions.
    """
    pixels = np.full((size, size), 40.0)
    q = size // 4
    pixels[q : 3 * q, q : 2 * q] = 200.0
    pixels[q : 2 * q, 2 * q : 3 * q + 2] = 120.0
    pixels[3 * q :, 2 * q :] = 90.0
    return Image(pixels)


def write_image(img, directory, name):
    path = os.path.join(directory, name)
    save_pgm(img, path)
    return path
