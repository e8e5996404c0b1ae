# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 24 2021
import os

import pytest

from tests.util import (
    close_tmpfile,
    make_tmpdir,
    make_tmpfile,
    phantom,
    smooth_image,
    write_image,
)


@pytest.fixture()
def work_dir():
    base_dir = make_tmpdir()
    yield base_dir
    close_tmpfile(base_dir)


@pytest.fixture()
def image_path(work_dir):
    return write_image(smooth_image(32, seed=5), work_dir, "smooth.pgm")


@pytest.fixture()
def phantom_path(work_dir):
    return write_image(phantom(32), work_dir, "phantom.pgm")


@pytest.fixture()
def solver_config():
    """
    Short solver runs for 32x32 round trips.
    """
    path = make_tmpfile({"solver": {"max_iters": 40, "tol": 1e-4}})
    yield path
    close_tmpfile(path)


@pytest.fixture()
def experiment_config(work_dir, image_path, phantom_path):
    paths = []

    def _make(log_name="results", **overrides):
        config = {
            "image": [image_path, phantom_path],
            "rate": [1.0, 1.5],
            "seed": 1,
            "width": 32,
            "height": 32,
            "log_dir": os.path.join(work_dir, log_name),
            "experiment": {
                "base_bits": 5,
                "enh_bits": [4, 6],
                "nonscalable_bits": [4, 6],
            },
            "solver": {"max_iters": 30, "tol": 1e-4},
        }
        config.update(overrides)
        paths.append(make_tmpfile(config))
        return paths[-1], config

    yield _make

    for path in paths:
        close_tmpfile(path)
