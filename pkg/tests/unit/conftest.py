# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 04 2021
import os

import pytest

from scalecs.config_reader import ConfigReader
from scalecs.recon import TvSettings
from scalecs.sensing import SensingConfig
from tests.util import close_tmpfile, make_tmpdir, make_tmpfile, smooth_image


@pytest.fixture()
def small_config():
    """
    32x32 full resolution, 16x16 base, 8x8 preview (m_B = 64).
    """
    return SensingConfig.for_image(32, 32, 256, 11, 12)


@pytest.fixture()
def small_image():
    return smooth_image(32, seed=3)


@pytest.fixture()
def fast_settings():
    return TvSettings(max_iters=60, tol=1e-5, cg_iters=3)


@pytest.fixture()
def basic_config_reader():
    config = {"image": "foo.pgm", "rate": 1.0, "seed": 1}

    path = make_tmpfile(config)
    config_reader = ConfigReader(path)

    yield config, config_reader

    close_tmpfile(path)


@pytest.fixture()
def log_basic_config_reader():
    base_dir = make_tmpdir()
    log_dir = os.path.join(base_dir, "logs")
    os.makedirs(log_dir)

    config = {
        "image": ["a.pgm", "b.pgm"],
        "rate": [1.0, 2.0],
        "seed": [1, 2],
        "log_dir": log_dir,
    }

    path = make_tmpfile(config)
    config_reader = ConfigReader(path)

    yield config, config_reader

    close_tmpfile(path)
    close_tmpfile(base_dir)
