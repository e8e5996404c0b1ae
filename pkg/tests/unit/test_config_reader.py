# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 18 2021
import json

import pytest

from scalecs.config_reader import (
    DEFAULT_CONFIG,
    ConfigReader,
    cell_name,
    expand_cells,
    merge_config,
    read_config,
)
from tests.util import close_tmpfile, make_tmpfile


@pytest.fixture()
def default_values():
    with open(DEFAULT_CONFIG, "r") as f:
        data = json.load(f)

    meta_data = data.pop("meta")

    return data, meta_data


def test_load_defaults(basic_config_reader, default_values):
    """
    Asserts that the config reader fills missing fields from default.config.
    """
    config, config_reader = basic_config_reader

    expected_data, expected_meta_data = default_values

    for key in expected_data:
        if key not in config:
            assert expected_data[key] == config_reader.data[key]

    for key in expected_meta_data:
        assert expected_meta_data[key] == config_reader.meta_data[key]


def test_load_config(basic_config_reader):
    """
    Asserts that the load_config method properly reads in the data from the file.
    """
    config, config_reader = basic_config_reader

    data, meta_data = config_reader._load_config(config_reader.filename)

    for key in config:
        assert key in data
        assert config[key] == data[key]

    assert meta_data == data["meta"]


@pytest.mark.parametrize("missing_key", ConfigReader._REQUIRED_KEYS)
def test_invalid_data(basic_config_reader, missing_key):
    """
    Asserts that ConfigReader throws a value error if any of the required keys are missing.
    """
    config, config_reader = basic_config_reader

    config.pop(missing_key, None)

    with pytest.raises(ValueError, match=missing_key):
        config_reader._validate_data(config, "test")


@pytest.mark.parametrize("grid", ["enh_bits", "nonscalable_bits"])
def test_empty_rate_grid(grid):
    """
    Asserts that an empty measurement-rate grid is rejected when the file is loaded.
    """
    path = make_tmpfile({"image": "foo.pgm", "rate": 1.0, "experiment": {grid: []}})

    with pytest.raises(ValueError, match=grid):
        ConfigReader(path)

    close_tmpfile(path)


def test_merge_config_is_nested():
    """
    Asserts that a partial section keeps the remaining default keys and that defaults are not modified.
    """
    defaults = {"solver": {"max_iters": 300, "tol": 1e-4}, "seed": [1, 2]}
    merged = merge_config(defaults, {"solver": {"tol": 1e-3}, "seed": 5})

    assert merged == {"solver": {"max_iters": 300, "tol": 1e-3}, "seed": 5}
    assert defaults["solver"]["tol"] == 1e-4


def test_read_config():
    defaults = read_config()

    assert defaults["solver"]["max_iters"] == 300
    assert defaults["experiment"]["base_bits"] == 5

    path = make_tmpfile({"solver": {"max_iters": 20}, "width": 64})
    data = read_config(path)

    assert data["solver"]["max_iters"] == 20
    assert data["solver"]["tol"] == defaults["solver"]["tol"]
    assert data["width"] == 64

    close_tmpfile(path)


@pytest.mark.parametrize(
    "foo_value,bar_value",
    [
        ([1, 2], 3),
        (1, 3),
        (1, [2, 3]),
        ([1, 2, 3], [4, 5, 6]),
        ("foo", [2]),
        (0.001, [0.1, 0.2, 0.3, 0.4]),
        ({"test": "val"}, 3),
    ],
)
def test_expand_cells(foo_value, bar_value):
    """
    Asserts that every list-valued key becomes an axis and every combination a cell, in key order.
    """
    expected_keys = {
        key
        for key, value in (("foo", foo_value), ("bar", bar_value))
        if isinstance(value, list)
    }

    foos = foo_value if isinstance(foo_value, list) else [foo_value]
    bars = bar_value if isinstance(bar_value, list) else [bar_value]
    expected = [{"foo": foo, "bar": bar} for foo in foos for bar in bars]

    actual, grid_keys = expand_cells({"foo": foo_value, "bar": bar_value})

    assert expected == actual
    assert expected_keys == grid_keys


def test_gen_run_configs(log_basic_config_reader):
    """
    Asserts that every (image, rate, seed) cell becomes an independent run configuration.
    """
    config, config_reader = log_basic_config_reader

    run_configs, permutable_keys = config_reader.gen_run_configs()

    assert len(run_configs) == 8
    assert permutable_keys == {"image", "rate", "seed"}

    cells = {(c["image"], c["rate"], c["seed"]) for c in run_configs}
    assert len(cells) == 8

    for run_config in run_configs:
        assert run_config["log_dir"] == config["log_dir"]
        assert run_config["solver"]["max_iters"] == 300


def test_default_seeds_are_permuted():
    """
    Asserts that the seeds of default.config are used when the file only names the image and the rate.
    """
    path = make_tmpfile({"image": "foo.pgm", "rate": [1.0, 2.0]})

    run_configs, _ = ConfigReader(path).gen_run_configs()

    assert len(run_configs) == 6
    assert sorted({c["seed"] for c in run_configs}) == [1, 2, 3]

    close_tmpfile(path)


def test_excluded_configs():
    """
    Asserts that exclude_configs removes every matching cell from the generated run configs.
    """
    config = {
        "image": ["a.pgm", "b.pgm"],
        "rate": [1.0, 2.0],
        "seed": [1, 2],
        "meta": {"exclude_configs": [{"image": "b.pgm"}, {"rate": 1.0, "seed": 2}]},
    }
    path = make_tmpfile(config)

    config_reader = ConfigReader(path)
    run_configs, _ = config_reader.gen_run_configs()

    excluded = config["meta"]["exclude_configs"]
    assert config_reader.meta_data["exclude_configs"] == excluded
    assert config_reader.meta_data["max_threads"] == 1

    cells = sorted((c["image"], c["rate"], c["seed"]) for c in run_configs)
    assert cells == [("a.pgm", 1.0, 1), ("a.pgm", 2.0, 1), ("a.pgm", 2.0, 2)]

    close_tmpfile(path)


def test_remove_completed_runs(log_basic_config_reader):
    """
    Asserts that a result row removes exactly the cell it came from.
    """
    config, config_reader = log_basic_config_reader

    row = {"image": "b.pgm", "rate": 2.0, "seed": 1, "method": "predictive"}
    config_reader.remove_completed_runs(row)
    run_configs, _ = config_reader.gen_run_configs()

    assert len(run_configs) == 7
    remaining = {(c["image"], c["rate"], c["seed"]) for c in run_configs}
    assert ("b.pgm", 2.0, 1) not in remaining

    config_reader.remove_completed_runs({"image": "c.pgm", "rate": 2.0, "seed": 1})
    run_configs, _ = config_reader.gen_run_configs()

    assert len(run_configs) == 7


def test_cell_name():
    config = {"image": "/data/images/lena.pgm", "rate": 1.5, "seed": 2}

    assert cell_name(config) == "lena.pgm @ 1.5 bpp, seed 2"
