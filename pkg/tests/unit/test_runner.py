# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 19 2021
import os
import threading

import numpy as np
import pandas as pd
import pytest

from scalecs.config_reader import read_config
from scalecs.image import Image
from scalecs.runner import (
    COMPARISON_COLUMNS,
    ExperimentSpec,
    append_csv,
    best_rows,
    fit_image,
    read_results,
    seconds_to_string,
    summarize_gains,
)
from tests.util import close_tmpfile, make_tmpdir


@pytest.fixture()
def spec():
    return ExperimentSpec(
        ["a.pgm"],
        [1.0],
        [7],
        width=32,
        height=32,
        base_bits=5,
        enh_bits=[4, 6],
        nonscalable_bits=[4, 8],
    )


@pytest.fixture()
def csv_dir():
    base_dir = make_tmpdir()
    yield base_dir
    close_tmpfile(base_dir)


def _grid_row(method, m, R, psnr, quantizer="companded", rate=1.0, seed=1):
    return {
        "image": "a.pgm",
        "rate": rate,
        "seed": seed,
        "method": method,
        "quantizer": quantizer,
        "m_B": 64,
        "R_B": 5,
        "m": m,
        "R": R,
        "bpp_net": m * R / 1024.0,
        "bpp_total": m * R / 1024.0 + 0.5,
        "psnr": psnr,
    }


def _comparison_row(seed, rate=1.0):
    return {
        "image": "a",
        "rate": rate,
        "method": "predictive",
        "m": 176,
        "R": 4,
        "bpp": 0.5,
        "psnr": 30.0,
        "seed": seed,
    }


@pytest.mark.parametrize(
    "seconds,expected",
    [(34, "34s"), (124, "2m 4s"), (7224, "2h 0m 24s"), (178560, "2d 1h 36m 0s")],
)
def test_seconds_to_string(seconds, expected):
    """
    Assert that durations drop their leading zero units.
    """
    assert expected == seconds_to_string(seconds)


def test_grid_points(spec):
    """
    Assert that each grid point spends as many measurements as fit the total rate,
    after the base layer for the two-layer methods.
    """
    assert spec.n == 1024
    assert spec.m_B == 64

    assert spec.grid_points("predictive", 1.0) == [(176, 4), (117, 6)]
    assert spec.grid_points("separate", 1.0) == [(176, 4), (117, 6)]
    assert spec.grid_points("nonscalable", 1.0) == [(256, 4), (128, 8)]

    for m, bits in spec.grid_points("predictive", 1.0):
        assert spec.m_B * spec.base_bits + m * bits <= spec.n
        assert spec.m_B * spec.base_bits + (m + 1) * bits > spec.n


def test_grid_points_cap_at_pixel_count(spec):
    assert spec.grid_points("nonscalable", 16.0) == [(1024, 4), (1024, 8)]


def test_grid_lines(spec):
    assert spec.grid_lines() == [
        "grid n=1024 m_B=64 R_B=5 quantizers=companded",
        "predictive rate=1.0: 176x4 117x6",
        "separate rate=1.0: 176x4 117x6",
        "nonscalable rate=1.0: 256x4 128x8",
    ]


def test_spec_rejects_rate_below_base_layer():
    """
    Assert that a total rate the base layer alone exceeds is rejected up front.
    """
    with pytest.raises(ValueError, match="predictive"):
        ExperimentSpec(["a.pgm"], [0.25], [1], width=32, height=32)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"images": []},
        {"seeds": []},
        {"width": 24},
        {"s_pre": 1},
        {"quantizers": ["lloyd"]},
    ],
)
def test_spec_validation(kwargs):
    args = {"images": ["a.pgm"], "rates": [1.0], "seeds": [1]}
    args.update(width=32, height=32)
    args.update(kwargs)

    with pytest.raises(ValueError):
        ExperimentSpec(**args)


@pytest.mark.parametrize(
    "quantizers, expected",
    [
        (["companded"], ["companded"]),
        (["uniform"], ["companded", "uniform"]),
        (["uniform", "companded", "uniform"], ["companded", "uniform"]),
        ("uniform", ["companded", "uniform"]),
    ],
)
def test_quantizers_always_include_companded(quantizers, expected):
    spec = ExperimentSpec(
        ["a.pgm"], [1.0], [1], width=32, height=32, quantizers=quantizers
    )

    assert spec.quantizers == expected
    assert spec.compares_quantizers == (len(expected) > 1)


def test_pipelines(spec):
    """
    Assert that every method runs companded and only the predictive codec is rerun with
    the other quantizers.
    """
    companded = [("predictive", "companded"), ("separate", "companded")]
    companded.append(("nonscalable", "companded"))
    assert spec.pipelines() == companded

    both = ExperimentSpec(
        ["a.pgm"], [1.0], [1], width=32, height=32, quantizers=["companded", "uniform"]
    )
    assert both.pipelines() == companded + [("predictive", "uniform")]


def test_spec_from_config():
    """
    Assert that the experiment is resolved from a configuration merged over
    default.config.
    """
    data = read_config()
    data.update({"image": "a.pgm", "rate": [1.0, 2.0], "width": 32, "height": 32})
    data["solver"]["max_iters"] = 25
    data["experiment"]["quantizers"] = ["uniform"]

    spec = ExperimentSpec.from_config(data)

    assert spec.images == ["a.pgm"]
    assert spec.rates == [1.0, 2.0]
    assert spec.seeds == [1, 2, 3]
    assert spec.base_bits == 5
    assert spec.enh_bits == [4, 5, 6, 7, 8, 9]
    assert spec.quantizers == ["companded", "uniform"]
    assert spec.settings.max_iters == 25
    assert spec.log_dir == "results"


def test_default_config_is_companded_only():
    data = read_config()
    data.update({"image": "a.pgm", "rate": 1.0, "width": 32, "height": 32})

    assert ExperimentSpec.from_config(data).quantizers == ["companded"]


def test_sensing_config_splits_seed(spec):
    config = spec.sensing_config(117, 7)

    assert (config.seed_B, config.seed_E) == (7, 8)
    assert (config.base_width, config.preview_width, config.m_E) == (16, 8, 117)
    assert config.m_B == spec.m_B


def test_to_dict(spec):
    declared = spec.to_dict()

    assert declared["m_B"] == 64
    assert declared["quantizers"] == ["companded"]
    assert declared["grid"]["predictive"]["1.0"] == [[176, 4], [117, 6]]
    assert declared["grid"]["nonscalable"]["1.0"] == [[256, 4], [128, 8]]
    assert declared["solver"]["max_iters"] == spec.settings.max_iters


def test_best_rows():
    """
    Assert that the best grid point per method is kept, ties resolved to the earliest
    point.
    """
    rows = [
        _grid_row("predictive", 176, 4, 30.0),
        _grid_row("predictive", 117, 6, 31.5),
        _grid_row("separate", 176, 4, 28.0),
        _grid_row("separate", 117, 6, 28.0),
        _grid_row("nonscalable", 256, 4, 27.0),
        _grid_row("nonscalable", 128, 8, 26.0),
    ]

    best = best_rows(rows)

    assert [row["method"] for row in best] == ["predictive", "separate", "nonscalable"]
    assert [(row["m"], row["R"]) for row in best] == [(117, 6), (176, 4), (256, 4)]
    assert best[0]["bpp"] == pytest.approx(117 * 6 / 1024.0)
    assert set(best[0]) == set(COMPARISON_COLUMNS)


def test_best_rows_ignore_uniform_streams():
    """
    Assert that a better uniform point never enters the method comparison.
    """
    rows = [
        _grid_row("predictive", 176, 4, 30.0),
        _grid_row("predictive", 117, 6, 35.0, quantizer="uniform"),
        _grid_row("separate", 176, 4, 28.0),
    ]

    best = best_rows(rows)

    assert [(row["method"], row["psnr"]) for row in best] == [
        ("predictive", 30.0),
        ("separate", 28.0),
    ]


def _gain_rows(psnrs):
    rows = []
    for (image, rate), values in psnrs.items():
        for seed, offset in ((1, -0.5), (2, 0.5)):
            for method, value in zip(("predictive", "separate", "nonscalable"), values):
                row = {"image": image, "rate": rate, "method": method, "seed": seed}
                rows.append(dict(row, psnr=value + offset))
    return pd.DataFrame(rows)


def test_summarize_gains():
    """
    Assert that gains are averaged over seeds and that growth with rate is detected per
    image.
    """
    gains = summarize_gains(
        _gain_rows(
            {
                ("a", 1.0): (30.0, 28.0, 27.0),
                ("a", 2.0): (36.0, 33.0, 32.0),
                ("b", 1.0): (30.0, 29.0, 25.0),
                ("b", 2.0): (33.0, 32.0, 30.0),
            }
        )
    )

    assert list(gains["image"]) == ["a", "a", "b", "b"]
    np.testing.assert_allclose(gains["psnr_predictive"], [30.0, 36.0, 30.0, 33.0])
    np.testing.assert_allclose(gains["gain_vs_separate"], [2.0, 3.0, 1.0, 1.0])
    np.testing.assert_allclose(gains["gain_vs_nonscalable"], [3.0, 4.0, 5.0, 3.0])
    assert list(gains["gain_grows_with_rate"]) == [True, True, False, False]
    assert "compander_gain_enh" not in gains.columns


def test_summarize_compander_gains():
    """
    Assert that quantizer rows add the seed-averaged companded minus uniform PSNR of
    both layers.
    """
    comparison = _gain_rows(
        {("a", 1.0): (30.0, 28.0, 27.0), ("a", 2.0): (36.0, 33.0, 32.0)}
    )
    rows = []
    for rate, (base, enh) in ((1.0, (1.0, 2.0)), (2.0, (-0.5, 3.0))):
        for seed in (1, 2):
            common = {"image": "a", "rate": rate, "seed": seed}
            common.update(m=100, R=5, bpp=0.5)
            rows.append(
                dict(common, quantizer="uniform", psnr_base=25.0, psnr_enh=28.0)
            )
            rows.append(
                dict(
                    common,
                    quantizer="companded",
                    psnr_base=25.0 + base + seed - 1.5,
                    psnr_enh=28.0 + enh,
                )
            )

    gains = summarize_gains(comparison, pd.DataFrame(rows))

    np.testing.assert_allclose(gains["compander_gain_base"], [1.0, -0.5])
    np.testing.assert_allclose(gains["compander_gain_enh"], [2.0, 3.0])
    np.testing.assert_allclose(gains["gain_vs_separate"], [2.0, 3.0])


def test_fit_image():
    """
    Assert that large images are block-averaged by a power of two and center cropped.
    """
    pixels = np.arange(64 * 128, dtype=np.float64).reshape(64, 128)
    fitted = fit_image(Image(pixels), 32, 32)

    assert (fitted.width, fitted.height) == (32, 32)
    # 2x2 block mean of rows 0..1, columns 32..33 of the original
    assert fitted.pixels[0, 0] == pytest.approx(pixels[0:2, 32:34].mean())

    same = Image(pixels[:32, :32])
    assert fit_image(same, 32, 32) == same

    with pytest.raises(ValueError):
        fit_image(Image(pixels[:16, :64]), 32, 32)


def test_append_csv_is_thread_safe(csv_dir):
    """
    Assert that concurrent appends write a single header and every row.
    """
    fname = os.path.join(csv_dir, "comparison.csv")

    def thread_function(num):
        append_csv(fname, [_comparison_row(num)], COMPARISON_COLUMNS)

    threads = [threading.Thread(target=thread_function, args=(i,)) for i in range(10)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    df = read_results(fname)

    assert list(df.columns) == COMPARISON_COLUMNS
    assert sorted(df["seed"]) == list(range(10))


def test_append_csv_writes_exact_rates(csv_dir):
    """
    Assert that rates are written so they read back as the same float, while other
    floats keep six decimals.
    """
    fname = os.path.join(csv_dir, "comparison.csv")
    rates = [1.0000001, 0.1 + 0.2, 2.0]

    rows = [_comparison_row(seed, rate=rate) for seed, rate in enumerate(rates)]
    append_csv(fname, rows, COMPARISON_COLUMNS)

    with open(fname) as f:
        lines = f.read().splitlines()
    assert lines[1].startswith("a,1.0000001,predictive,176,4,0.500000,30.000000,0")
    assert list(read_results(fname)["rate"]) == rates


def test_read_results_skips_preamble(csv_dir):
    fname = os.path.join(csv_dir, "grid.csv")
    with open(fname, "w") as f:
        f.write("# grid n=1024\n# predictive rate=1.0: 176x4\nimage,rate\na,1.0\n")

    df = read_results(fname)

    assert list(df.columns) == ["image", "rate"]
    assert list(df["rate"]) == [1.0]
