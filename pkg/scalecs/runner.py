# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 19 2021
import itertools
import json
import logging
import os
import threading
from collections import namedtuple
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from .codec import (
    Quantizer,
    Reconstruction,
    decode_base,
    decode_enhancement,
    decode_nonscalable,
    encode,
    encode_nonscalable,
    encode_separate,
    rate_report,
)
from .config_reader import ConfigReader, cell_name
from .image import crop_center, downsample_block, load_pgm
from .recon import TvSettings
from .sensing import SensingConfig, split_seed

logger = logging.getLogger(__name__)

METHODS = ("predictive", "separate", "nonscalable")
QUANTIZERS = tuple(q.value for q in Quantizer)

GRID_CSV = "grid.csv"
COMPARISON_CSV = "comparison.csv"
QUANTIZERS_CSV = "quantizers.csv"
GAINS_CSV = "gains.csv"
EXPERIMENT_JSON = "experiment.json"

GRID_COLUMNS = [
    "image",
    "rate",
    "seed",
    "method",
    "quantizer",
    "m_B",
    "R_B",
    "m",
    "R",
    "bpp_net",
    "bpp_total",
    "psnr",
]
COMPARISON_COLUMNS = ["image", "rate", "method", "m", "R", "bpp", "psnr", "seed"]
QUANTIZER_COLUMNS = [
    "image",
    "rate",
    "seed",
    "quantizer",
    "m",
    "R",
    "bpp",
    "psnr_base",
    "psnr_enh",
]

_FLOAT_FORMAT = "%.6f"

CellResult = namedtuple("CellResult", ["grid", "quantizers"])


def seconds_to_string(seconds):
    """
    Formats a duration as 'Xd Xh Xm Xs', leaving out leading zero units.

    :type seconds: float
    :rtype: string
    """
    minutes, secs = divmod(int(seconds), 60)
    hours, minutes = divmod(minutes, 60)
    days, hours = divmod(hours, 24)

    parts = list(zip((days, hours, minutes, secs), "dhms"))
    while len(parts) > 1 and parts[0][0] == 0:
        parts.pop(0)

    return " ".join("{}{}".format(value, unit) for value, unit in parts)


csv_lock = threading.Lock()


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


class ExperimentSpec:
    """
    Resolved comparison experiment.

    Attributes
    ----------
    images, rates, seeds: list
        Cells are their Cartesian product.
    width, height, s_base, s_pre: int
        Desk-scale geometry every image is fitted to.
    base_bits: int
        R_B of both two-layer methods; m_B is the preview area.
    enh_bits, nonscalable_bits: list
        Rate grids searched for the best combination. For each rate the measurement count is the largest one that
        fits the total-rate constraint.
    quantizers: list
        Quantizers the predictive codec is run with, companded first. Any further entry adds a quantizer
        comparison with base- and enhancement-layer PSNRs.
    log_dir: str
        Output directory.
    """

    def __init__(
        self,
        images,
        rates,
        seeds,
        width=128,
        height=128,
        s_base=2,
        s_pre=2,
        base_bits=5,
        enh_bits=(4, 5, 6, 7, 8, 9),
        nonscalable_bits=(4, 5, 6, 7, 8, 9),
        quantizers=(Quantizer.COMPANDED.value,),
        log_dir="results",
        settings=None,
        sensing=None,
    ):
        self.images = _as_list(images)
        self.rates = [float(r) for r in _as_list(rates)]
        self.seeds = [int(s) for s in _as_list(seeds)]
        self.width = int(width)
        self.height = int(height)
        self.s_base = int(s_base)
        self.s_pre = int(s_pre)
        self.base_bits = int(base_bits)
        self.enh_bits = [int(b) for b in enh_bits]
        self.nonscalable_bits = [int(b) for b in nonscalable_bits]
        self.log_dir = log_dir
        self.settings = settings or TvSettings()
        self.sensing = dict(sensing or {})

        requested = {Quantizer(q).value for q in _as_list(quantizers)}
        self.quantizers = [q for q in QUANTIZERS if q in requested | {"companded"}]

        if not (self.images and self.rates and self.seeds):
            raise ValueError("An experiment needs at least one image, rate and seed")

        # geometry check, raises on bad resolutions
        self.sensing_config(0, 0)

        for rate in self.rates:
            for method in METHODS:
                if not self.grid_points(method, rate):
                    raise ValueError(
                        "No {} grid point fits the total rate of {} bpp".format(
                            method, rate
                        )
                    )

    @classmethod
    def from_config(cls, data):
        """
        :param data: A configuration dictionary merged over the defaults, or one of its run configs.
        :type data: dict
        :rtype: ExperimentSpec
        """
        experiment = data.get("experiment", {})
        keys = ("base_bits", "enh_bits", "nonscalable_bits", "quantizers")
        return cls(
            data["image"],
            data["rate"],
            data.get("seed", 1),
            width=data.get("width", 128),
            height=data.get("height", 128),
            s_base=data.get("s_base", 2),
            s_pre=data.get("s_pre", 2),
            log_dir=data.get("log_dir", "results"),
            settings=TvSettings.from_config(data.get("solver", {})),
            sensing=data.get("sensing"),
            **{k: experiment[k] for k in keys if k in experiment}
        )

    @property
    def n(self):
        return self.width * self.height

    @property
    def m_B(self):
        side = self.s_base * self.s_pre
        return (self.width // side) * (self.height // side)

    @property
    def compares_quantizers(self):
        return len(self.quantizers) > 1

    def sensing_config(self, m_E, seed):
        seed_B, seed_E = split_seed(seed)
        return SensingConfig.for_image(
            self.width,
            self.height,
            m_E,
            seed_B,
            seed_E,
            s_base=self.s_base,
            s_pre=self.s_pre,
            **self.sensing
        )

    def pipelines(self):
        """
        (method, quantizer) pairs run in every cell: each method companded, then the predictive codec with every
        other quantizer.

        :rtype: list
        """
        companded = Quantizer.COMPANDED.value
        return [(method, companded) for method in METHODS] + [
            ("predictive", q) for q in self.quantizers if q != companded
        ]

    def grid_points(self, method, rate):
        """
        (m, R) pairs evaluated for one method under a total-rate constraint. m is the largest count whose payload
        fits rate * n bits, so every point is within one measurement's worth of bits of the constraint.

        :rtype: list
        """
        budget = rate * self.n
        points = []

        if method == "nonscalable":
            for bits in self.nonscalable_bits:
                m = min(self.n, int(budget // bits))
                if m >= 1:
                    points.append((m, bits))
        else:
            remaining = budget - self.m_B * self.base_bits
            for bits in self.enh_bits:
                m = min(self.n, int(remaining // bits)) if remaining > 0 else 0
                if m >= 1:
                    points.append((m, bits))

        return points

    def grid_lines(self):
        """
        The searched grid, one line per method and rate, as declared at the top of grid.csv.

        :rtype: list
        """
        lines = [
            "grid n={} m_B={} R_B={} quantizers={}".format(
                self.n, self.m_B, self.base_bits, ",".join(self.quantizers)
            )
        ]
        for method in METHODS:
            for rate in self.rates:
                points = " ".join(
                    "{}x{}".format(m, bits)
                    for m, bits in self.grid_points(method, rate)
                )
                lines.append("{} rate={!r}: {}".format(method, rate, points))
        return lines

    def to_dict(self):
        return {
            "images": self.images,
            "rates": self.rates,
            "seeds": self.seeds,
            "width": self.width,
            "height": self.height,
            "s_base": self.s_base,
            "s_pre": self.s_pre,
            "m_B": self.m_B,
            "base_bits": self.base_bits,
            "quantizers": self.quantizers,
            "grid": {
                method: {
                    str(rate): [list(p) for p in self.grid_points(method, rate)]
                    for rate in self.rates
                }
                for method in METHODS
            },
            "solver": vars(self.settings),
            "log_dir": self.log_dir,
        }


def fit_image(img, width, height):
    """
    Brings an image to the desk-scale geometry: block-mean downsampling by the largest power of two that keeps it at
    least width x height, then a center crop.

    :rtype: Image
    """
    factor = min(img.width // width, img.height // height)
    if factor < 1:
        raise ValueError(
            "Image {}x{} is smaller than {}x{}".format(
                img.width, img.height, width, height
            )
        )

    factor = 1 << (factor.bit_length() - 1)
    if factor > 1:
        img = downsample_block(img, factor)

    return crop_center(img, width, height)


def _encode_point(spec, img, seed, method, quantizer, m, bits):
    if method == "nonscalable":
        stream = encode_nonscalable(img, m, bits, split_seed(seed)[1])
        return stream, decode_nonscalable(stream, spec.settings)

    encoder = encode if method == "predictive" else encode_separate
    config = spec.sensing_config(m, seed)
    stream = encoder(img, config, spec.base_bits, bits, quantizer=quantizer)
    return stream, decode_enhancement(stream, spec.settings)


def _quantizer_row(spec, img, best):
    row, stream, recon = best
    base = decode_base(stream, spec.settings)
    report = rate_report(stream, img, Reconstruction(base, recon))
    return {
        "image": row["image"],
        "rate": row["rate"],
        "seed": row["seed"],
        "quantizer": row["quantizer"],
        "m": row["m"],
        "R": row["R"],
        "bpp": row["bpp_net"],
        "psnr_base": report.psnr_base,
        "psnr_enh": report.psnr_enh,
    }


def evaluate_cell(spec, image, rate, seed):
    """
    Encodes and decodes one image with every pipeline at every grid point of the rate constraint. When quantizers
    are compared, the best predictive point of each quantizer is also decoded at the base layer.

    :rtype: CellResult
    """
    img = fit_image(load_pgm(image), spec.width, spec.height)
    grid = []
    best = {}

    for method, quantizer in spec.pipelines():
        for m, bits in spec.grid_points(method, rate):
            stream, recon = _encode_point(spec, img, seed, method, quantizer, m, bits)
            report = rate_report(stream, img, Reconstruction(None, recon))
            row = {
                "image": image,
                "rate": rate,
                "seed": seed,
                "method": method,
                "quantizer": quantizer,
                "m_B": stream.header.m_B,
                "R_B": stream.header.R_B,
                "m": m,
                "R": bits,
                "bpp_net": report.bpp_net,
                "bpp_total": report.bpp_total,
                "psnr": report.psnr_enh,
            }
            grid.append(row)
            logger.debug(
                "%s: %s/%s m=%d R=%d -> %.2f dB",
                image,
                method,
                quantizer,
                m,
                bits,
                report.psnr_enh,
            )

            if method == "predictive":
                current = best.get(quantizer)
                if current is None or row["psnr"] > current[0]["psnr"]:
                    best[quantizer] = (row, stream, recon)

    quantizer_rows = []
    if spec.compares_quantizers:
        quantizer_rows = [_quantizer_row(spec, img, best[q]) for q in spec.quantizers]

    return CellResult(grid, quantizer_rows)


def best_rows(grid_rows):
    """
    Best companded grid point per method; ties keep the earliest point.

    :rtype: list
    """
    best = {}
    for row in grid_rows:
        if row.get("quantizer", Quantizer.COMPANDED.value) != Quantizer.COMPANDED.value:
            continue
        current = best.get(row["method"])
        if current is None or row["psnr"] > current["psnr"]:
            best[row["method"]] = row

    return [
        {
            "image": row["image"],
            "rate": row["rate"],
            "method": row["method"],
            "m": row["m"],
            "R": row["R"],
            "bpp": row["bpp_net"],
            "psnr": row["psnr"],
            "seed": row["seed"],
        }
        for row in (best[m] for m in METHODS if m in best)
    ]


def _exact_rates(df):
    # rates are cell keys; they must read back as the same float
    if "rate" not in df.columns or not len(df):
        return df
    return df.assign(rate=df["rate"].map(lambda r: repr(float(r))))


def read_results(fname):
    """
    Reads a result CSV, skipping the leading '#' lines that declare the grid.

    :rtype: pandas.DataFrame
    """
    with open(fname, "r", encoding="utf-8") as f:
        skip = sum(1 for _ in itertools.takewhile(lambda line: line.startswith("#"), f))
    return pd.read_csv(fname, skiprows=skip, float_precision="round_trip")


def append_csv(fname, rows, columns):
    """
    Appends rows to a CSV file under csv_lock, writing the header when the file is new.
    """
    df = _exact_rates(pd.DataFrame(rows, columns=columns))
    with csv_lock:
        exists = os.path.exists(fname)
        df.to_csv(
            fname,
            header=not exists,
            mode="a" if exists else "w",
            encoding="utf-8",
            index=False,
            float_format=_FLOAT_FORMAT,
            lineterminator="\n",
        )


def _sorted(df):
    df = df.copy()
    keys = ["image", "rate", "seed"]
    for column, order in (("method", METHODS), ("quantizer", QUANTIZERS)):
        if column in df.columns:
            df[column] = pd.Categorical(df[column], categories=order, ordered=True)
            keys.append(column)
    return df.sort_values(keys, kind="mergesort").reset_index(drop=True)


def _write_csv(df, fname, preamble=()):
    with open(fname, "w", encoding="utf-8", newline="") as f:
        for line in preamble:
            f.write("# {}\n".format(line))
        _exact_rates(df).to_csv(
            f, index=False, float_format=_FLOAT_FORMAT, lineterminator="\n"
        )


def summarize_quantizers(quantizers):
    """
    Base- and enhancement-layer PSNR of every quantizer averaged over seeds, and the companded quantizer's gain
    over the uniform one on both layers.

    :type quantizers: pandas.DataFrame
    :rtype: pandas.DataFrame
    """
    quantizers = quantizers.assign(quantizer=quantizers["quantizer"].astype(str))
    means = quantizers.pivot_table(
        index=["image", "rate"],
        columns="quantizer",
        values=["psnr_base", "psnr_enh"],
        aggfunc="mean",
    )

    summary = means.index.to_frame(index=False)
    for layer in ("base", "enh"):
        column = "psnr_{}".format(layer)
        summary["compander_gain_{}".format(layer)] = (
            means[(column, "companded")] - means[(column, "uniform")]
        ).to_numpy()
    return summary


def summarize_gains(comparison, quantizers=None):
    """
    PSNR per method averaged over seeds, the predictive gains over both baselines, and whether the gain over the
    nonscalable baseline grows with rate for each image. Quantizer rows, when given, add the compander gains.

    :type comparison: pandas.DataFrame
    :type quantizers: pandas.DataFrame
    :rtype: pandas.DataFrame
    """
    comparison = comparison.assign(method=comparison["method"].astype(str))
    means = comparison.pivot_table(
        index=["image", "rate"], columns="method", values="psnr", aggfunc="mean"
    )
    means = means.reindex(columns=list(METHODS)).reset_index()
    means.columns = ["image", "rate"] + ["psnr_{}".format(m) for m in METHODS]

    means["gain_vs_separate"] = means["psnr_predictive"] - means["psnr_separate"]
    means["gain_vs_nonscalable"] = means["psnr_predictive"] - means["psnr_nonscalable"]

    grows = {}
    for image, group in means.groupby("image"):
        gains = group.sort_values("rate")["gain_vs_nonscalable"].to_numpy()
        grows[image] = bool(np.all(np.diff(gains) >= 0))
    means["gain_grows_with_rate"] = means["image"].map(grows)

    if quantizers is not None and len(quantizers):
        compander = summarize_quantizers(quantizers)
        means = means.merge(compander, on=["image", "rate"], how="left")

    return means.sort_values(["image", "rate"], kind="mergesort").reset_index(drop=True)


class CellThread(threading.Thread):
    def __init__(self, id, spec, config):
        threading.Thread.__init__(self, daemon=True)

        self.thread_id = id
        self.spec = spec
        self.config = config
        self.name = "cell{}".format(id)

        self.result = CellResult([], [])
        self.error = None
        self.run_time = timedelta(0)

    def run(self):
        start_time = datetime.now()

        try:
            self.result = evaluate_cell(
                self.spec,
                self.config["image"],
                float(self.config["rate"]),
                int(self.config["seed"]),
            )
        except Exception as ex:
            logger.error("Cell [%s] failed: %s", cell_name(self.config), ex)
            self.error = ex

        self.run_time = datetime.now() - start_time


class Runner:
    """
    Runs every (image, rate, seed) cell of an experiment on a bounded number of threads. Results are flushed to
    grid.csv and comparison.csv as cells finish; cells already present in comparison.csv are skipped.
    """

    def __init__(self, config):
        """
        :type config: ConfigReader
        """
        self.config = config
        self.meta = config.meta_data
        self.spec = ExperimentSpec.from_config(config.data)
        self.log_dir = self.spec.log_dir

        if not os.path.exists(self.log_dir):
            os.makedirs(self.log_dir)

        self.run_configs, self.log_keys = self.config.gen_run_configs()
        self._remove_completed_runs()

    def _path(self, fname):
        return os.path.join(self.log_dir, fname)

    def _remove_completed_runs(self):
        path = self._path(COMPARISON_CSV)
        if os.path.exists(path):
            cells = read_results(path).drop_duplicates(["image", "rate", "seed"])
            logger.info(
                "Detected previous runs, removing %d configuration(s).", len(cells)
            )
            for _, row in cells.iterrows():
                self.config.remove_completed_runs(row.to_dict())

    def _get_max_threads(self):
        max_threads = max(1, int(self.meta.get("max_threads", 1)))
        cpus = os.cpu_count() or 1
        if max_threads > cpus:
            logger.warning(
                "Configured max_threads [%d] is higher than the number of CPUs [%d].",
                max_threads,
                cpus,
            )
        return max_threads

    def _record(self, thread):
        grid, quantizers = thread.result
        append_csv(self._path(GRID_CSV), grid, GRID_COLUMNS)
        append_csv(self._path(COMPARISON_CSV), best_rows(grid), COMPARISON_COLUMNS)
        if quantizers:
            append_csv(self._path(QUANTIZERS_CSV), quantizers, QUANTIZER_COLUMNS)

    def run(self):
        """
        :return: The sorted comparison table.
        :rtype: pandas.DataFrame
        """
        max_threads = self._get_max_threads()

        logger.info(
            "Generated %d unique combinations from configuration keys: %s",
            len(self.run_configs),
            str(sorted(self.log_keys)),
        )

        pending = list(self.run_configs)
        active = []
        run_times = []
        error = None
        thread_id = 0

        while (pending and error is None) or active:
            while pending and error is None and len(active) < max_threads:
                thread = CellThread(thread_id, self.spec, pending.pop(0))
                thread.start()
                active.append(thread)
                thread_id += 1

            active[0].join(0.1)

            for thread in [t for t in active if not t.is_alive()]:
                active.remove(thread)

                if thread.error is not None:
                    error = error or thread.error
                    continue

                self._record(thread)

                run_times.append(thread.run_time.total_seconds())
                avg_seconds = (sum(run_times) / len(run_times)) / max_threads
                logger.info(
                    "Cell %d [%s] finished - %s - %d configs remaining - "
                    "est. total time remaining: %s",
                    thread.thread_id,
                    cell_name(thread.config),
                    seconds_to_string(run_times[-1]),
                    len(pending),
                    seconds_to_string(avg_seconds * (len(pending) + len(active))),
                )

        if error is not None:
            logger.error(
                "Aborting, results of finished cells were kept in %s", self.log_dir
            )
            raise error

        return self.finalize()

    def _rewrite_sorted(self, fname, preamble=()):
        path = self._path(fname)
        if not os.path.exists(path):
            return None
        df = _sorted(read_results(path))
        _write_csv(df, path, preamble)
        return df

    def finalize(self):
        """
        Rewrites the CSV files in sorted order, grid.csv under a preamble declaring the searched grid, and writes
        the gain summary and the resolved experiment.

        :rtype: pandas.DataFrame
        """
        with csv_lock:
            self._rewrite_sorted(GRID_CSV, self.spec.grid_lines())
            comparison = self._rewrite_sorted(COMPARISON_CSV)
            quantizers = self._rewrite_sorted(QUANTIZERS_CSV)

        if comparison is None:
            comparison = pd.DataFrame(columns=COMPARISON_COLUMNS)

        if len(comparison):
            _write_csv(summarize_gains(comparison, quantizers), self._path(GAINS_CSV))

        with open(self._path(EXPERIMENT_JSON), "w") as f:
            json.dump(self.spec.to_dict(), f, indent=2, sort_keys=True)

        logger.info(
            "Wrote %d comparison rows to %s",
            len(comparison),
            self._path(COMPARISON_CSV),
        )

        comparison["method"] = comparison["method"].astype(str)
        return comparison


def run_comparison(config):
    """
    Runs a comparison experiment.

    :param config: Experiment configuration file or a loaded ConfigReader.
    :type config: string or ConfigReader
    :rtype: pandas.DataFrame
    """
    if not isinstance(config, ConfigReader):
        config = ConfigReader(config)
    return Runner(config).run()
