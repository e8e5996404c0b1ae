# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 18 2021
import copy
import itertools
import json
import logging
import os

DEFAULT_CONFIG = os.path.join(
    os.path.abspath(os.path.dirname(__file__)), "config", "default.config"
)


def merge_config(defaults, data):
    """
    Overlays data on defaults. Dictionary values are merged one level deep so a partial ``solver`` or ``meta``
    section keeps the remaining default keys.

    :rtype: dict
    """
    merged = copy.deepcopy(defaults)
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def read_config(fname=None):
    """
    Loads default.config, overlaid with the JSON file fname when given.

    :param fname: Optional user configuration file.
    :type fname: string
    :rtype: dict
    """
    with open(DEFAULT_CONFIG, "r") as f:
        defaults = json.load(f)

    if fname is None:
        return defaults

    with open(fname, "r") as f:
        data = json.load(f)

    return merge_config(defaults, data)


def expand_cells(data):
    """
    Expands every list-valued key of data into its own axis and returns one configuration per combination, in the
    key order of data, together with the names of the expanded keys.

    :param data: Experiment configuration.
    :type data: dict
    :rtype: list, set
    """
    axes = [
        (key, value if isinstance(value, list) else [value])
        for key, value in data.items()
    ]
    grid_keys = {key for key, value in data.items() if isinstance(value, list)}

    keys = [key for key, _ in axes]
    cells = [
        {key: copy.deepcopy(value) for key, value in zip(keys, combination)}
        for combination in itertools.product(*(values for _, values in axes))
    ]
    return cells, grid_keys


def _matches(cell, pattern, skip=("meta",)):
    # keys outside the cell, or explicitly skipped, never disqualify a match
    return all(
        cell[key] == value
        for key, value in pattern.items()
        if key in cell and key not in skip
    )


class ConfigReader:
    """
    Reads an experiment configuration and expands it into run cells.

    Attributes
    ----------
    filename: str
        Experiment configuration file.
    data: dict
        Configuration merged over the package defaults
    meta_data: dict
        The ``meta`` section (max_threads, exclude_configs).
    run_configs: List[dict]
        One configuration per (image, rate, seed) cell still to run.
    permutable_keys: Set[string]
        Keys whose list values were expanded into cells.

    Methods
    -------
    gen_run_configs():
        Returns the pending cells and the expanded keys.
    remove_completed_runs(run_dict):
        Drops the cell a finished result row belongs to.
    """

    # An experiment needs at least the images and the total-rate constraints to evaluate
    _REQUIRED_KEYS = ["image", "rate"]
    logger = logging.getLogger(__name__)

    def __init__(self, filename):
        self.filename = filename
        self.data, self.meta_data = self._load_config(filename)

        self.run_configs = []
        self.permutable_keys = set()
        self._generated = False

    def gen_run_configs(self):
        """
        Expands the configuration into cells once, dropping those matched by ``meta.exclude_configs``.

        :return: Pending cells (list), expanded keys (set)
        :rtype: list, set
        """
        if self._generated:
            return self.run_configs, self.permutable_keys

        cells, self.permutable_keys = expand_cells(self.data)

        excluded = self.meta_data.get("exclude_configs", [])
        kept = [
            cell
            for cell in cells
            if not any(_matches(cell, pattern, skip=()) for pattern in excluded)
        ]
        if len(kept) < len(cells):
            self.logger.info(
                "Excluded %d of %d cells via exclude_configs",
                len(cells) - len(kept),
                len(cells),
            )

        self.run_configs = kept
        self._generated = True
        return self.run_configs, self.permutable_keys

    def _validate_data(self, data, fname):
        missing = [key for key in self._REQUIRED_KEYS if key not in data]
        if missing:
            raise ValueError(
                "The configuration file '{}' is missing required keys: {}".format(
                    fname, missing
                )
            )

        experiment = data.get("experiment", {})
        for key in ("enh_bits", "nonscalable_bits"):
            if key in experiment and not experiment[key]:
                raise ValueError(
                    "The configuration file '{}' has an empty '{}' grid".format(
                        fname, key
                    )
                )

    def _load_config(self, fname):
        """
        Validates the raw file and merges it over default.config.

        :rtype: dict, dict
        """
        with open(fname) as f:
            self._validate_data(json.load(f), fname)

        data = read_config(fname)
        return data, data["meta"]

    def remove_completed_runs(self, run_dict):
        """
        Removes the first pending cell that agrees with run_dict on their shared keys, so a result row
        (image, rate, seed, method, ...) identifies its cell.

        :param run_dict: A finished result row.
        :type run_dict: dict
        """
        self.gen_run_configs()

        pending = (cell for cell in self.run_configs if _matches(run_dict, cell))
        done = next(pending, None)
        if done is not None:
            self.logger.debug("Skipping finished cell [%s]", cell_name(done))
            self.run_configs.remove(done)


def cell_name(config):
    return "{} @ {} bpp, seed {}".format(
        os.path.basename(str(config["image"])), config["rate"], config["seed"]
    )
