# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 04 2021
import logging
from enum import Enum

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .image import Image, is_power_of_two
from .transform import fwht

logger = logging.getLogger(__name__)

# float64 row caches larger than this are kept as int8 rows, or regenerated per
# application
DEFAULT_CACHE_BYTES = 768 * 1024 * 1024
DEFAULT_BLOCK_ROWS = 256

_SEED_LIMIT = 1 << 64


def split_seed(seed):
    """
    Derives the (seed_B, seed_E) pair used for one acquisition from a single user-facing seed.
    """
    seed = int(seed)
    if not 0 <= seed < _SEED_LIMIT:
        raise ValueError("seed must be an unsigned 64-bit integer, got {}".format(seed))
    return seed, (seed + 1) % _SEED_LIMIT


class Layer(Enum):
    BASE = "base"
    ENHANCEMENT = "enhancement"
    RESIDUAL = "residual"
    MONOLITHIC = "monolithic"


class SensingConfig:
    """
    Geometry and seeds of a two-layer acquisition. Fully determines every sensing operator.

    Attributes
    ----------
    width, height: int
        Full resolution; n = width * height.
    base_width, base_height: int
        Base-layer resolution; n_B = base_width * base_height.
    preview_width, preview_height: int
        Preview resolution; m_B = preview_width * preview_height.
    m_E: int
        Enhancement measurement count.
    seed_B, seed_E: int
        64-bit seeds of the DSS pattern F and of the enhancement matrix.
    s_pre: int
        Preview-to-base factor, sqrt(n_B / m_B).
    s_base: int
        Base-to-full factor, sqrt(n / n_B).
    """

    def __init__(
        self,
        width,
        height,
        base_width,
        base_height,
        preview_width,
        preview_height,
        m_E,
        seed_B,
        seed_E,
        cache_bytes=DEFAULT_CACHE_BYTES,
        block_rows=DEFAULT_BLOCK_ROWS,
    ):
        self.width = int(width)
        self.height = int(height)
        self.base_width = int(base_width)
        self.base_height = int(base_height)
        self.preview_width = int(preview_width)
        self.preview_height = int(preview_height)
        self.m_E = int(m_E)
        self.seed_B = int(seed_B)
        self.seed_E = int(seed_E)
        self.cache_bytes = cache_bytes
        self.block_rows = block_rows

        self._validate()

    @classmethod
    def for_image(cls, width, height, m_E, seed_B, seed_E, s_base=2, s_pre=2, **kwargs):
        """
        Builds the config for a full-resolution image with the given dyadic factors (default preset: 256x256 full,
        128x128 base, 64x64 preview).
        """
        base_width, base_height = width // s_base, height // s_base
        return cls(
            width,
            height,
            base_width,
            base_height,
            base_width // s_pre,
            base_height // s_pre,
            m_E,
            seed_B,
            seed_E,
            **kwargs
        )

    def _validate(self):
        dims = [
            self.width,
            self.height,
            self.base_width,
            self.base_height,
            self.preview_width,
            self.preview_height,
        ]
        if not all(is_power_of_two(d) for d in dims):
            raise ValueError(
                "All sensing resolutions must be powers of two, got {}".format(dims)
            )

        if self.width % self.base_width or self.height % self.base_height:
            raise ValueError("Base resolution must divide the full resolution")
        if (
            self.base_width % self.preview_width
            or self.base_height % self.preview_height
        ):
            raise ValueError("Preview resolution must divide the base resolution")

        if self.width // self.base_width != self.height // self.base_height:
            raise ValueError("Base downsampling factor must be equal along both axes")
        if (
            self.base_width // self.preview_width
            != self.base_height // self.preview_height
        ):
            raise ValueError(
                "Preview downsampling factor must be equal along both axes"
            )

        if self.s_pre < 2:
            raise ValueError(
                "Preview blocks must hold at least 4 base pixels (s_pre >= 2), "
                "got s_pre={}".format(self.s_pre)
            )
        if self.m_B < 4:
            raise ValueError("m_B must be at least 4, got {}".format(self.m_B))
        if self.m_E < 0 or self.m_E > self.n:
            raise ValueError("m_E must lie in [0, {}], got {}".format(self.n, self.m_E))

        for name in ("seed_B", "seed_E"):
            seed = getattr(self, name)
            if not 0 <= seed < _SEED_LIMIT:
                raise ValueError(
                    "{} must be an unsigned 64-bit integer, got {}".format(name, seed)
                )

    @property
    def n(self):
        return self.width * self.height

    @property
    def n_B(self):
        return self.base_width * self.base_height

    @property
    def m_B(self):
        return self.preview_width * self.preview_height

    @property
    def s_pre(self):
        return self.base_width // self.preview_width

    @property
    def s_base(self):
        return self.width // self.base_width

    def key(self):
        return (
            self.width,
            self.height,
            self.base_width,
            self.base_height,
            self.preview_width,
            self.preview_height,
            self.m_E,
            self.seed_B,
            self.seed_E,
        )

    def __eq__(self, other):
        if not isinstance(other, SensingConfig):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return (
            "SensingConfig(full={}x{}, base={}x{}, preview={}x{}, m_E={}, "
            "seed_B={}, seed_E={})".format(*self.key())
        )


class MeasurementVector:
    """
    Real measurement vector tagged with the layer it belongs to.
    """

    def __init__(self, values, layer, config=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.layer = Layer(layer)
        self.config = config

    def __len__(self):
        return self.values.shape[0]

    def __sub__(self, other):
        if len(self) != len(other):
            raise ValueError(
                "Cannot subtract measurement vectors of lengths {} and {}".format(
                    len(self), len(other)
                )
            )
        return MeasurementVector(
            self.values - other.values, Layer.RESIDUAL, self.config
        )

    def __repr__(self):
        return "MeasurementVector({}, {} values)".format(self.layer.value, len(self))


def row_generator(seed, row):
    """
    Independent Philox substream for one matrix row, keyed by (seed, row).

    :rtype: numpy.random.Generator
    """
    return np.random.Generator(np.random.Philox(key=(int(row) << 64) | int(seed)))


def rademacher_row(seed, row, cols):
    """
    Row of i.i.d. equiprobable +-1 entries.

    :rtype: numpy.ndarray (int8)
    """
    bits = row_generator(seed, row).integers(0, 2, size=cols, dtype=np.int8)
    return 2 * bits - 1


def dss_pattern_row(seed, row, base_width, base_height, s_pre):
    """
    Row of the DSS pattern F: within every s_pre x s_pre block exactly half the entries are +1 and half -1, so
    each block sums to zero and F @ D^T = 0.

    :rtype: numpy.ndarray (int8), length base_width * base_height in row-major pixel order
    """
    block = s_pre * s_pre
    rows_b, cols_b = base_height // s_pre, base_width // s_pre

    keys = row_generator(seed, row).random((rows_b * cols_b, block))
    order = np.argsort(keys, axis=1, kind="stable")
    entries = np.where(order < block // 2, 1, -1).astype(np.int8)

    return (
        entries.reshape(rows_b, cols_b, s_pre, s_pre)
        .transpose(0, 2, 1, 3)
        .reshape(base_height * base_width)
    )


class RandomRows:
    """
    Seeded +-1 matrix applied block-of-rows at a time. The storage tier is picked once from the matrix size:
    dense float64 if it fits in cache_bytes, int8 rows if those fit, otherwise rows are regenerated from their
    substreams on every application.
    """

    def __init__(
        self,
        shape,
        row_fn,
        cache_bytes=DEFAULT_CACHE_BYTES,
        block_rows=DEFAULT_BLOCK_ROWS,
    ):
        self.shape = shape
        self.row_fn = row_fn
        self.block_rows = max(1, int(block_rows))

        m, n = shape
        self._dense = None
        self._packed = None

        if m * n * 8 <= cache_bytes:
            self.tier = "dense"
            self._dense = self._generate(0, m).astype(np.float64)
        elif m * n <= cache_bytes:
            self.tier = "int8"
            self._packed = self._generate(0, m)
        else:
            self.tier = "stream"

        logger.debug("RandomRows %dx%d using %s tier", m, n, self.tier)

    def _generate(self, start, stop):
        rows = np.empty((stop - start, self.shape[1]), dtype=np.int8)
        for i in range(start, stop):
            rows[i - start] = self.row_fn(i)
        return rows

    def blocks(self):
        m = self.shape[0]
        for start in range(0, m, self.block_rows):
            stop = min(m, start + self.block_rows)
            if self._dense is not None:
                yield start, stop, self._dense[start:stop]
            elif self._packed is not None:
                yield start, stop, self._packed[start:stop].astype(np.float64)
            else:
                yield start, stop, self._generate(start, stop).astype(np.float64)

    def matvec(self, x):
        if self._dense is not None:
            return self._dense @ x

        out = np.empty(self.shape[0])
        for start, stop, block in self.blocks():
            out[start:stop] = block @ x
        return out

    def rmatvec(self, y):
        if self._dense is not None:
            return self._dense.T @ y

        out = np.zeros(self.shape[1])
        for start, stop, block in self.blocks():
            out += block.T @ y[start:stop]
        return out


def block_sum(x, width, height, factor):
    """
    D: sums factor x factor blocks of a row-major width x height raster.
    """
    blocks = x.reshape(height // factor, factor, width // factor, factor)
    return blocks.sum(axis=(1, 3)).ravel()


def replicate(z, width, height, factor):
    """
    D^T: replicates every sample of a row-major (width/factor) x (height/factor) raster into a factor x factor block.
    """
    grid = z.reshape(height // factor, width // factor)
    return np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1).ravel()


class DssOperator(LinearOperator):
    """
    Dual-scale sensing matrix Phi_B = H D + F acting on base-resolution images (m_B x n_B).

    D is the s_pre x s_pre block-sum downsampler, H the Sylvester Hadamard matrix of order m_B applied with the
    fast transform, and F a seeded zero-block-sum +-1 pattern.
    """

    def __init__(self, config):
        super().__init__(dtype=np.float64, shape=(config.m_B, config.n_B))
        self.config = config

        self.pattern = RandomRows(
            (config.m_B, config.n_B),
            lambda row: dss_pattern_row(
                config.seed_B, row, config.base_width, config.base_height, config.s_pre
            ),
            cache_bytes=config.cache_bytes,
            block_rows=config.block_rows,
        )

    def _matvec(self, x):
        c = self.config
        x = np.ravel(x)
        sums = block_sum(x, c.base_width, c.base_height, c.s_pre)
        return fwht(sums) + self.pattern.matvec(x)

    def _rmatvec(self, y):
        c = self.config
        y = np.ravel(y)
        spread = replicate(fwht(y), c.base_width, c.base_height, c.s_pre)
        return spread + self.pattern.rmatvec(y)


class AugmentedDssOperator(LinearOperator):
    """
    Phi_B widened to full resolution (m_B x n). The retained base pixels are the s_base x s_base block means;
    everything orthogonal to them is annihilated.
    """

    def __init__(self, dss):
        config = dss.config
        super().__init__(dtype=np.float64, shape=(config.m_B, config.n))
        self.config = config
        self.dss = dss

    def _matvec(self, x):
        c = self.config
        sums = block_sum(np.ravel(x), c.width, c.height, c.s_base)
        means = sums / (c.s_base * c.s_base)
        return self.dss.matvec(means)

    def _rmatvec(self, y):
        c = self.config
        back = self.dss.rmatvec(np.ravel(y)) / (c.s_base * c.s_base)
        return replicate(back, c.width, c.height, c.s_base)


class RademacherOperator(LinearOperator):
    """
    i.i.d. +-1 matrix whose row i is drawn from the Philox substream (seed, i).
    """

    def __init__(
        self,
        rows,
        cols,
        seed,
        cache_bytes=DEFAULT_CACHE_BYTES,
        block_rows=DEFAULT_BLOCK_ROWS,
    ):
        super().__init__(dtype=np.float64, shape=(int(rows), int(cols)))
        if not 0 <= int(seed) < _SEED_LIMIT:
            raise ValueError(
                "seed must be an unsigned 64-bit integer, got {}".format(seed)
            )

        self.seed = int(seed)
        self.rows = RandomRows(
            self.shape,
            lambda row: rademacher_row(self.seed, row, self.shape[1]),
            cache_bytes=cache_bytes,
            block_rows=block_rows,
        )

    def _matvec(self, x):
        return self.rows.matvec(np.ravel(x))

    def _rmatvec(self, y):
        return self.rows.rmatvec(np.ravel(y))


class StackedOperator(LinearOperator):
    """
    Operators with a common column count stacked on top of each other, e.g. the single acquisition matrix
    [augmented Phi_B; Phi_E]. Never materialized.
    """

    def __init__(self, operators):
        cols = {op.shape[1] for op in operators}
        if len(cols) != 1:
            raise ValueError(
                "Stacked operators must share a column count, got {}".format(
                    sorted(cols)
                )
            )

        self.operators = list(operators)
        self.offsets = np.cumsum([0] + [op.shape[0] for op in self.operators])
        super().__init__(dtype=np.float64, shape=(int(self.offsets[-1]), cols.pop()))

    def _matvec(self, x):
        return np.concatenate([op.matvec(np.ravel(x)) for op in self.operators])

    def _rmatvec(self, y):
        y = np.ravel(y)
        out = np.zeros(self.shape[1])
        for op, start, stop in zip(self.operators, self.offsets[:-1], self.offsets[1:]):
            out += op.rmatvec(y[start:stop])
        return out


def make_dss(config):
    """
    :param config: Sensing configuration.
    :type config: SensingConfig
    :rtype: DssOperator
    """
    return DssOperator(config)


def make_enhancement(config):
    """
    :return: Phi_E, an m_E x n Rademacher operator drawn from seed_E.
    :rtype: RademacherOperator
    """
    return RademacherOperator(
        config.m_E,
        config.n,
        config.seed_E,
        cache_bytes=config.cache_bytes,
        block_rows=config.block_rows,
    )


def _as_vector(x, length, what):
    if isinstance(x, Image):
        x = x.pixels
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != length:
        raise ValueError(
            "{} expects {} values, got {}".format(what, length, x.shape[0])
        )
    return x


def apply_dss(op, x_b):
    """
    y_B = Phi_B x_b for a base-resolution signal.

    :type op: DssOperator
    :param x_b: Base-resolution image or vector of length n_B.
    :rtype: MeasurementVector
    """
    x = _as_vector(x_b, op.shape[1], "apply_dss")
    return MeasurementVector(op.matvec(x), Layer.BASE, op.config)


def apply_augmented_dss(op, x):
    """
    y_B = augmented Phi_B x for a full-resolution image.

    :type op: DssOperator
    :param x: Full-resolution image or vector of length n.
    :rtype: MeasurementVector
    """
    augmented = AugmentedDssOperator(op)
    vec = _as_vector(x, augmented.shape[1], "apply_augmented_dss")
    return MeasurementVector(augmented.matvec(vec), Layer.BASE, op.config)


def apply_rademacher(op, x, layer=Layer.ENHANCEMENT, config=None):
    """
    y = Phi x for a Rademacher operator.

    :type op: RademacherOperator
    :param x: Image or vector of length op.shape[1].
    :rtype: MeasurementVector
    """
    vec = _as_vector(x, op.shape[1], "apply_rademacher")
    return MeasurementVector(op.matvec(vec), layer, config)


def apply_adjoint(op, y):
    """
    Phi^T y for any sensing operator.

    :param y: MeasurementVector or array of length op.shape[0].
    :rtype: numpy.ndarray
    """
    if isinstance(y, MeasurementVector):
        y = y.values
    vec = _as_vector(y, op.shape[0], "apply_adjoint")
    return op.rmatvec(vec)


def to_dense(op):
    """
    Materializes any operator column by column. Only meant for small test sizes.

    :rtype: numpy.ndarray
    """
    return np.column_stack([op.matvec(e) for e in np.eye(op.shape[1])])
