# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 08 2021
import math

import numpy as np
from scipy.special import erf, erfinv

from .sensing import Layer, MeasurementVector

MIN_RATE = 1
MAX_RATE = 16

_SQRT2 = math.sqrt(2.0)


class CompanderModel:
    """
    Zero-mean Gaussian model of a measurement vector. The compressor is the Gaussian CDF, the expander its inverse.

    Attributes
    ----------
    sigma: float
        Standard deviation of the measurements, > 0.
    mu: float
        Mean, fixed at 0.
    """

    kind = "gaussian"

    def __init__(self, sigma):
        sigma = float(sigma)
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise ValueError(
                "Compander sigma must be positive and finite, got {}".format(sigma)
            )
        self.sigma = sigma
        self.mu = 0.0

    def as_float32(self):
        """
        :return: The model with sigma rounded to the 32-bit value carried in the bitstream header.
        :rtype: CompanderModel
        """
        return CompanderModel(np.float32(self.sigma))

    def compress(self, y):
        t = np.asarray(y, dtype=np.float64) / (self.sigma * _SQRT2)
        # evaluated on |t| so that -y maps exactly to 1 - F(y)
        return 0.5 + 0.5 * np.sign(t) * erf(np.abs(t))

    def expand(self, u):
        s = 2.0 * np.asarray(u, dtype=np.float64) - 1.0
        return self.sigma * _SQRT2 * np.sign(s) * erfinv(np.abs(s))

    def quantization_mse(self, rate, samples_per_bin=64):
        """
        Mean squared error of the rate-bit companded quantizer on its own Gaussian source, evaluated on a
        deterministic quantile grid (the compressed source is uniform on [0, 1]).

        :rtype: float
        """
        levels = 1 << rate
        total = levels * samples_per_bin

        u = (np.arange(total) + 0.5) / total
        mids = (np.arange(total) // samples_per_bin + 0.5) / levels
        err = self.expand(u) - self.expand(mids)

        return float(np.mean(err * err))

    def equivalent_bin_width(self, rate):
        """
        Width of the uniform quantizer with the same MSE, sqrt(12 * MSE).

        :rtype: float
        """
        return math.sqrt(12.0 * self.quantization_mse(rate))

    def __eq__(self, other):
        return isinstance(other, CompanderModel) and self.sigma == other.sigma

    def __repr__(self):
        return "CompanderModel(sigma={!r})".format(self.sigma)


class UniformModel:
    """
    Affine map of [lo, hi] onto [0, 1]; values outside are clamped.
    """

    kind = "uniform"

    def __init__(self, lo, hi):
        lo, hi = float(lo), float(hi)
        if not (lo < hi and math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(
                "Uniform quantizer needs finite lo < hi, got [{}, {}]".format(lo, hi)
            )
        self.lo = lo
        self.hi = hi

    def as_float32(self):
        """
        :return: The model with both bounds rounded outward to the 32-bit values carried in the bitstream.
        :rtype: UniformModel
        """
        lo, hi = np.float32(self.lo), np.float32(self.hi)
        if lo > self.lo:
            lo = np.nextafter(lo, np.float32(-np.inf))
        if hi < self.hi:
            hi = np.nextafter(hi, np.float32(np.inf))
        return UniformModel(lo, hi)

    def compress(self, y):
        y = np.clip(np.asarray(y, dtype=np.float64), self.lo, self.hi)
        return (y - self.lo) / (self.hi - self.lo)

    def expand(self, u):
        return self.lo + np.asarray(u, dtype=np.float64) * (self.hi - self.lo)

    def equivalent_bin_width(self, rate):
        return (self.hi - self.lo) / (1 << rate)

    def __eq__(self, other):
        if not isinstance(other, UniformModel):
            return False
        return (self.lo, self.hi) == (other.lo, other.hi)

    def __repr__(self):
        return "UniformModel(lo={!r}, hi={!r})".format(self.lo, self.hi)


def _check_rate(rate, upper=MAX_RATE):
    if not (isinstance(rate, (int, np.integer)) and MIN_RATE <= rate <= upper):
        raise ValueError(
            "Rate must be an integer in [{}, {}], got {}".format(MIN_RATE, upper, rate)
        )


def plane_bytes(count):
    """
    Bytes taken by one packed bit-plane of count measurements.
    """
    return (count + 7) // 8


class EmbeddedCode:
    """
    Bit-plane-major quantization indices: plane 0 holds every measurement's MSB, plane rate-1 every LSB. Any
    prefix of whole planes is the code of the same quantizer at a lower rate.

    Attributes
    ----------
    rate: int
        Bits per measurement.
    count: int
        Number of measurements.
    planes: numpy.ndarray
        (rate, count) uint8 array of bits.
    model: CompanderModel or UniformModel
        Compressor/expander pair the indices refer to.
    """

    def __init__(self, planes, model):
        planes = np.asarray(planes, dtype=np.uint8)
        if planes.ndim != 2:
            raise ValueError(
                "Bit planes must be a (rate, count) array, got shape {}".format(
                    planes.shape
                )
            )
        _check_rate(planes.shape[0])

        planes.flags.writeable = False
        self.planes = planes
        self.model = model

    @classmethod
    def from_indices(cls, indices, rate, model):
        _check_rate(rate)
        indices = np.asarray(indices, dtype=np.uint32)
        shifts = np.arange(rate - 1, -1, -1, dtype=np.uint32)
        planes = (indices[None, :] >> shifts[:, None]) & 1
        return cls(planes.astype(np.uint8), model)

    @classmethod
    def from_bytes(cls, data, rate, count, model):
        """
        Unpacks rate byte-aligned MSB-first planes.

        :param data: Packed planes, exactly rate * plane_bytes(count) bytes.
        :type data: bytes
        :rtype: EmbeddedCode
        """
        size = plane_bytes(count)
        if len(data) != rate * size:
            raise ValueError(
                "Expected {} bytes for {} planes of {} bits, got {}".format(
                    rate * size, rate, count, len(data)
                )
            )

        packed = np.frombuffer(data, dtype=np.uint8).reshape(rate, size)
        planes = np.unpackbits(packed, axis=1)[:, :count]
        return cls(planes, model)

    @property
    def rate(self):
        return self.planes.shape[0]

    @property
    def count(self):
        return self.planes.shape[1]

    @property
    def bit_count(self):
        return self.rate * self.count

    @property
    def indices(self):
        shifts = np.arange(self.rate - 1, -1, -1, dtype=np.uint32)
        weights = np.left_shift(np.uint32(1), shifts)
        planes = self.planes.astype(np.uint32)
        return (planes * weights[:, None]).sum(axis=0, dtype=np.uint32)

    def to_bytes(self):
        """
        :return: Planes packed MSB-first, each plane padded with zero bits to a byte boundary.
        :rtype: bytes
        """
        return b"".join(np.packbits(plane).tobytes() for plane in self.planes)

    def __eq__(self, other):
        if not isinstance(other, EmbeddedCode):
            return NotImplemented
        return (
            self.model == other.model
            and self.planes.shape == other.planes.shape
            and np.array_equal(self.planes, other.planes)
        )

    def __repr__(self):
        return "EmbeddedCode(rate={}, count={}, model={!r})".format(
            self.rate, self.count, self.model
        )


def _values(y):
    if isinstance(y, MeasurementVector):
        return np.ravel(y.values)
    return np.ravel(np.asarray(y, dtype=np.float64))


def fit_model(y):
    """
    Zero-mean maximum-likelihood Gaussian fit, sigma = RMS of y. An all-zero vector falls back to sigma = 1.

    :param y: Measurements.
    :type y: MeasurementVector or numpy.ndarray
    :rtype: CompanderModel
    """
    values = _values(y)
    if values.size == 0:
        raise ValueError("Cannot fit a compander model to an empty vector")

    sigma = math.sqrt(float(np.mean(values * values)))
    return CompanderModel(sigma if sigma > 0.0 else 1.0)


def fit_uniform(y):
    """
    Range fit of the uniform quantizer, lo = min(y) and hi = max(y). A constant or empty vector gets a unit-wide
    range around its value.

    :rtype: UniformModel
    """
    values = _values(y)
    if values.size == 0:
        return UniformModel(-0.5, 0.5)

    lo, hi = float(values.min()), float(values.max())
    if not lo < hi:
        lo, hi = lo - 0.5, hi + 0.5
    return UniformModel(lo, hi)


def compress(y_i, model):
    """
    Gaussian CDF compressor F(y_i) = (1 + erf(y_i / sqrt(2 sigma^2))) / 2.
    """
    return model.compress(y_i)


def _quantize(values, rate, model):
    _check_rate(rate)
    levels = 1 << rate
    u = model.compress(values)
    indices = np.minimum(np.floor(u * levels), levels - 1).astype(np.uint32)
    return EmbeddedCode.from_indices(indices, rate, model)


def quantize(y, rate, model):
    """
    Companded scalar quantization: index = min(floor(F(y_i) * 2^R), 2^R - 1), stored bit-plane-major.

    :param y: Measurements.
    :type y: MeasurementVector or numpy.ndarray
    :param rate: Bits per measurement, 1..16.
    :type rate: int
    :param model: Compressor model.
    :type model: CompanderModel
    :rtype: EmbeddedCode
    """
    return _quantize(_values(y), rate, model)


def truncate(code, bits):
    """
    Keeps the first bits bit-planes.

    :rtype: EmbeddedCode
    """
    _check_rate(bits, upper=code.rate)
    return EmbeddedCode(code.planes[:bits], code.model)


def dequantize(code, layer=Layer.RESIDUAL):
    """
    Reconstructs each measurement at its bin midpoint in the compressed domain, mapped back through the
    expander.

    :type code: EmbeddedCode
    :param layer: Layer tag of the returned vector.
    :rtype: MeasurementVector
    """
    u = (code.indices.astype(np.float64) + 0.5) / (1 << code.rate)
    return MeasurementVector(code.model.expand(u), layer)


def quantize_uniform(y, rate, lo=None, hi=None):
    """
    Plain uniform scalar quantizer over [lo, hi] (default: the range of y) with midpoint reconstruction.

    :rtype: EmbeddedCode
    """
    values = _values(y)
    if lo is None or hi is None:
        fitted = fit_uniform(values)
        lo = fitted.lo if lo is None else lo
        hi = fitted.hi if hi is None else hi

    return _quantize(values, rate, UniformModel(lo, hi))
