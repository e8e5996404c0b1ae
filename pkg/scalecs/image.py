# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 02 2021
import logging
import math
import re

import numpy as np

logger = logging.getLogger(__name__)

PEAK = 255.0

_PGM_HEADER = re.compile(
    rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s"
)


def is_power_of_two(value):
    return value >= 1 and (value & (value - 1)) == 0


class Image:
    """
    Immutable grayscale raster. Pixels are float64, stored row-major with shape (height, width).

    Attributes
    ----------
    width: int
        Pixel count along a row, power of two.
    height: int
        Pixel count along a column, power of two.
    pixels: numpy.ndarray
        Read-only (height, width) float64 array, nominal range [0, 255].
    """

    def __init__(self, pixels):
        """
        :param pixels: 2-D array-like of pixel intensities.
        :type pixels: numpy.ndarray
        """
        array = np.array(pixels, dtype=np.float64)

        if array.ndim != 2:
            raise ValueError(
                "Image pixels must be 2-D, got shape {}".format(array.shape)
            )

        height, width = array.shape
        if not (is_power_of_two(width) and is_power_of_two(height)):
            raise ValueError(
                "Image dimensions must be powers of two, got {}x{}".format(
                    width, height
                )
            )

        array.flags.writeable = False
        self.pixels = array

    @classmethod
    def from_vector(cls, values, width, height):
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ValueError(
                "Expected {} pixels for a {}x{} image, got {}".format(
                    width * height, width, height, values.size
                )
            )
        return cls(values.reshape(height, width))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def size(self):
        return self.pixels.size

    def ravel(self):
        """
        :return: A writable row-major copy of the pixels.
        :rtype: numpy.ndarray
        """
        return self.pixels.ravel().copy()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )

    def __repr__(self):
        return "Image({}x{})".format(self.width, self.height)


def load_pgm(path):
    """
    Reads a binary 8-bit PGM (P5) file.

    :param path: File to read.
    :type path: str
    :return: The decoded image.
    :rtype: Image
    """
    with open(path, "rb") as f:
        data = f.read()

    match = _PGM_HEADER.match(data)
    if not match:
        raise ValueError("'{}' is not a binary PGM (P5) file".format(path))

    width, height, maxval = (int(g) for g in match.groups())
    if maxval != 255:
        raise ValueError(
            "'{}' has maxval {}, only 255 is supported".format(path, maxval)
        )

    if not (is_power_of_two(width) and is_power_of_two(height)):
        raise ValueError(
            "'{}' is {}x{}, dimensions must be powers of two".format(
                path, width, height
            )
        )

    body = data[match.end() : match.end() + width * height]
    if len(body) != width * height:
        raise ValueError(
            "'{}' is truncated: expected {} pixel bytes, found {}".format(
                path, width * height, len(body)
            )
        )

    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    logger.debug("Loaded %s (%dx%d)", path, width, height)

    return Image(pixels)


def to_bytes(img):
    """
    Clamps to [0, 255] and rounds half-up to 8-bit integers.

    :rtype: numpy.ndarray
    """
    clamped = np.clip(img.pixels, 0.0, PEAK)
    return np.floor(clamped + 0.5).astype(np.uint8)


def save_pgm(img, path):
    """
    Writes the image as a binary PGM (P5), clamping and rounding half-up.

    :param img: Image to write.
    :type img: Image
    :param path: Destination file.
    :type path: str
    :return: None
    """
    header = "P5\n{} {}\n255\n".format(img.width, img.height).encode("ascii")

    with open(path, "wb") as f:
        f.write(header)
        f.write(to_bytes(img).tobytes())


def _check_factor(factor):
    if not is_power_of_two(int(factor)):
        raise ValueError(
            "Resampling factor must be a power of two, got {}".format(factor)
        )


def downsample_block(img, factor):
    """
    Block-mean downsampling: each output pixel is the mean of its factor x factor source block.

    :param img: Source image.
    :type img: Image
    :param factor: Block edge length, a power of two dividing both dimensions.
    :type factor: int
    :rtype: Image
    """
    _check_factor(factor)
    if img.width % factor or img.height % factor:
        raise ValueError(
            "Factor {} does not divide image dimensions {}x{}".format(
                factor, img.width, img.height
            )
        )

    blocks = img.pixels.reshape(
        img.height // factor, factor, img.width // factor, factor
    )
    return Image(blocks.mean(axis=(1, 3)))


def _bilinear_axis(length, factor):
    """
    Source indices and weights for center-aligned, edge-clamped linear interpolation along one axis.
    """
    coords = (np.arange(length * factor) + 0.5) / factor - 0.5
    coords = np.clip(coords, 0.0, length - 1)

    lower = np.floor(coords).astype(np.intp)
    upper = np.minimum(lower + 1, length - 1)
    weight = coords - lower

    return lower, upper, weight


def upsample_bilinear(img, factor):
    """
    Bilinear upsampling treating samples as block centers; coordinates outside the sample grid are clamped, so
    borders replicate edge values.

    :param img: Source image.
    :type img: Image
    :param factor: Upsampling factor, a power of two.
    :type factor: int
    :rtype: Image
    """
    _check_factor(factor)
    if factor == 1:
        return img

    r0, r1, wr = _bilinear_axis(img.height, factor)
    c0, c1, wc = _bilinear_axis(img.width, factor)

    p = img.pixels
    rows = p[r0, :] * (1.0 - wr)[:, None] + p[r1, :] * wr[:, None]
    out = rows[:, c0] * (1.0 - wc)[None, :] + rows[:, c1] * wc[None, :]

    return Image(out)


def crop_center(img, width, height):
    """
    Crops the central width x height window.

    :rtype: Image
    """
    if width > img.width or height > img.height:
        raise ValueError(
            "Cannot crop {}x{} out of {}x{}".format(
                width, height, img.width, img.height
            )
        )

    top = (img.height - height) // 2
    left = (img.width - width) // 2
    return Image(img.pixels[top : top + height, left : left + width])


def mse(reference, test):
    if (reference.width, reference.height) != (test.width, test.height):
        raise ValueError(
            "Image dimensions differ: {}x{} vs {}x{}".format(
                reference.width, reference.height, test.width, test.height
            )
        )
    diff = reference.pixels - test.pixels
    return float(np.mean(diff * diff))


def psnr(reference, test):
    """
    Peak signal-to-noise ratio with the peak fixed at 255, computed on unrounded pixels.

    :param reference: Reference image.
    :type reference: Image
    :param test: Image under test, same dimensions.
    :type test: Image
    :return: PSNR in decibels, ``math.inf`` for identical images.
    :rtype: float
    """
    error = mse(reference, test)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / error)


def format_psnr(value):
    return "inf" if math.isinf(value) else "{:.4f}".format(value)
