# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 02 2021
from enum import IntEnum

import numpy as np

from .image import is_power_of_two


class HadamardOrder(IntEnum):
    """
    Row ordering of the Hadamard matrix. The value is the id written into the bitstream header.
    """

    SYLVESTER = 0


def _check_length(m):
    if not is_power_of_two(m):
        raise ValueError(
            "Hadamard transform length must be a power of two, got {}".format(m)
        )


def fwht_inplace(buf):
    """
    Unnormalized Sylvester-ordered Walsh-Hadamard transform of a caller-owned float buffer, in place.

    :param buf: 1-D float array whose length is a power of two. Overwritten with H @ buf.
    :type buf: numpy.ndarray
    :return: buf
    """
    m = buf.shape[0]
    _check_length(m)

    h = 1
    while h < m:
        view = buf.reshape(-1, 2, h)
        top = view[:, 0, :].copy()
        view[:, 0, :] += view[:, 1, :]
        view[:, 1, :] = top - view[:, 1, :]
        h *= 2

    return buf


def fwht(v):
    """
    Computes H @ v for the Sylvester Hadamard matrix in O(m log m).

    :param v: Real vector, length a power of two.
    :type v: numpy.ndarray
    :rtype: numpy.ndarray
    """
    return fwht_inplace(np.array(v, dtype=np.float64))


def ifwht(v):
    """
    Computes H^-1 @ v = H @ v / m (the Sylvester matrix is symmetric).

    :rtype: numpy.ndarray
    """
    out = fwht(v)
    out /= out.shape[0]
    return out


def hadamard_matrix(m):
    """
    Dense Sylvester Hadamard matrix with integer entries.

    :param m: Order, a power of two.
    :type m: int
    :rtype: numpy.ndarray
    """
    _check_length(m)

    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < m:
        h = np.block([[h, h], [h, -h]])

    return h
