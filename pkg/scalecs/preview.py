# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 05 2021
import numpy as np

from .image import Image, upsample_bilinear
from .sensing import Layer, MeasurementVector, apply_rademacher
from .transform import ifwht


class Preview:
    """
    Low-resolution image obtained by inverting the Hadamard part of the base-layer measurements.

    Attributes
    ----------
    image: Image
        preview_width x preview_height image in pixel units.
    config: SensingConfig
        Configuration the base measurements were acquired with.
    """

    def __init__(self, image, config):
        if (image.width, image.height) != (config.preview_width, config.preview_height):
            raise ValueError(
                "Preview must be {}x{}, got {}x{}".format(
                    config.preview_width,
                    config.preview_height,
                    image.width,
                    image.height,
                )
            )
        self.image = image
        self.config = config


def compute_preview(y_B, config):
    """
    x_P = H^-1 y_B / s_pre^2, reshaped row-major to the preview grid.

    Callers on both sides of the channel pass dequantized base measurements so the encoder and decoder previews
    agree.

    :param y_B: Base-layer measurements (length m_B).
    :type y_B: MeasurementVector or numpy.ndarray
    :param config: Sensing configuration.
    :type config: SensingConfig
    :rtype: Preview
    """
    if isinstance(y_B, MeasurementVector):
        values = y_B.values
    else:
        values = np.asarray(y_B, dtype=np.float64)
    if values.shape != (config.m_B,):
        raise ValueError(
            "compute_preview expects {} base measurements, got {}".format(
                config.m_B, values.shape[0]
            )
        )

    pixels = ifwht(values) / (config.s_pre * config.s_pre)
    image = Image.from_vector(pixels, config.preview_width, config.preview_height)

    return Preview(image, config)


def predict_full(preview, config):
    """
    Bilinear interpolation of the preview up to full resolution.

    :rtype: Image
    """
    return upsample_bilinear(preview.image, config.s_pre * config.s_base)


def predict_measurements(pred, phi_E):
    """
    y_pred = Phi_E vec(pred).

    :param pred: Full-resolution prediction.
    :type pred: Image
    :param phi_E: Enhancement operator.
    :type phi_E: RademacherOperator
    :rtype: MeasurementVector
    """
    if pred.size != phi_E.shape[1]:
        raise ValueError(
            "Prediction has {} pixels, enhancement operator expects {}".format(
                pred.size, phi_E.shape[1]
            )
        )
    return apply_rademacher(phi_E, pred, layer=Layer.ENHANCEMENT)
