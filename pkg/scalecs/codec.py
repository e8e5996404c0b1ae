# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 15 2021
import logging
import math
import struct
from collections import namedtuple
from enum import Enum, IntEnum

import numpy as np

from .image import downsample_block, psnr
from .preview import compute_preview, predict_full, predict_measurements
from .quant import (
    MAX_RATE,
    MIN_RATE,
    CompanderModel,
    EmbeddedCode,
    UniformModel,
    dequantize,
    fit_model,
    fit_uniform,
    plane_bytes,
    quantize,
    quantize_uniform,
)
from .recon import (
    TvProblem,
    TvSettings,
    calibrate_lambda,
    recover_base,
    recover_enhancement,
    solve_tv,
)
from .sensing import (
    Layer,
    MeasurementVector,
    RademacherOperator,
    SensingConfig,
    apply_augmented_dss,
    apply_rademacher,
    make_dss,
    make_enhancement,
)
from .transform import HadamardOrder

logger = logging.getLogger(__name__)

MAGIC = b"SCS1"
VERSION = 1
# uniformly quantized layers; the header is followed by _RANGES
UNIFORM_VERSION = 2

# magic, version, mode, width, height, base_width, base_height, preview_width, m_B,
# m_E, R_B, R_E, seed_B, seed_E, sigma_B, sigma_res, dc_value, interpolator id,
# hadamard ordering id
_HEADER = struct.Struct("<4sBBHHHHHIIBBQQfffBB")
HEADER_BYTES = _HEADER.size

_RANGES = struct.Struct("<ffff")

Header = namedtuple(
    "Header",
    [
        "version",
        "mode",
        "width",
        "height",
        "base_width",
        "base_height",
        "preview_width",
        "m_B",
        "m_E",
        "R_B",
        "R_E",
        "seed_B",
        "seed_E",
        "sigma_B",
        "sigma_res",
        "dc_value",
        "interpolator",
        "hadamard",
    ],
)

Ranges = namedtuple("Ranges", ["lo_B", "hi_B", "lo_res", "hi_res"])

Reconstruction = namedtuple("Reconstruction", ["base", "enhancement"])

RateReport = namedtuple(
    "RateReport",
    [
        "bpp_total",
        "bpp_net",
        "bpp_base",
        "bpp_enh",
        "header_bits",
        "padding_bits",
        "psnr_base",
        "psnr_enh",
    ],
)


class BitstreamError(ValueError):
    pass


class Mode(IntEnum):
    PREDICTIVE = 0
    SEPARATE = 1
    NONSCALABLE = 2


class Interpolator(IntEnum):
    BILINEAR = 0


class Quantizer(Enum):
    COMPANDED = "companded"
    UNIFORM = "uniform"


def _f32(value):
    return float(np.float32(value))


class ScalableBitstream:
    """
    Header plus embedded codes. The nonscalable variant carries no base code (m_B = 0, R_B = 0) and keeps its
    single layer in residual_code.

    Attributes
    ----------
    header: Header
        Fixed-size container header. R_E is the rate the layer was encoded at; residual_code may hold fewer planes
        after truncation.
    base_code: EmbeddedCode or None
        m_B base measurements at R_B bits.
    residual_code: EmbeddedCode or None
        Enhancement payload; None when only the base prefix is present.
    replica: numpy.ndarray or None
        Encoder-side y_pred, kept in memory only.
    ranges: Ranges or None
        Quantizer ranges of both layers, present only in uniformly quantized streams.
    """

    def __init__(self, header, base_code, residual_code, replica=None, ranges=None):
        self.header = header
        self.base_code = base_code
        self.residual_code = residual_code
        self.replica = replica
        self.ranges = ranges

    @property
    def mode(self):
        return Mode(self.header.mode)

    @property
    def scalable(self):
        return self.mode != Mode.NONSCALABLE

    @property
    def quantizer(self):
        if self.header.version == UNIFORM_VERSION:
            return Quantizer.UNIFORM
        return Quantizer.COMPANDED

    @property
    def side_info_bytes(self):
        """
        Bytes between the fixed header and the base layer.
        """
        return _RANGES.size if self.quantizer == Quantizer.UNIFORM else 0

    @property
    def width(self):
        return self.header.width

    @property
    def height(self):
        return self.header.height

    @property
    def n(self):
        return self.header.width * self.header.height

    @property
    def dc_value(self):
        return self.header.dc_value

    @property
    def sigma_B(self):
        return self.header.sigma_B

    @property
    def sigma_res(self):
        return self.header.sigma_res

    @property
    def residual_rate(self):
        """
        Bit-planes actually present in the enhancement payload.
        """
        return 0 if self.residual_code is None else self.residual_code.rate

    @property
    def config(self):
        """
        :rtype: SensingConfig
        """
        h = self.header
        if not self.scalable:
            raise ValueError("Nonscalable streams have no two-layer sensing config")
        if not (h.base_height and h.base_width >= h.preview_width > 0):
            raise ValueError("Base and preview resolutions must be nonzero and nested")
        s_pre = h.base_width // h.preview_width
        return SensingConfig(
            h.width,
            h.height,
            h.base_width,
            h.base_height,
            h.preview_width,
            h.base_height // s_pre,
            h.m_E,
            h.seed_B,
            h.seed_E,
        )

    def __eq__(self, other):
        if not isinstance(other, ScalableBitstream):
            return NotImplemented
        return (
            self.header == other.header
            and self.ranges == other.ranges
            and self.base_code == other.base_code
            and self.residual_code == other.residual_code
        )

    def __repr__(self):
        fmt = "ScalableBitstream({}, {}, {}x{}, m_B={}, m_E={}, R_B={}, R_E={})"
        return fmt.format(
            self.mode.name.lower(),
            self.quantizer.value,
            self.width,
            self.height,
            self.header.m_B,
            self.header.m_E,
            self.header.R_B,
            self.residual_rate,
        )


def _check_image(img, config):
    if (img.width, img.height) != (config.width, config.height):
        raise ValueError(
            "Image is {}x{} but the config expects {}x{}".format(
                img.width, img.height, config.width, config.height
            )
        )


def _check_rates(*rates):
    for rate in rates:
        if not (isinstance(rate, (int, np.integer)) and MIN_RATE <= rate <= MAX_RATE):
            raise ValueError(
                "Rates must be integers in [{}, {}], got {}".format(
                    MIN_RATE, MAX_RATE, rate
                )
            )


def _encode_layer(values, rate, quantizer=Quantizer.COMPANDED, fit_values=None):
    """
    Quantizes a layer with a float32-rounded model fitted to fit_values (default: the layer itself). Empty layers
    get a unit model.
    """
    fit_values = values if fit_values is None else fit_values

    if quantizer == Quantizer.UNIFORM:
        model = fit_uniform(fit_values).as_float32()
        return quantize_uniform(values, rate, model.lo, model.hi)

    model = CompanderModel(1.0)
    if fit_values.size:
        model = fit_model(fit_values).as_float32()
    return quantize(values, rate, model)


def dequantize_base(base_code, dc_value):
    """
    Dequantized base measurements with measurement 0 replaced by the transmitted DC value.

    :rtype: MeasurementVector
    """
    values = dequantize(base_code, Layer.BASE).values
    values[0] = dc_value
    return MeasurementVector(values, Layer.BASE)


def prediction_branch(base_code, dc_value, config):
    """
    Shared by encoder and decoder: dequantized base -> preview -> bilinear prediction -> y_pred = Phi_E pred.

    :return: y_pred and the enhancement operator.
    :rtype: (MeasurementVector, RademacherOperator)
    """
    base = dequantize_base(base_code, dc_value)
    preview = compute_preview(base, config)
    phi_E = make_enhancement(config)
    return predict_measurements(predict_full(preview, config), phi_E), phi_E


def _scalable_stream(img, config, R_B, R_E, mode, quantizer):
    _check_image(img, config)
    _check_rates(R_B, R_E)
    quantizer = Quantizer(quantizer)

    y_B = apply_augmented_dss(make_dss(config), img).values
    dc = _f32(y_B[0])
    base_code = _encode_layer(y_B, R_B, quantizer, fit_values=y_B[1:])

    replica = None
    if mode == Mode.PREDICTIVE:
        y_pred, phi_E = prediction_branch(base_code, dc, config)
        y_E = apply_rademacher(phi_E, img, config=config)
        layer = (y_E - y_pred).values
        replica = y_pred.values
    else:
        layer = apply_rademacher(make_enhancement(config), img, config=config).values

    residual_code = _encode_layer(layer, R_E, quantizer)

    ranges = None
    sigma_B = sigma_res = 0.0
    if quantizer == Quantizer.UNIFORM:
        base_model, res_model = base_code.model, residual_code.model
        ranges = Ranges(base_model.lo, base_model.hi, res_model.lo, res_model.hi)
    else:
        sigma_B, sigma_res = base_code.model.sigma, residual_code.model.sigma

    header = Header(
        VERSION if ranges is None else UNIFORM_VERSION,
        int(mode),
        config.width,
        config.height,
        config.base_width,
        config.base_height,
        config.preview_width,
        config.m_B,
        config.m_E,
        R_B,
        R_E,
        config.seed_B,
        config.seed_E,
        sigma_B,
        sigma_res,
        dc,
        int(Interpolator.BILINEAR),
        int(HadamardOrder.SYLVESTER),
    )
    stream = ScalableBitstream(header, base_code, residual_code, replica, ranges)

    logger.info(
        "Encoded %s %s stream %dx%d: m_B=%d R_B=%d m_E=%d R_E=%d, %.4f bpp net",
        mode.name.lower(),
        quantizer.value,
        config.width,
        config.height,
        config.m_B,
        R_B,
        config.m_E,
        R_E,
        (config.m_B * R_B + config.m_E * R_E) / config.n,
    )

    return stream


def encode(img, config, R_B, R_E, quantizer=Quantizer.COMPANDED):
    """
    Predictive two-layer encoder. The base layer is quantized and dequantized before the preview is formed, so the
    encoder predicts from exactly what the decoder will see.

    :param img: Full-resolution image.
    :type img: Image
    :type config: SensingConfig
    :param R_B: Bits per base measurement.
    :param R_E: Bits per residual measurement.
    :param quantizer: Companded (Gaussian CDF) or plain uniform quantization of both layers. Uniform streams carry
        each layer's [lo, hi] range after the header.
    :type quantizer: Quantizer or str
    :rtype: ScalableBitstream
    """
    return _scalable_stream(img, config, R_B, R_E, Mode.PREDICTIVE, quantizer)


def encode_separate(img, config, R_B, R_E, quantizer=Quantizer.COMPANDED):
    """
    Two layers without prediction: the enhancement measurements are quantized directly.

    :rtype: ScalableBitstream
    """
    return _scalable_stream(img, config, R_B, R_E, Mode.SEPARATE, quantizer)


def encode_nonscalable(img, m, R, seed):
    """
    Single Rademacher layer of m measurements at R bits.

    :rtype: ScalableBitstream
    """
    _check_rates(R)
    if not 1 <= m <= img.size:
        raise ValueError(
            "Nonscalable measurement count must lie in [1, {}], got {}".format(
                img.size, m
            )
        )

    phi = RademacherOperator(m, img.size, seed)
    code = _encode_layer(apply_rademacher(phi, img, layer=Layer.MONOLITHIC).values, R)

    header = Header(
        VERSION,
        int(Mode.NONSCALABLE),
        img.width,
        img.height,
        0,
        0,
        0,
        0,
        m,
        0,
        R,
        0,
        int(seed),
        0.0,
        code.model.sigma,
        0.0,
        int(Interpolator.BILINEAR),
        int(HadamardOrder.SYLVESTER),
    )

    logger.info(
        "Encoded nonscalable stream %dx%d: m=%d R=%d, %.4f bpp",
        img.width,
        img.height,
        m,
        R,
        m * R / img.size,
    )

    return ScalableBitstream(header, None, code)


def _require_scalable(stream):
    if not stream.scalable:
        raise ValueError("Expected a two-layer stream, got a nonscalable one")
    if stream.base_code is None:
        raise BitstreamError("Stream carries no base layer")


def decode_base(stream, settings=None):
    """
    :type stream: ScalableBitstream
    :type settings: TvSettings
    :return: The base_width x base_height reconstruction.
    :rtype: Image
    """
    _require_scalable(stream)
    settings = settings or TvSettings()
    config = stream.config

    base = dequantize_base(stream.base_code, stream.dc_value)
    code = stream.base_code
    lam = calibrate_lambda(code.model, code.rate, config.m_B, settings.lambda_scale)

    return recover_base(base, config, lam, settings)


def decoder_prediction(stream):
    """
    The decoder's y_pred, bitwise equal to the encoder's replica. Zero for separately encoded streams.

    :rtype: MeasurementVector
    """
    _require_scalable(stream)
    config = stream.config

    if stream.mode == Mode.SEPARATE:
        return MeasurementVector(np.zeros(config.m_E), Layer.ENHANCEMENT, config)
    return prediction_branch(stream.base_code, stream.dc_value, config)[0]


def decode_enhancement(stream, settings=None, joint=False):
    """
    Mirrors the encoder's prediction branch, adds the dequantized residuals back and reconstructs the
    full-resolution image. A residual payload cut on a bit-plane boundary decodes at the reduced rate.

    :param joint: Also enforce the base measurements through the augmented DSS operator.
    :type joint: bool
    :rtype: Image
    """
    _require_scalable(stream)
    if stream.residual_code is None:
        raise BitstreamError("Stream carries no enhancement bit-planes")

    settings = settings or TvSettings()
    config = stream.config
    code = stream.residual_code

    residual = dequantize(code, Layer.RESIDUAL)
    y_pred = decoder_prediction(stream)
    lam = calibrate_lambda(
        code.model, code.rate, max(config.m_E, 1), settings.lambda_scale
    )
    base = dequantize_base(stream.base_code, stream.dc_value) if joint else None

    return recover_enhancement(residual, y_pred, config, lam, settings, base=base)


def decode_nonscalable(stream, settings=None):
    """
    :rtype: Image
    """
    if stream.scalable:
        raise ValueError(
            "Expected a nonscalable stream, got {}".format(stream.mode.name.lower())
        )
    if stream.residual_code is None:
        raise BitstreamError("Stream carries no measurement bit-planes")

    settings = settings or TvSettings()
    h = stream.header
    code = stream.residual_code

    phi = RademacherOperator(h.m_E, stream.n, h.seed_E)
    lam = calibrate_lambda(code.model, code.rate, h.m_E, settings.lambda_scale)
    y = dequantize(code, Layer.MONOLITHIC)
    problem = TvProblem(
        phi, y, h.width, h.height, lam, settings.max_iters, settings.tol
    )

    return solve_tv(problem, settings).image


def decode(stream, settings=None):
    """
    Decodes every layer present in the stream.

    :rtype: Reconstruction
    """
    if not stream.scalable:
        return Reconstruction(None, decode_nonscalable(stream, settings))

    base = decode_base(stream, settings)
    enhancement = None
    if stream.residual_code is not None and stream.header.m_E > 0:
        enhancement = decode_enhancement(stream, settings)

    return Reconstruction(base, enhancement)


def truncate_stream(stream, bits):
    """
    Quality scalability: keeps the first bits residual bit-planes. Zero keeps only the base layer.

    :rtype: ScalableBitstream
    """
    if stream.residual_code is None or not 0 <= bits <= stream.residual_code.rate:
        raise ValueError(
            "Cannot keep {} of {} residual bit-planes".format(
                bits, stream.residual_rate
            )
        )
    if bits == 0 and not stream.scalable:
        raise ValueError("A nonscalable stream cannot drop all of its bit-planes")

    code = None
    if bits:
        residual = stream.residual_code
        code = EmbeddedCode(residual.planes[:bits], residual.model)
    return ScalableBitstream(
        stream.header, stream.base_code, code, stream.replica, stream.ranges
    )


def serialize(stream):
    """
    :rtype: bytes
    """
    parts = [_HEADER.pack(MAGIC, *stream.header)]
    if stream.ranges is not None:
        parts.append(_RANGES.pack(*stream.ranges))
    if stream.base_code is not None:
        parts.append(stream.base_code.to_bytes())
    if stream.residual_code is not None:
        parts.append(stream.residual_code.to_bytes())
    return b"".join(parts)


def _model(sigma, what):
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise BitstreamError("Invalid {} in header: {}".format(what, sigma))
    return CompanderModel(sigma)


def _range_model(lo, hi, what):
    try:
        return UniformModel(lo, hi)
    except ValueError:
        raise BitstreamError("Invalid {} range [{}, {}]".format(what, lo, hi))


def _parse_header(data):
    if len(data) < HEADER_BYTES:
        raise BitstreamError(
            "Truncated header: {} of {} bytes".format(len(data), HEADER_BYTES)
        )

    fields = _HEADER.unpack_from(data)
    if fields[0] != MAGIC:
        raise BitstreamError("Bad magic {!r}".format(fields[0]))

    header = Header(*fields[1:])
    if header.version not in (VERSION, UNIFORM_VERSION):
        raise BitstreamError("Unsupported version {}".format(header.version))
    if header.mode not in set(Mode):
        raise BitstreamError("Unsupported mode {}".format(header.mode))
    if header.version == UNIFORM_VERSION and header.mode == Mode.NONSCALABLE:
        raise BitstreamError("Uniform quantization needs a two-layer stream")
    if header.interpolator != Interpolator.BILINEAR:
        raise BitstreamError(
            "Unsupported interpolator id {}".format(header.interpolator)
        )
    if header.hadamard != HadamardOrder.SYLVESTER:
        raise BitstreamError(
            "Unsupported Hadamard ordering id {}".format(header.hadamard)
        )

    return header


def _layer_models(header, data):
    """
    Base and residual models, read from the header or from the range block that follows it.
    """
    if header.version == VERSION:
        base = None
        if header.mode != Mode.NONSCALABLE:
            base = _model(header.sigma_B, "sigma_B")
        return base, _model(header.sigma_res, "sigma_res"), None

    end = HEADER_BYTES + _RANGES.size
    if len(data) < end:
        raise BitstreamError(
            "Truncated quantizer ranges: {} of {} bytes".format(len(data), end)
        )
    ranges = Ranges(*_RANGES.unpack_from(data, HEADER_BYTES))
    base = _range_model(ranges.lo_B, ranges.hi_B, "base")
    return base, _range_model(ranges.lo_res, ranges.hi_res, "residual"), ranges


def parse(data):
    """
    Parses a container. A payload cut right after the base layer, or on any residual bit-plane boundary, is
    accepted; a cut inside the base layer or inside a residual plane is a BitstreamError.

    :type data: bytes
    :rtype: ScalableBitstream
    """
    header = _parse_header(data)
    base_model, res_model, ranges = _layer_models(header, data)
    offset = HEADER_BYTES + (0 if ranges is None else _RANGES.size)
    payload = memoryview(data)[offset:]

    base_code = None
    if header.mode != Mode.NONSCALABLE:
        stream = ScalableBitstream(header, None, None)
        try:
            config = stream.config
        except ValueError as e:
            raise BitstreamError("Invalid geometry in header: {}".format(e))
        if config.m_B != header.m_B:
            raise BitstreamError(
                "Header m_B={} does not match the preview area {}".format(
                    header.m_B, config.m_B
                )
            )
        if not MIN_RATE <= header.R_B <= MAX_RATE:
            raise BitstreamError("Invalid base rate {}".format(header.R_B))

        size = header.R_B * plane_bytes(header.m_B)
        if len(payload) < size:
            raise BitstreamError(
                "Truncated base layer: {} of {} bytes".format(len(payload), size)
            )

        base_code = EmbeddedCode.from_bytes(
            bytes(payload[:size]), header.R_B, header.m_B, base_model
        )
        payload = payload[size:]
    elif header.m_E == 0:
        raise BitstreamError("Nonscalable stream with no measurements")

    if not MIN_RATE <= header.R_E <= MAX_RATE:
        raise BitstreamError("Invalid enhancement rate {}".format(header.R_E))

    plane = plane_bytes(header.m_E)
    residual_code = None

    if plane == 0:
        if len(payload):
            raise BitstreamError(
                "{} trailing bytes after an empty enhancement layer".format(
                    len(payload)
                )
            )
        residual_code = EmbeddedCode(
            np.zeros((header.R_E, 0), dtype=np.uint8), res_model
        )
    elif len(payload):
        if len(payload) % plane:
            raise BitstreamError(
                "Enhancement payload of {} bytes ends inside a {}-byte "
                "bit-plane".format(len(payload), plane)
            )
        planes = len(payload) // plane
        if planes > header.R_E:
            raise BitstreamError(
                "{} bit-planes found, header allows {}".format(planes, header.R_E)
            )
        residual_code = EmbeddedCode.from_bytes(
            bytes(payload), planes, header.m_E, res_model
        )
    elif header.mode == Mode.NONSCALABLE:
        raise BitstreamError("Nonscalable stream with no measurement bit-planes")

    return ScalableBitstream(header, base_code, residual_code, ranges=ranges)


def write_stream(stream, path):
    data = serialize(stream)
    with open(path, "wb") as f:
        f.write(data)
    logger.info("Wrote %d bytes to %s", len(data), path)


def read_stream(path):
    with open(path, "rb") as f:
        return parse(f.read())


def rate_report(stream, original, reconstructions=None):
    """
    Exact bit accounting of a stream, plus PSNRs of whichever reconstructions are given. The base PSNR is measured
    against the block-mean downsampled original.

    :type stream: ScalableBitstream
    :type original: Image
    :param reconstructions: Decoded layers; missing layers report a PSNR of None.
    :type reconstructions: Reconstruction
    :rtype: RateReport
    """
    if (original.width, original.height) != (stream.width, stream.height):
        raise ValueError(
            "Original is {}x{} but the stream is {}x{}".format(
                original.width, original.height, stream.width, stream.height
            )
        )

    n = stream.n
    base_bits = stream.base_code.bit_count if stream.base_code is not None else 0
    enh_bits = stream.residual_code.bit_count if stream.residual_code is not None else 0
    total_bits = 8 * len(serialize(stream))
    header_bits = 8 * (HEADER_BYTES + stream.side_info_bytes)
    padding_bits = total_bits - header_bits - base_bits - enh_bits

    psnr_base = psnr_enh = None
    if reconstructions is not None:
        if reconstructions.base is not None:
            factor = original.width // reconstructions.base.width
            reference = downsample_block(original, factor)
            psnr_base = psnr(reference, reconstructions.base)
        if reconstructions.enhancement is not None:
            psnr_enh = psnr(original, reconstructions.enhancement)

    return RateReport(
        total_bits / n,
        (base_bits + enh_bits) / n,
        base_bits / n,
        enh_bits / n,
        header_bits,
        padding_bits,
        psnr_base,
        psnr_enh,
    )
