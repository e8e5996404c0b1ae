# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 22 2021
import json
import logging
import logging.config
import math
import os
import sys
from argparse import ArgumentParser
from datetime import datetime

from .codec import (
    Mode,
    Quantizer,
    decode_base,
    decode_enhancement,
    decode_nonscalable,
    dequantize_base,
    encode,
    encode_nonscalable,
    encode_separate,
    read_stream,
    truncate_stream,
    write_stream,
)
from .config_reader import read_config
from .image import format_psnr, is_power_of_two, load_pgm, psnr, save_pgm
from .preview import compute_preview
from .recon import TvSettings
from .runner import run_comparison, seconds_to_string
from .sensing import SensingConfig, split_seed

logger = logging.getLogger(__name__)

date_format = "%Y-%m-%d %H:%M:%S"


def _load_logging_config(log_config=None):
    if not log_config:
        log_fname = os.path.join(
            os.path.abspath(os.path.dirname(__file__)), "config", "logging.config"
        )
    else:
        log_fname = log_config

    try:
        with open(log_fname, "r") as f:
            data = json.load(f)
        logging.config.dictConfig(data)
    except (ValueError, OSError) as ex:
        logging.basicConfig(
            format="%(asctime)s.%(msecs)03d: %(name)s] %(message)s",
            datefmt=date_format,
            level=logging.DEBUG,
        )
        logger.error(ex)


def _settings(args):
    return TvSettings.from_config(read_config(args.config_path)["solver"])


def _sensing_config(img, args):
    if img.width != img.height:
        raise ValueError(
            "Two-layer encoding needs a square image, got {}x{}".format(
                img.width, img.height
            )
        )

    base_side = img.width // args.s_base
    if args.m_B is None:
        # preview at half the base resolution
        preview_side = base_side // 2
    else:
        preview_side = math.isqrt(args.m_B)
        if preview_side * preview_side != args.m_B or not is_power_of_two(preview_side):
            raise ValueError(
                "--mb must be the square of a power of two, got {}".format(args.m_B)
            )

    if preview_side < 1 or base_side < preview_side or base_side % preview_side:
        raise ValueError(
            "A {}x{} preview does not fit the {}x{} base layer".format(
                preview_side, preview_side, base_side, base_side
            )
        )

    sensing = read_config(args.config_path)["sensing"]
    seed_B, seed_E = split_seed(args.seed)
    return SensingConfig.for_image(
        img.width,
        img.height,
        args.m_E,
        seed_B,
        seed_E,
        s_base=args.s_base,
        s_pre=base_side // preview_side,
        **sensing
    )


def cmd_encode(args):
    img = load_pgm(args.input)

    if args.mode == "nonscalable":
        if Quantizer(args.quantizer) != Quantizer.COMPANDED:
            raise ValueError("Nonscalable streams are always companded")
        stream = encode_nonscalable(img, args.m_E, args.R_E, split_seed(args.seed)[1])
    else:
        encoder = encode if args.mode == "predictive" else encode_separate
        config = _sensing_config(img, args)
        stream = encoder(img, config, args.R_B, args.R_E, quantizer=args.quantizer)

    write_stream(stream, args.output)
    return 0


def cmd_decode(args):
    stream = read_stream(args.input)
    settings = _settings(args)

    if args.bits is not None:
        stream = truncate_stream(stream, args.bits)

    if stream.mode == Mode.NONSCALABLE:
        if not args.output:
            raise ValueError("Nonscalable streams need --out")
        save_pgm(decode_nonscalable(stream, settings), args.output)
        return 0

    if not (args.base or args.output):
        raise ValueError("Nothing to decode, pass --base and/or --out")

    if args.base:
        save_pgm(decode_base(stream, settings), args.base)
        logger.info("Wrote base layer to %s", args.base)
    if args.output:
        save_pgm(decode_enhancement(stream, settings, joint=args.joint), args.output)
        logger.info("Wrote enhancement layer to %s", args.output)

    return 0


def cmd_preview(args):
    stream = read_stream(args.input)
    if stream.mode == Mode.NONSCALABLE:
        raise ValueError("Nonscalable streams carry no preview")
    if stream.base_code is None:
        raise ValueError("Stream carries no base layer")

    base = dequantize_base(stream.base_code, stream.dc_value)
    preview = compute_preview(base, stream.config)
    save_pgm(preview.image, args.output)
    logger.info(
        "Wrote %dx%d preview to %s",
        preview.image.width,
        preview.image.height,
        args.output,
    )
    return 0


def cmd_eval(args):
    value = psnr(load_pgm(args.reference), load_pgm(args.test))
    print(format_psnr(value))
    return 0


def cmd_compare(args):
    comparison = run_comparison(args.experiment)
    logger.info("Comparison finished with %d rows", len(comparison))
    return 0


def build_parser():
    parser = ArgumentParser(
        prog="scalecs", description="Scalable compressive imaging codec"
    )
    parser.add_argument("--log_config", dest="log_config", default=None)
    subparsers = parser.add_subparsers(dest="command")
    subparsers.required = True

    enc = subparsers.add_parser("encode", help="Encode a PGM image into a stream")
    enc.add_argument("--in", dest="input", required=True)
    enc.add_argument("--out", dest="output", required=True)
    enc.add_argument(
        "--mode",
        choices=["predictive", "separate", "nonscalable"],
        default="predictive",
    )
    enc.add_argument(
        "--quantizer",
        choices=[q.value for q in Quantizer],
        default=Quantizer.COMPANDED.value,
        help="Quantizer of both layers",
    )
    enc.add_argument(
        "--mb",
        dest="m_B",
        type=int,
        default=None,
        help="Base measurements (preview area)",
    )
    enc.add_argument(
        "--me",
        dest="m_E",
        type=int,
        required=True,
        help="Enhancement (or nonscalable) measurements",
    )
    enc.add_argument("--rb", dest="R_B", type=int, default=5)
    enc.add_argument("--re", dest="R_E", type=int, required=True)
    enc.add_argument("--seed", type=int, default=1)
    enc.add_argument("--sbase", dest="s_base", type=int, default=2)
    enc.add_argument("--config", dest="config_path", default=None)
    enc.set_defaults(func=cmd_encode)

    dec = subparsers.add_parser("decode", help="Decode a stream into PGM images")
    dec.add_argument("--in", dest="input", required=True)
    dec.add_argument(
        "--out", dest="output", default=None, help="Enhancement (or nonscalable) image"
    )
    dec.add_argument("--base", default=None, help="Base-layer image")
    dec.add_argument(
        "--bits", type=int, default=None, help="Keep only this many residual bit-planes"
    )
    dec.add_argument(
        "--joint", action="store_true", help="Also enforce the base measurements"
    )
    dec.add_argument("--config", dest="config_path", default=None)
    dec.set_defaults(func=cmd_decode)

    pre = subparsers.add_parser("preview", help="Write the fast preview of a stream")
    pre.add_argument("--in", dest="input", required=True)
    pre.add_argument("--out", dest="output", required=True)
    pre.set_defaults(func=cmd_preview)

    ev = subparsers.add_parser("eval", help="PSNR between two PGM images")
    ev.add_argument("--ref", dest="reference", required=True)
    ev.add_argument("--test", required=True)
    ev.set_defaults(func=cmd_eval)

    cmp = subparsers.add_parser("compare", help="Run a comparison experiment")
    cmp.add_argument("--config", dest="experiment", required=True)
    cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    """
    :return: Exit status, 0 on success and 1 on any codec or I/O error. Usage errors exit with 2.
    :rtype: int
    """
    args = build_parser().parse_args(argv)
    _load_logging_config(args.log_config)

    start_time = datetime.now()
    try:
        status = args.func(args)
    except (ValueError, OSError) as ex:
        logger.error("%s failed: %s", args.command, ex)
        return 1

    elapsed = (datetime.now() - start_time).total_seconds()
    logger.info("%s finished in %s", args.command, seconds_to_string(elapsed))
    return status


if __name__ == "__main__":
    sys.exit(main())
