# Copyright (c) 2021 scalecs contributors. All Rights Reserved.
#
# Use is subject to license terms.
#
# Date: Mar. 02 2021
from .codec import (  # noqa. F401
    BitstreamError,
    Quantizer,
    ScalableBitstream,
    decode,
    decode_base,
    decode_enhancement,
    decode_nonscalable,
    encode,
    encode_nonscalable,
    encode_separate,
    rate_report,
)
from .config_reader import ConfigReader  # noqa. F401
from .image import Image, load_pgm, psnr, save_pgm  # noqa. F401
from .runner import run_comparison  # noqa. F401
from .sensing import SensingConfig  # noqa. F401
