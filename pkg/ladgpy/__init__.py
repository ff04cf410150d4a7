# -*- coding: utf-8 -*-

"""ladgpy
Desc: Localized adversarial domain generalization at desk scale
"""

import datetime
import logging
import os

from .config import logs_dir

__version__ = "0.1.0"

run_log_path: str = os.path.join(
    logs_dir, f"{datetime.datetime.now().strftime('%Y-%m-%d-%H-%M-%S')}.log"
)

logging.basicConfig(
    format="%(asctime)s %(levelname)-8s %(name)s %(message)s",
    level=logging.DEBUG,
    datefmt="%Y-%m-%d %H:%M:%S",
    filename=run_log_path,
)
logging.captureWarnings(True)

# plotting backends log font scans at DEBUG
for noisy in ("matplotlib", "PIL"):
    logging.getLogger(noisy).setLevel(logging.WARNING)

logger = logging.getLogger(__name__)
