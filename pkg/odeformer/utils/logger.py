import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()


def get_logger(name="odeformer") -> logging.Logger:
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger.setLevel(os.getenv("ODEFORMER_LOG_LEVEL", "INFO").upper())
        h = logging.StreamHandler(sys.stdout)
        h.setFormatter(logging.Formatter("[%(levelname)s] %(asctime)s %(name)s: %(message)s"))
        logger.addHandler(h)
        logger.propagate = False
    return logger
