"""Bicycle design benchmark: design space, evaluators, metrics, optimizers and harness."""
import logging

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"
