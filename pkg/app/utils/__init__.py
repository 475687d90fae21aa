"""Utils package for the Ratchet PGD toolkit."""

from .utils import Timer, config_hash, setup_logging

__all__ = [
    'Timer',
    'config_hash',
    'setup_logging'
]
