"""
Utils package for the ST-LGSL toolkit
Common utilities and helper functions
"""

from .logging import setup_logging

__all__ = ["setup_logging"]
