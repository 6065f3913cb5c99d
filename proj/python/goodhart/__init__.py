"""Tabular MDPs, occupancy-measure geometry and Goodharting experiments."""

from ._goodhart import *  # noqa: F401,F403
from ._goodhart import __version__  # noqa: F401
