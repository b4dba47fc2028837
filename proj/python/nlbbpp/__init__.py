"""Transport distances and entropy flows for truncated lattice point-process laws."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
