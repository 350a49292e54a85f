"""Minimizing-movement solver for cross-diffusion systems with nonlinear mobility.

Arrays of cell values have shape (components, cells).
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
