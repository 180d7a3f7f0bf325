"""Denoising diffusion models on level-set manifolds."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
