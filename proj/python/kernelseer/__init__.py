"""Kernel tuning-parameter prediction with sequence models."""

try:
    from ._kernelseer import *  # noqa: F401,F403  (installed layout)
    from ._kernelseer import __doc__  # noqa: F401
except ImportError:  # in-tree build: extension sits next to the package
    from _kernelseer import *  # noqa: F401,F403
    from _kernelseer import __doc__  # noqa: F401

__version__ = "0.1.0"
