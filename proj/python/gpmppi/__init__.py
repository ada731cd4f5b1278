"""Chance-constrained GP-MPPI planner for skid-steer robots."""

try:
    from ._gpmppi import *  # noqa: F401,F403
    from ._gpmppi import __doc__ as _doc
except ImportError:  # build-tree layout: extension next to the package
    from _gpmppi import *  # noqa: F401,F403
    from _gpmppi import __doc__ as _doc

__doc__ = _doc
__version__ = "0.1.0"
