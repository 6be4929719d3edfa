"""Monte Carlo pricing for the Dupire local volatility model.

Prices European options and computes, in one forward+backward pass, the
sensitivity of the price to every node of the local volatility surface
(the vega surface) and to the initial spot, with a bump-and-revalue
oracle for validation.
"""

from dupire_aad._core import *  # noqa: F401,F403
from dupire_aad._core import __version__  # noqa: F401

