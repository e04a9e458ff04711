"""bgeo: symbolic and numerical tools for b-symplectic and b-Poisson
geometry on manifolds with a distinguished hypersurface."""

__version__ = "0.1.0"

from .symexpr import Patch, parse_expr  # noqa: F401
