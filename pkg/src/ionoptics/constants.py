"""Physical constants used across the toolkit.

Values are CODATA 2018 literals pinned here rather than taken from
scipy.constants, so that results do not drift when SciPy updates its
CODATA tables.
"""

import math

ELEMENTARY_CHARGE = 1.602176634e-19
"""Elementary charge in C (exact by SI definition)."""

VACUUM_PERMITTIVITY = 8.8541878128e-12
"""Vacuum electric permittivity in F/m."""

ATOMIC_MASS = 1.66053906660e-27
"""Unified atomic mass unit in kg."""

COULOMB_CONSTANT = 1.0 / (4.0 * math.pi * VACUUM_PERMITTIVITY)
"""1 / (4 pi eps0) in N m^2 / C^2."""
