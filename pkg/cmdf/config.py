"""
Tolerance registry and environment toggles.

Every tolerance has a default here and can be overridden with an
environment variable ``CMDF_TOL_<NAME>`` or through the ``tolerances``
section of a scenario file (see ``override_tolerances``).
"""

import os
from collections import OrderedDict
from contextlib import contextmanager

DEFAULT_TOLERANCES = OrderedDict([
    # Riccati fixed-point iteration
    ("dare_step_rtol", 1e-12),
    ("dare_residual_rtol", 1e-9),
    ("dare_max_iter", 200_000),
    ("dare_blowup", 1e14),
    # Lyapunov solve
    ("dle_residual_rtol", 1e-10),
    ("dle_direct_max_n", 20),
    ("dle_max_doublings", 64),
    # Symmetry / definiteness checks on covariance inputs
    ("cov_sym_rtol", 1e-10),
    ("cov_psd_rtol", 1e-10),
    # Kalman identity and information-form equivalence checks
    ("identity_rtol", 1e-9),
    # Doubly stochastic weight checks
    ("stochastic_atol", 1e-12),
    ("unit_eigenvalue_atol", 1e-9),
    # Rate fitting
    ("fit_floor", 1e-10),
    ("fit_min_points", 4),
])

_overrides = {}


def _coerce(name, value):
    default = DEFAULT_TOLERANCES[name]
    return int(float(value)) if isinstance(default, int) else float(value)


def tol(name):
    """Return the active value of tolerance ``name``."""
    if name not in DEFAULT_TOLERANCES:
        raise KeyError(
            f"Unknown tolerance '{name}'. "
            f"Known: {', '.join(DEFAULT_TOLERANCES)}"
        )
    if name in _overrides:
        return _overrides[name]
    env_value = os.getenv(f"CMDF_TOL_{name.upper()}")
    if env_value is not None:
        return _coerce(name, env_value)
    return DEFAULT_TOLERANCES[name]


def set_tolerances(values):
    """Install process-wide overrides (used when a scenario carries a tolerances section)."""
    for name, value in values.items():
        if name not in DEFAULT_TOLERANCES:
            raise KeyError(f"Unknown tolerance '{name}'")
        _overrides[name] = _coerce(name, value)


def reset_tolerances():
    _overrides.clear()


@contextmanager
def override_tolerances(**values):
    """Temporarily override tolerances inside a ``with`` block."""
    previous = dict(_overrides)
    set_tolerances(values)
    try:
        yield
    finally:
        _overrides.clear()
        _overrides.update(previous)


def num_jobs():
    """Worker count for trial fan-out, from ``CMDF_NUM_THREADS`` (default 1)."""
    value = os.getenv("CMDF_NUM_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def verify_fault():
    """Name of the property whose check should be deliberately broken, if any."""
    value = os.getenv("CMDF_VERIFY_FAULT", "").strip()
    return value or None
