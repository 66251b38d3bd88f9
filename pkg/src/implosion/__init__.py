"""Smooth self-similar supersonic implosion profiles for the non-isentropic
Euler-Poisson system.

The pipeline is ``params -> series -> profile -> monitor -> physical``:

>>> from implosion import make_params, build, handoff, integrate
>>> prm = make_params("5/3", 4)
>>> table = build(prm, 30)
>>> y0, state = handoff(table, 1e-10)
>>> result = integrate(prm, state, 1e3)
>>> result.termination.value
'reached_ymax'
"""

from .errors import (
    ImplosionError,
    OrderTooLowError,
    ProfileRangeError,
    ResonanceError,
    SeriesDomainError,
    SingularBandError,
    SonicProximityError,
    ValidationError,
)
from .params import (
    GammaN,
    Params,
    ScalingIndices,
    SonicData,
    derive_alpha,
    make_params,
    parse_gamma,
    scaling_indices,
    sonic_data,
    validate,
)
from .series import CoeffTable, build, evaluate, radius_estimate
from .profile import (
    Controls,
    ProfileResult,
    ProfileState,
    Termination,
    aux,
    handoff,
    integrate,
    rhs,
)
from .monitor import verify_profile
from .physical import far_field, physical_fields

__all__ = [
    "CoeffTable",
    "Controls",
    "GammaN",
    "ImplosionError",
    "OrderTooLowError",
    "Params",
    "ProfileRangeError",
    "ProfileResult",
    "ProfileState",
    "ResonanceError",
    "ScalingIndices",
    "SeriesDomainError",
    "SingularBandError",
    "SonicData",
    "SonicProximityError",
    "Termination",
    "ValidationError",
    "aux",
    "build",
    "derive_alpha",
    "evaluate",
    "far_field",
    "handoff",
    "integrate",
    "make_params",
    "parse_gamma",
    "physical_fields",
    "radius_estimate",
    "rhs",
    "scaling_indices",
    "sonic_data",
    "validate",
    "verify_profile",
]

__version__ = "0.1.0"
