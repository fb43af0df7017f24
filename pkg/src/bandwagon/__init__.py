"""Mean-field opinion game with conformist agents and costly flips.

Modules
-------
model   vector field, fixed points and regimes
ode     adaptive Dormand-Prince integration with kink handling
phase   manifolds, the critical mobility and limit cycles
mfg     equilibria, value functions and verification
micro   exact N-agent simulation
cli     command-line entry point
"""

from .errors import BandwagonError
from .model import (
    ConstantMobility,
    CrowdingMobility,
    GenericMobility,
    ModelParams,
    PhasePoint,
    constant_model,
    crowding_model,
)

__version__ = "0.1.0"

__all__ = [
    "BandwagonError",
    "ConstantMobility",
    "CrowdingMobility",
    "GenericMobility",
    "ModelParams",
    "PhasePoint",
    "constant_model",
    "crowding_model",
    "__version__",
]
