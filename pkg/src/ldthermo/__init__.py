"""
ldthermo: large-deviations rate functions and the thermodynamics built on them.

Modules
-------
models      drift/diffusion specifications, builtins, validation
sde         Euler-Maruyama ensembles, histogram densities, velocity statistics
fpe         positivity-preserving Fokker-Planck solver and probability flux
hamjac      Hamiltonian/Lagrangian structure, canonical form, Lorentz split
action      discrete action, two-point minimization, quasipotentials
cit         drift decomposition, entropy-production split, Gibbs entropies
eit         flux-dependent rate functions and relaxation dynamics
ou          closed-form Ornstein-Uhlenbeck results
cli         command-line front end
"""
from ._version import __version__
from .errors import *  # noqa: F401,F403
from .grid import DensityEstimate, Grid, GriddedField, parse_grid
from .models import BUILTIN_MODELS, ModelSpec, builtin_model, custom_model, model_from_config, validate_model

__all__ = [
    "__version__",
    "Grid",
    "GriddedField",
    "DensityEstimate",
    "parse_grid",
    "ModelSpec",
    "BUILTIN_MODELS",
    "builtin_model",
    "custom_model",
    "model_from_config",
    "validate_model",
]
