"""
scalesde - Picard iteration of interacting spin SDEs in scales of weighted spaces
=================================================================================
**scalesde** is a Python package that builds solutions of stochastic spin systems
on random point configurations by Picard iteration across a scale of weighted
Hilbert spaces, and checks the constants of the construction on Monte Carlo
ensembles.

Main Features
-------------
  - Poisson, hard-core (thinned), lattice and explicit configurations with a
    cell-list neighbour search.
  - Weighted norms ||.||_alpha and Monte Carlo Z-norms of process ensembles.
  - Admissible finite-range interactions with their scale-Lipschitz constants.
  - Euler-Maruyama integration and Picard iteration under common noise, with
    per-replica counter-based random streams and optional joblib workers.
  - Closed-form contraction bounds, the series E^(p) and the growth bound.
  - Integral operator and infinite matrix examples with their predicted
    blow-up exponent.
  - A command line runner writing a JSON manifest and CSV tables.
"""
__version__ = "0.1.0"
__all__ = ["run_experiment", "Experiment", "ExperimentConfig", "load_config"]

from .core.experiment import Experiment  # noqa
from .core.experiment import run_experiment  # noqa
from .utils import ExperimentConfig  # noqa
from .utils import load_config  # noqa
