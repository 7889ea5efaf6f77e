"""spinoc: Wigner phase-space optimal control of Rashba-Zeeman spin dynamics
and its classical deterministic limit.

The public surface, by layer:

* :mod:`spinoc.fields`    static field catalog (potential, controls, Zeeman,
  spin-orbit)
* :mod:`spinoc.wigner`    phase-space grid, spectral operators, spin Wigner
  states
* :mod:`spinoc.dynamics`  the kinetic evolution and its integrator
* :mod:`spinoc.classical` characteristic ODE system, adjoint and optimizer
* :mod:`spinoc.quantum`   phase-space control problem and the hbar sweep
* :mod:`spinoc.oracles`   slow reference implementations backing the fast
  operators
* :mod:`spinoc.config`, :mod:`spinoc.storage`, :mod:`spinoc.cli`  run
  descriptions, artifacts, command line
"""

from .classical import (ClassicalState, ControlSignal, OCConfig,
                        OptimizeResult, integrate_adjoint, integrate_forward)
from .classical import optimize as optimize_classical
from .config import RunConfig, load_config
from .dynamics import (EvolutionOperator, EvolutionResult, EvolutionSpec,
                       cfl_timestep, integrate)
from .errors import (ConfigurationError, DegenerateProblemError,
                     IntegrationError, SpinocError)
from .fields import FieldSet, ScalarShape, VectorShape, fieldset_from_config
from .quantum import (SweepResult, TargetSymbol, build_target, hbar_sweep,
                      optimize_quantum, quantum_objective)
from .wigner import (PhaseGrid, WignerState, coherent_wigner, inner_product,
                     moments)

__version__ = "0.1.0"

__all__ = [
    "ClassicalState", "ConfigurationError", "ControlSignal",
    "DegenerateProblemError", "EvolutionOperator", "EvolutionResult",
    "EvolutionSpec", "FieldSet", "IntegrationError", "OCConfig",
    "OptimizeResult", "PhaseGrid", "RunConfig", "ScalarShape", "SpinocError",
    "SweepResult", "TargetSymbol", "VectorShape", "WignerState",
    "build_target", "cfl_timestep", "coherent_wigner", "fieldset_from_config",
    "hbar_sweep", "inner_product", "integrate", "integrate_adjoint",
    "integrate_forward", "load_config", "moments", "optimize_classical",
    "optimize_quantum", "quantum_objective",
]
