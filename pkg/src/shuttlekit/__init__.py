"""shuttlekit: electrode-voltage sequences and waveforms for ion shuttling.

The package turns an analytic trap model into hardware-ready voltage
waveforms: local multipole expansion of the electrode unit potentials on
spherical Fibonacci designs, confinement quantities (fields, Hessians,
ponderomotive terms, secular modes), a banded quadratic-penalty linear system
for the voltage sequence, spline/sigmoid waveform mapping with regularized FIR
pre-compensation, velocity Verlet trajectory simulation, and pseudopotential
validity checks.
"""

from . import (confinement, dynamics, harmonics, multipole, path, pipeline,
               potentials, solver, traps, validity, waveform)

__version__ = "0.1.0"

__all__ = [
    "confinement",
    "dynamics",
    "harmonics",
    "multipole",
    "path",
    "pipeline",
    "potentials",
    "solver",
    "traps",
    "validity",
    "waveform",
    "__version__",
]
