"""Bundle-valued field theories on rectangular grids: exterior calculus,
covariant derivatives, Lagrangian densities and a Lagrange-Dirac stepper."""

__version__ = "0.1.0"

from .grid import BoundaryData, Face, GridConfig, GridError, MetricField, RectGrid, build_grid
from .exterior import DualField, FormField, hodge_star, pairing, phi_iso, phi_iso_inv
from .connection import GaugeConnection, LieAlgebra, LinearConnection, Representation, su2, u1
from .lagrangian import Higgs, KleinGordon, matter_density, ym_density, ymh_density
from .dynamics import FieldSystem, ForceModel, PontryaginState, initial_state, simulate, step

__all__ = [
    "__version__", "BoundaryData", "Face", "GridConfig", "GridError", "MetricField", "RectGrid",
    "build_grid", "DualField", "FormField", "hodge_star", "pairing", "phi_iso", "phi_iso_inv",
    "GaugeConnection", "LieAlgebra", "LinearConnection", "Representation", "su2", "u1", "Higgs",
    "KleinGordon", "matter_density", "ym_density", "ymh_density", "FieldSystem", "ForceModel",
    "PontryaginState", "initial_state", "simulate", "step",
]
