"""Networks of local observers that jointly reconstruct the state of a linear plant.

Each node sees part of the output, mixes estimates with its graph neighbours
through W = I - alpha L, and may run an extra compensator state. The modules
cover graph spectra, detectability of the lifted error system, fixed-mode
tests, structured gain synthesis and node-wise simulation.
"""

from .graph import CommGraph, build_graph, parse_graph
from .numerics import DEFAULT_TOL, ToleranceConfig
from .simulation import SimTrace, decay_rate, error_dynamics_check, simulate
from .spectral import WeightMatrix, alpha_interval, lambda_bar, make_weight, pick_alpha, rho_threshold
from .synthesis import ObserverDesign, SynthesisOptions, synthesize, verify_design
from .sysmodel import LtiSystem, is_detectable, lifted_detectability, parse_plant

__all__ = [
    "CommGraph", "build_graph", "parse_graph", "DEFAULT_TOL", "ToleranceConfig", "SimTrace",
    "decay_rate", "error_dynamics_check", "simulate", "WeightMatrix", "alpha_interval",
    "lambda_bar", "make_weight", "pick_alpha", "rho_threshold", "ObserverDesign",
    "SynthesisOptions", "synthesize", "verify_design", "LtiSystem", "is_detectable",
    "lifted_detectability", "parse_plant",
]
