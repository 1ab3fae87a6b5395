"""Polygon patch antenna design with feature-based trust-region tuning on two model fidelities."""

from .errors import TopoAntError
from .geometry import Bounds, DecodedPatch, build_bounds, decode, generate_candidate, scale_design
from .objectives import BandSpec
from .pipeline import RunConfig, RunResult, benchmark, run_variable_fidelity
from .simulator import CostLedger, MockSimulator, Response, SweepSpec, simulate

__all__ = [
    "BandSpec",
    "Bounds",
    "CostLedger",
    "DecodedPatch",
    "MockSimulator",
    "Response",
    "RunConfig",
    "RunResult",
    "SweepSpec",
    "TopoAntError",
    "benchmark",
    "build_bounds",
    "decode",
    "generate_candidate",
    "run_variable_fidelity",
    "scale_design",
    "simulate",
]

__version__ = "0.1.0"
