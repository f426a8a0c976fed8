"""Financial applications: VIX superreplication and the stretched Brownian motion."""

from .sbm import PathEnsemble, ProcessBound, SbmModel, sbm_process_bound, sbm_simulate, sbm_solve
from .vix import VixResult, vix_superreplication

__all__ = [
    "PathEnsemble", "ProcessBound", "SbmModel", "VixResult",
    "sbm_process_bound", "sbm_simulate", "sbm_solve", "vix_superreplication",
]
