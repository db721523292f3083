"""Chemotherapy schedule optimisation with estimation of distribution algorithms."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ChemoProblem,
    FitnessReport,
    ProblemInstance,
    decode,
    default_instance,
    encode,
    fitness,
    ode_oracle,
    tumour_trajectory,
)
from .instance_io import load_instance, parse_instance  # noqa: E402
from .optimizers import GA, HBOA, PBIL, UMDA, RunRecord, run_optimizer  # noqa: E402

__all__ = [
    "ChemoProblem",
    "FitnessReport",
    "ProblemInstance",
    "decode",
    "default_instance",
    "encode",
    "fitness",
    "ode_oracle",
    "tumour_trajectory",
    "load_instance",
    "parse_instance",
    "GA",
    "HBOA",
    "PBIL",
    "UMDA",
    "RunRecord",
    "run_optimizer",
]
