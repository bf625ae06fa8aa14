"""Distributed carrier-frequency-offset estimation on network graphs.

Nodes estimate their oscillator offsets relative to a reference node by
exchanging small Gaussian messages with direct neighbors only; the library
also ships the per-link maximum-likelihood front end, estimation lower
bounds, centralized reference solvers, a consensus baseline, and a seeded
Monte-Carlo harness.
"""

from .gaussian import (
    GaussianMessage,
    SingularPrecisionError,
    from_moments,
    noninformative,
    product,
    to_moments,
)
from .topology import (
    GenerationFailedError,
    NetworkGraph,
    diameter,
    is_connected,
    load_edge_list,
    neighbors,
    random_geometric,
    save_edge_list,
)
from .measurement import (
    MODE_FULL_SIGNAL,
    MODE_ORACLE,
    EdgeMeasurement,
    LinkChannel,
    MLEstimate,
    OscillatorState,
    TrainingMatrix,
    build_structure_matrices,
    estimate_relative_cfo_ml,
    generate_observation,
    measure_edge,
    mimo_crb,
    miso_crb,
    random_training,
    scalar_cfo_crb,
    snr_db_to_noise_var,
)
from . import baseline, bp, harness, oracle

__all__ = [
    "GaussianMessage",
    "SingularPrecisionError",
    "from_moments",
    "noninformative",
    "product",
    "to_moments",
    "GenerationFailedError",
    "NetworkGraph",
    "diameter",
    "is_connected",
    "load_edge_list",
    "neighbors",
    "random_geometric",
    "save_edge_list",
    "MODE_FULL_SIGNAL",
    "MODE_ORACLE",
    "EdgeMeasurement",
    "LinkChannel",
    "MLEstimate",
    "OscillatorState",
    "TrainingMatrix",
    "build_structure_matrices",
    "estimate_relative_cfo_ml",
    "generate_observation",
    "measure_edge",
    "mimo_crb",
    "miso_crb",
    "random_training",
    "scalar_cfo_crb",
    "snr_db_to_noise_var",
    "baseline",
    "bp",
    "harness",
    "oracle",
]

__version__ = "0.1.0"
