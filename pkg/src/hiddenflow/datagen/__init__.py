"""Ground-truth flows, passive-scalar transport and scattered sampling."""

from hiddenflow.datagen.analytic import VARIANTS, AnalyticFlow, analytic_eval, analytic_jet
from hiddenflow.datagen.sampling import sample_points
from hiddenflow.datagen.spectral import (
    INITIAL_CONDITIONS,
    GridField2D,
    SolverConfig,
    TransportSolver,
    grid_coordinates,
    initial_field,
    solve_transport,
    spectral_roundtrip_error,
)
from hiddenflow.dataset import (
    SampledDataset,
    export_collocation,
    export_dataset,
    import_collocation,
    import_dataset,
)

__all__ = [
    "AnalyticFlow",
    "GridField2D",
    "INITIAL_CONDITIONS",
    "SampledDataset",
    "SolverConfig",
    "TransportSolver",
    "VARIANTS",
    "analytic_eval",
    "analytic_jet",
    "export_collocation",
    "export_dataset",
    "grid_coordinates",
    "import_collocation",
    "import_dataset",
    "initial_field",
    "sample_points",
    "solve_transport",
    "spectral_roundtrip_error",
]
