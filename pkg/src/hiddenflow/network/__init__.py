"""Multi-output perceptron and its derivative jets."""

from hiddenflow.network.jet import COORDINATES, VARIABLES, FieldJet, channel_names
from hiddenflow.network.mlp import (
    InputNormalization,
    MlpArchitecture,
    MlpParams,
    forward,
    forward_jet,
    initialize,
    propagate,
    seeded_inputs,
)

__all__ = [
    "COORDINATES",
    "VARIABLES",
    "FieldJet",
    "InputNormalization",
    "MlpArchitecture",
    "MlpParams",
    "channel_names",
    "forward",
    "forward_jet",
    "initialize",
    "propagate",
    "seeded_inputs",
]
