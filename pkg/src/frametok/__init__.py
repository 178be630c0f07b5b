"""Token-budget compression of precomputed video frame features.

Pipeline: pool each frame, cluster frames temporally into event
prototypes, score and select the top K with a differentiable perturbed
top-K, then encode selected frames finely (no pooling) and the rest as a
two-token text-guided coarse pair.
"""

from .errors import (
    CorruptionError,
    FormatError,
    FrametokError,
    NumericError,
    TrainingError,
    ValidationError,
)
from .storage import RunConfig, config_from_dict, load_config, read_tensor, write_tensor
from .pipeline import (
    ModelParams,
    SyntheticSpec,
    compress,
    generate_synthetic,
    init_params,
    plant_profile_corpus,
    selector_gradcheck,
    spec_from_dict,
    train_demo,
    write_tokens,
)
from .redundancy import profile_corpus, profile_pairs, repeated_ratio, irrelevant_ratio

__version__ = "0.1.0"

__all__ = [
    "CorruptionError", "FormatError", "FrametokError", "NumericError",
    "TrainingError", "ValidationError",
    "RunConfig", "config_from_dict", "load_config", "read_tensor", "write_tensor",
    "ModelParams", "SyntheticSpec", "compress", "generate_synthetic",
    "init_params", "plant_profile_corpus", "selector_gradcheck",
    "spec_from_dict", "train_demo", "write_tokens",
    "profile_corpus", "profile_pairs", "repeated_ratio", "irrelevant_ratio",
    "__version__",
]
