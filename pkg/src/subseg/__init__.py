"""Unsupervised sub-action segmentation of activity videos.

Feature sequences are embedded by a joint visual-temporal autoencoder
trained together with a bank of discriminative latent concepts; decoding
orders the concepts by mean timestamp and runs a Viterbi pass per video;
scoring uses Hungarian-matched MoF, MoC and segment-level F1.
"""

from .concepts import AttentionOutput, ConceptBank, assign, attend, contrastive_loss
from .embedding import EmbeddingNet, attention_input, decode, encode, reconstruction_loss
from .encoding import (DEFAULT_FRAME_SPAN, DEFAULT_GROUPS, DEFAULT_PE_DIM,
                       FeatureSequence, PosEncodingConfig, encode_sequence,
                       group_index, positional_encoding)
from .errors import (ConfigError, ContractError, DecodingError, DegenerateInputError,
                     DimensionError, DivergenceError, FormatError, IngestionError,
                     InventoryError, SubsegError)
from .evaluator import (EvalReport, evaluate, expand_segments, f1, hungarian,
                        match_clusters, mof, moc)
from .segmenter import (BACKGROUND, BackgroundPolicy, TransitionModel, VideoLabeling,
                        apply_background, build_transitions, decode_labelings,
                        initial_predictions, order_sets, segment_activity,
                        viterbi_decode)
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import TrainConfig, TrainedModel, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "AttentionOutput", "ConceptBank", "assign", "attend", "contrastive_loss",
    "EmbeddingNet", "attention_input", "decode", "encode", "reconstruction_loss",
    "DEFAULT_FRAME_SPAN", "DEFAULT_GROUPS", "DEFAULT_PE_DIM",
    "FeatureSequence", "PosEncodingConfig", "encode_sequence",
    "group_index", "positional_encoding",
    "ConfigError", "ContractError", "DecodingError", "DegenerateInputError",
    "DimensionError", "DivergenceError", "FormatError", "IngestionError",
    "InventoryError", "SubsegError",
    "EvalReport", "evaluate", "expand_segments", "f1", "hungarian",
    "match_clusters", "mof", "moc",
    "BACKGROUND", "BackgroundPolicy", "TransitionModel", "VideoLabeling",
    "apply_background", "build_transitions", "decode_labelings",
    "initial_predictions", "order_sets", "segment_activity", "viterbi_decode",
    "SyntheticSpec", "generate_synthetic",
    "TrainConfig", "TrainedModel", "total_loss", "train",
    "__version__",
]
