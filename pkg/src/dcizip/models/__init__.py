from .features import FeaturePair, TokenLayout, build_features, decoder_feature, encoder_feature, field_labels
from .io import load_model, save_model
from .outputs import output_probs
from .predictors import AdaptiveOrder0, RnnPredictor, TransformerPredictor, UniformPredictor
from .rnn import BitGru, RnnConfig, rnn_forward
from .training import (TrainConfig, TrainedModel, bce_loss, gradient_check, train_loop, train_rnn,
                       train_transformer)
from .transformer import DciTransformer, TransformerConfig, transformer_forward

__all__ = [
    "FeaturePair", "TokenLayout", "build_features", "decoder_feature", "encoder_feature", "field_labels",
    "load_model", "save_model", "output_probs", "AdaptiveOrder0", "RnnPredictor", "TransformerPredictor",
    "UniformPredictor", "BitGru", "RnnConfig", "rnn_forward", "TrainConfig", "TrainedModel", "bce_loss",
    "gradient_check", "train_loop", "train_rnn", "train_transformer", "DciTransformer", "TransformerConfig",
    "transformer_forward",
]
