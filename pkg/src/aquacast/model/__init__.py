from .checkpoint import load_checkpoint, save_checkpoint
from .climate import ClimateEncoder
from .config import BACKBONE_PRESETS, ModelConfig
from .convlstm import ConvLSTMCell, TemporalAggregator
from .encoder import PyramidEncoder, encode_images
from .fusion import GatedFusion
from .network import ClimateGatedUNet, attach_dem

__all__ = [
    "BACKBONE_PRESETS",
    "ClimateEncoder",
    "ClimateGatedUNet",
    "ConvLSTMCell",
    "GatedFusion",
    "ModelConfig",
    "PyramidEncoder",
    "TemporalAggregator",
    "attach_dem",
    "encode_images",
    "load_checkpoint",
    "save_checkpoint",
]
