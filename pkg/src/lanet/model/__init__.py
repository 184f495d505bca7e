from lanet.model.blocks import (
    ChannelAttention,
    FeatureFusionBlock,
    FeaturePreserveBlock,
    HeadAttention,
    LesionAwareModule,
    gate,
)
from lanet.model.checkpoint import Checkpoint, IncompatibleCheckpointError, check_compatible, load_weights
from lanet.model.encoder import BACKBONES, build_encoder
from lanet.model.lanet import LANet, LesionOutput, build_variant, count_parameters
