"""Channel-prior convolutional attention segmentation toolkit.

A NumPy-backed autodiff tensor core, the CPCA attention operator with SE
and CBAM baselines, an encoder-decoder segmentation network, training and
evaluation machinery, and Gaussian-weighted sliding-window inference.
"""

from .attention import CBAM, CPCA, SE, ChannelAttention, SpatialAttention, build_attention
from .config import RunConfig, default_run_config, dump_config, parse_config_text
from .data import SegSample, augment, load_dataset
from .inference import SlidingWindowConfig, gaussian_weight_map, sliding_window_predict
from .losses import LossWeights, combined_loss, cross_entropy_loss, dice_loss
from .metrics import dsc, hd95, iou
from .network import CPCANet, NetworkConfig, build_network, count_flops, count_params
from .synth import SynthSpec, synth_dataset, write_dataset
from .tensor import Tensor, no_grad, set_default_dtype, tensor
from .train import TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "CBAM", "CPCA", "SE", "ChannelAttention", "SpatialAttention", "build_attention",
    "RunConfig", "default_run_config", "dump_config", "parse_config_text",
    "SegSample", "augment", "load_dataset",
    "SlidingWindowConfig", "gaussian_weight_map", "sliding_window_predict",
    "LossWeights", "combined_loss", "cross_entropy_loss", "dice_loss",
    "dsc", "hd95", "iou",
    "CPCANet", "NetworkConfig", "build_network", "count_flops", "count_params",
    "SynthSpec", "synth_dataset", "write_dataset",
    "Tensor", "no_grad", "set_default_dtype", "tensor",
    "TrainConfig", "fit",
    "__version__",
]
