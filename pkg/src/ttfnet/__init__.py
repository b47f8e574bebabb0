"""Target encoding, losses and decoding for Gaussian-kernel anchor-free detection."""

from .decoder import Detection, detect, peak_mask
from .encoder import EncodedTargets, EncoderConfig, encode_heatmap, encode_regression, encode_scene, sample_weight
from .geometry import BoundingBox, RegressionVector, decode_box, giou, regression_target
from .ingest import Annotation, Scene, load_scenes, read_tensor, write_pgm, write_tensor
from .kernel import KernelSpec, kernel_value, render_kernel, sigmas
from .loss import LossConfig, LossReport, focal_loss, giou_reg_loss, total_loss

__version__ = "0.1.0"
