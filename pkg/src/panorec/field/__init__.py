"""Neural radiance field: hash-grid encoding, small MLP, volume rendering,
training, checkpointing, and point-cloud export."""

from .checkpoint import load_checkpoint, save_checkpoint
from .export import export_pointcloud
from .hashgrid import HashGrid, HashGridConfig, encode_position
from .model import RadianceField
from .network import FieldNetwork
from .rendering import psnr, render_panorama_view, render_rays
from .sh import SH_DIM, sh_basis
from .training import TrainConfig, train

__all__ = [
    "HashGrid",
    "HashGridConfig",
    "encode_position",
    "RadianceField",
    "FieldNetwork",
    "SH_DIM",
    "sh_basis",
    "render_rays",
    "render_panorama_view",
    "psnr",
    "TrainConfig",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "export_pointcloud",
]
