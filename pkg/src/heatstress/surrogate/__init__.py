"""Learned UTCI surrogate: FiLM fusion of geometric, semantic and met encoders."""
from .config import FUSIONS, GEO_BACKBONES, VARIANTS, SurrogateConfig
from .data import TileNormalizer, TileSample, physics_tiles, split_indices, tiles_from_grids
from .estimator import UTCISurrogate
from .io import FORMAT_VERSION, load_params, save_params
from .network import (FiLMGenerator, GeometricEncoder, MetEncoder, SemanticEncoder, UTCINet,
                      count_parameters, film_modulate)
from .training import TrainHyper, TrainingDiverged, gradient_check, masked_mse, train

__all__ = [
    "FUSIONS", "GEO_BACKBONES", "VARIANTS", "SurrogateConfig", "TileNormalizer", "TileSample",
    "physics_tiles", "split_indices", "tiles_from_grids", "UTCISurrogate", "FORMAT_VERSION",
    "load_params", "save_params", "FiLMGenerator", "GeometricEncoder", "MetEncoder",
    "SemanticEncoder", "UTCINet", "count_parameters", "film_modulate", "TrainHyper",
    "TrainingDiverged", "gradient_check", "masked_mse", "train",
]
