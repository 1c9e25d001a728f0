from .feature_map import CoordGrid, FeatureMap
from .ops import avg_pool2x2, bilinear_sample, conv2d, relu

__all__ = ["CoordGrid", "FeatureMap", "avg_pool2x2", "bilinear_sample", "conv2d", "relu"]
