"""Prestack seismic facies recognition with a convolutional denoising autoencoder."""

from .baselines import PCA, PoststackStacker, pca_fit, pca_transform, stack_poststack
from .cae import (
    CaeLayer,
    CaeModel,
    ConvAutoencoder,
    TrainConfig,
    build_model,
    decode,
    encode,
    extract_features,
    init_layer,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
    train_layerwise,
)
from .clustering import ClusterConfig, FuzzyCMeans, KMeans, fuzzy_cmeans, harden, kmeans
from .features import GatherWindow, SurveyGrid, WindowStandardizer, assemble_feature_matrix
from .synth import ModelLayout, default_layout, generate_survey, score_map

__version__ = "0.1.0"
