"""Binaural azimuth localization from amplitude-modulation-spectrum features.

Pipeline: 4-mic hearing-aid audio -> front/back cardioids -> AMS log
energies per 2 s frame -> 120 LDA classifiers on six shifted 30-degree
grids -> 72-bin vote histogram -> azimuth.
"""
from .audio_io import MultichannelAudio, decimate, frame_signal, read_wav, write_wav
from .beamforming import ArrayGeometry, CardioidSet, make_cardioids
from .classification import LdaEnsemble, LdaModel, class_of_azimuth, train_ensemble, train_lda
from .evaluation import evaluate_set, localize, run_benchmark, run_localize
from .features import FeatureFrame, FilterbankConfig, extract_features
from .fusion import AzimuthEstimate, AzimuthHistogram, estimate_azimuth, signed_circular_error
from .music import SteeringGrid, music_localize
from .pipeline import FeaturePipeline
from .scene import HeadModel, SceneSpec, render_corpus, render_direction

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "AzimuthEstimate", "AzimuthHistogram", "CardioidSet", "FeatureFrame",
    "FeaturePipeline", "FilterbankConfig", "HeadModel", "LdaEnsemble", "LdaModel",
    "MultichannelAudio", "SceneSpec", "SteeringGrid", "class_of_azimuth", "decimate",
    "estimate_azimuth", "evaluate_set", "extract_features", "frame_signal", "localize",
    "make_cardioids", "music_localize", "read_wav", "render_corpus", "render_direction",
    "run_benchmark", "run_localize", "signed_circular_error", "train_ensemble", "train_lda",
    "write_wav",
]
