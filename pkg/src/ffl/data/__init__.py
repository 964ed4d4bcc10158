"""Datasets, synthetic cohorts, image preprocessing and label rules."""
from .dataset import MultilabelDataset, class_pos_weights
from .imaging import (
    augment,
    augment_flip,
    augment_rotate,
    flip,
    hist_equalize,
    minmax_normalize,
    preprocess,
    resize,
    rotate,
)
from .io import load_dataset, read_pgm, save_dataset, write_pgm
from .labels import binarize_chexpert, binarize_uka
from .split import split_train_test
from .synthetic import (
    DEFAULT_SITE_SIZES,
    LabelDef,
    LatentDiseaseConfig,
    SiteLabels,
    compile_formula,
    default_synthetic_config,
    generate_synthetic,
    labels_from_latents,
)

__all__ = [
    "DEFAULT_SITE_SIZES",
    "LabelDef",
    "LatentDiseaseConfig",
    "MultilabelDataset",
    "SiteLabels",
    "augment",
    "augment_flip",
    "augment_rotate",
    "binarize_chexpert",
    "binarize_uka",
    "class_pos_weights",
    "compile_formula",
    "default_synthetic_config",
    "flip",
    "generate_synthetic",
    "hist_equalize",
    "labels_from_latents",
    "load_dataset",
    "minmax_normalize",
    "preprocess",
    "read_pgm",
    "resize",
    "rotate",
    "save_dataset",
    "split_train_test",
    "write_pgm",
]
