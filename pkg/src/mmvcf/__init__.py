"""Multi-channel correlation filters: VCF, linear SVM and maximum-margin VCF."""

from ._exceptions import (
    CFError,
    ConfigError,
    DegenerateModelError,
    DegeneratePlaneError,
    DimensionError,
    FormatError,
    NumericalConsistencyError,
    NumericalError,
    SingularityError,
    TensorIOError,
    TrainingError,
)
from .cfmath import (
    CrossPowerMatrix,
    LocalizationMatrix,
    accumulate_cross_power,
    assemble_S,
    block_inv_sqrt,
    block_inverse,
    gaussian_output,
    whiten,
)
from .detect import (
    Detection,
    PyramidConfig,
    mine_hard_negatives,
    nms,
    psr,
    pyramid_detect,
    score_map,
)
from .estimators import MMVCF, VCF, LinearSVMFilter
from .evaluation import average_precision, emit_report, iou, roc_auc, roc_curve
from .features import HOGTransformer, HogConfig, RawPixelTransformer, hog_extract, raw_channel
from .spectral import CorrelationPlane, cross_correlate, dft2, freq_inner, idft2
from .tensorio import (
    DatasetManifest,
    MultiChannelImage,
    SynthConfig,
    TrainingSample,
    generate_planted_dataset,
    load_manifest,
    load_tensor,
    save_manifest,
    save_tensor,
)
from .trainers import (
    FilterBank,
    TrainConfig,
    build_kernel_gram,
    fit_linear_svm,
    fit_mmvcf,
    load_model,
    save_model,
    smo_solve,
    train_linear_svm,
    train_mmvcf,
    train_vcf,
)

__all__ = [
    "accumulate_cross_power",
    "assemble_S",
    "average_precision",
    "block_inv_sqrt",
    "block_inverse",
    "build_kernel_gram",
    "CFError",
    "ConfigError",
    "CorrelationPlane",
    "cross_correlate",
    "CrossPowerMatrix",
    "DatasetManifest",
    "DegenerateModelError",
    "DegeneratePlaneError",
    "Detection",
    "dft2",
    "DimensionError",
    "emit_report",
    "FilterBank",
    "fit_linear_svm",
    "fit_mmvcf",
    "FormatError",
    "freq_inner",
    "gaussian_output",
    "generate_planted_dataset",
    "hog_extract",
    "HogConfig",
    "HOGTransformer",
    "idft2",
    "iou",
    "LinearSVMFilter",
    "load_manifest",
    "load_model",
    "load_tensor",
    "LocalizationMatrix",
    "mine_hard_negatives",
    "MMVCF",
    "MultiChannelImage",
    "nms",
    "NumericalConsistencyError",
    "NumericalError",
    "psr",
    "pyramid_detect",
    "PyramidConfig",
    "raw_channel",
    "RawPixelTransformer",
    "roc_auc",
    "roc_curve",
    "save_manifest",
    "save_model",
    "save_tensor",
    "score_map",
    "SingularityError",
    "smo_solve",
    "SynthConfig",
    "TensorIOError",
    "train_linear_svm",
    "train_mmvcf",
    "train_vcf",
    "TrainConfig",
    "TrainingError",
    "TrainingSample",
    "VCF",
    "whiten",
]

__version__ = "0.1.0"
