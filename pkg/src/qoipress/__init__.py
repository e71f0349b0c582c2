"""Error-bounded lossy compression that also bounds the error of a derived quantity."""

from .codec import CodecConfig, compress, decompress
from .ebtune import EbPlan, TuneParams
from .expr import DerivativeBundle, differentiate, evaluate, parse_expr, singularities, to_string
from .metrics import QualityReport
from .pipeline import Bounds, baseline_search, compress_fields
from .qoi import Field, QoiSpec, evaluate_qoi, qoi_value_range
from .validate import max_qoi_error, validate_and_correct

__version__ = "0.1.0"

__all__ = [
    "Bounds", "CodecConfig", "DerivativeBundle", "EbPlan", "Field", "QoiSpec", "QualityReport",
    "TuneParams", "baseline_search", "compress", "compress_fields", "decompress", "differentiate",
    "evaluate", "evaluate_qoi", "max_qoi_error", "parse_expr", "qoi_value_range", "singularities",
    "to_string", "validate_and_correct",
]
