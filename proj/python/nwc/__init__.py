"""Neural weight compression: learned codec, entropy coding and LDLQ pipeline."""

from ._core import (
    CodecModel,
    ContractViolation,
    CorruptionError,
    FormatError,
    HashMismatchError,
    InputError,
    NumericError,
    NwcError,
    TruncatedError,
    UnknownVersionError,
    assign_quality,
    compand_decode,
    compand_encode,
    compress,
    create_model,
    decompress,
    estimate_hessian,
    eval_companding,
    evaluate_levels,
    proxy_loss,
    rate_report,
    read_container,
    synthetic_chunks,
    train_codec,
    write_container,
)

__all__ = [name for name in dir() if not name.startswith("_")]
