from .pnm import ExtentOverflow, MalformedHeader, PnmError, TruncatedPayload
from .samples import (
    DataError,
    Sample,
    augment,
    load_manifest,
    load_sample,
    read_manifest,
    stack,
    write_manifest,
)
from .synth import synth_generate, write_dataset

__all__ = [
    "DataError",
    "ExtentOverflow",
    "MalformedHeader",
    "PnmError",
    "Sample",
    "TruncatedPayload",
    "augment",
    "load_manifest",
    "load_sample",
    "read_manifest",
    "stack",
    "synth_generate",
    "write_dataset",
    "write_manifest",
]
