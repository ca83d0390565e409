"""Trace-driven cache-fault simulator for virtual-address-translation costs.

Replays memory-access traces under two cost semantics: the external-memory
view (block faults on data only) and the translation-aware view (every
access walks a K-ary translation tree; faults on tree nodes and data pages
both count).  Ships the workload generators, bound calculators and sweep
harness used to verify the model's guarantees empirically.
"""

from .address_model import (
    AddressSpaceOverflow,
    ConfigError,
    DecomposedAddress,
    MachineConfig,
    TranslationNode,
    compute_depth,
    decompose,
    path_union,
    recompose,
    translation_path,
)
from .cache_sim import AccessOutcome, CacheState, new_cache, opt_annotate
from .cost_engine import (
    AccessTrace,
    FaultReport,
    REPORT_CSV_HEADER,
    TraceFileError,
    normalized_cost,
    read_trace,
    run_em,
    run_vat,
    write_trace,
)
from .workloads import WorkloadSpec

__version__ = "0.1.0"

__all__ = [
    "AccessOutcome",
    "AccessTrace",
    "AddressSpaceOverflow",
    "CacheState",
    "ConfigError",
    "DecomposedAddress",
    "FaultReport",
    "MachineConfig",
    "REPORT_CSV_HEADER",
    "TraceFileError",
    "TranslationNode",
    "WorkloadSpec",
    "compute_depth",
    "decompose",
    "new_cache",
    "normalized_cost",
    "opt_annotate",
    "path_union",
    "read_trace",
    "recompose",
    "run_em",
    "run_vat",
    "translation_path",
    "write_trace",
    "__version__",
]
