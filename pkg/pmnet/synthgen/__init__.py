from __future__ import annotations

from .generator import frame_timestamps, generate_procedure, generate_procedures, ineffective_indices, procedure_id, segment_lengths
from .records import FrameRecord, SyntheticProcedure
from .storage import default_splits, generate_dataset, read_dataset, read_manifest, read_procedure, write_dataset, write_procedure

__all__ = [
    "FrameRecord",
    "SyntheticProcedure",
    "default_splits",
    "frame_timestamps",
    "generate_dataset",
    "generate_procedure",
    "generate_procedures",
    "ineffective_indices",
    "procedure_id",
    "read_dataset",
    "read_manifest",
    "read_procedure",
    "segment_lengths",
    "write_dataset",
    "write_procedure",
]
