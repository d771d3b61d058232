from __future__ import annotations

from typing import Optional

from pydantic import BaseModel

SPLITS = ("train", "val", "test")
# bumped whenever the on-disk frame or label layout changes
MANIFEST_FORMAT = 1


class ProcedureEntry(BaseModel):
    id: str
    n_frames: int
    effective_case: bool
    height: int
    width: int
    frames_xxh64: str


class DatasetManifest(BaseModel):
    format: int = MANIFEST_FORMAT
    pmnet_version: str
    generator: Optional[dict] = None
    procedures: list[ProcedureEntry] = []
    splits: dict[str, list[str]] = {name: [] for name in SPLITS}

    def entry(self, procedure_id: str) -> ProcedureEntry:
        for entry in self.procedures:
            if entry.id == procedure_id:
                return entry
        raise KeyError(procedure_id)

    def split_ids(self, split: str) -> list[str]:
        return list(self.splits.get(split, []))
