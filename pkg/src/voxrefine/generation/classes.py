# Semantic classes and the per-dataset class tables kept in res/
import json
import numpy as np
from pathlib import Path
from typing import Dict, List, Optional

RES_DIR = Path(__file__).resolve().parent.parent / "res"


class SemanticClass:
    def __init__(self, class_id: int, name: str, color: Optional[str] = None) -> None:
        self.id = class_id
        self.name = name
        self.color = color

    def __str__(self) -> str:
        return self.name


class ClassTable:
    def __init__(self, dataset: str, classes: List[SemanticClass], empty=0,
                 ignore=255, learning_map: Optional[Dict[int, int]] = None) -> None:
        self.dataset = dataset
        self.classes = sorted(classes, key=lambda c: c.id)
        self.empty = empty
        self.ignore = ignore
        self.learning_map = learning_map or {}
        if [c.id for c in self.classes] != list(range(len(self.classes))):
            raise ValueError(f"class ids of '{dataset}' must run 0..n-1")

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.classes]

    def id_of(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.id
        raise KeyError(f"no class '{name}' in {self.dataset}")

    def remap(self, raw: np.ndarray) -> np.ndarray:
        # Raw dataset ids -> training ids; ids missing from the map become ignore
        raw = np.asarray(raw)
        if not self.learning_map:
            return raw.astype(np.uint16)
        lut = np.full(max(max(self.learning_map), int(raw.max(initial=0))) + 1,
                      self.ignore, dtype=np.uint16)
        for k, v in self.learning_map.items():
            lut[k] = v
        return lut[raw]


def load_class_table(dataset: str, path: Path = RES_DIR / "semantic_classes.json") -> ClassTable:
    with open(path) as f:
        tables = json.load(f)["dataset"]
    for table in tables:
        if table["name"] == dataset:
            classes = [SemanticClass(c["id"], c["name"], c.get("color"))
                       for c in table["classes"]]
            lmap = {int(k): int(v) for k, v in table.get("learning_map", {}).items()}
            return ClassTable(dataset, classes, table.get("empty", 0),
                              table.get("ignore", 255), lmap)
    raise KeyError(f"no class table for '{dataset}'")
