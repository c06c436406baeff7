"""
Checkpoint Storage Service
Writes and reads provenance-stamped model checkpoints as canonical JSON documents
"""

import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from models import ModelCheckpoint, ModelParams, ModelShapeError, OptimizerState, PARAM_NAMES

CHECKPOINT_FORMAT = "imbalance-checkpoint/1"


def canonical_json(data) -> str:
    """Sorted keys, fixed separators and shortest round-trip float repr, so equal data gives equal bytes."""
    return json.dumps(data, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def _encode_array(array: np.ndarray) -> dict:
    return {"shape": list(array.shape), "data": [float(v) for v in array.ravel()]}


def _decode_array(data: dict) -> np.ndarray:
    return np.asarray(data["data"], dtype=np.float64).reshape(data["shape"])


def checkpoint_to_dict(checkpoint: ModelCheckpoint) -> dict:
    params = checkpoint.params
    data = {
        "format": CHECKPOINT_FORMAT,
        "task": checkpoint.task,
        "fold": checkpoint.fold,
        "epoch": checkpoint.epoch,
        "score": float(checkpoint.score),
        "labels": list(checkpoint.labels),
        "mode": params.mode,
        "nonlinearity": params.nonlinearity,
        "params": {name: _encode_array(array) for name, array in params.arrays().items()},
        "optimizer": None,
    }
    state = checkpoint.optimizer
    if state is not None:
        data["optimizer"] = {
            "step": state.step, "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "weight_decay": state.weight_decay,
            "m": {name: _encode_array(array) for name, array in state.m.items()},
            "v": {name: _encode_array(array) for name, array in state.v.items()},
        }
    return data


def checkpoint_from_dict(data: dict) -> ModelCheckpoint:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ModelShapeError(f"Unsupported checkpoint format '{data.get('format')}'")
    arrays = {name: _decode_array(encoded) for name, encoded in data["params"].items()}
    unknown = set(arrays) - set(PARAM_NAMES)
    if unknown:
        raise ModelShapeError(f"Unknown checkpoint parameters: {', '.join(sorted(unknown))}")
    params = ModelParams(mode=data["mode"], nonlinearity=data.get("nonlinearity", "relu"), **arrays)

    optimizer = None
    if data.get("optimizer") is not None:
        encoded = data["optimizer"]
        optimizer = OptimizerState(
            step=int(encoded["step"]), lr=encoded["lr"], beta1=encoded["beta1"], beta2=encoded["beta2"],
            eps=encoded["eps"], weight_decay=encoded["weight_decay"],
            m={name: _decode_array(a) for name, a in encoded["m"].items()},
            v={name: _decode_array(a) for name, a in encoded["v"].items()},
        )
    return ModelCheckpoint(params=params, task=data["task"], fold=int(data["fold"]), epoch=int(data["epoch"]),
                           score=float(data["score"]), labels=tuple(data["labels"]), optimizer=optimizer)


def save_checkpoint(checkpoint: ModelCheckpoint, path: Union[str, Path]) -> str:
    """Write the checkpoint and return the sha256 of its bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = canonical_json(checkpoint_to_dict(checkpoint)).encode("utf-8")
    path.write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def load_checkpoint(path: Union[str, Path]) -> ModelCheckpoint:
    with open(path, "r", encoding="utf-8") as handle:
        return checkpoint_from_dict(json.load(handle))


class CheckpointStore:
    """Run directory laid out as <run>/<task>/<fold>/best.ckpt with a manifest.json of scores"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.entries: Dict[str, List[dict]] = {}

    def path_for(self, task: str, fold: int) -> Path:
        return self.root / task / str(fold) / "best.ckpt"

    def save(self, checkpoint: ModelCheckpoint) -> Path:
        path = self.path_for(checkpoint.task, checkpoint.fold)
        digest = save_checkpoint(checkpoint, path)
        entries = [e for e in self.entries.get(checkpoint.task, []) if e["fold"] != checkpoint.fold]
        entries.append({"fold": checkpoint.fold, "epoch": checkpoint.epoch, "score": float(checkpoint.score),
                        "path": path.relative_to(self.root).as_posix(), "sha256": digest})
        self.entries[checkpoint.task] = sorted(entries, key=lambda e: e["fold"])
        return path

    def write_manifest(self, features: Optional[dict] = None, labels: Optional[Dict[str, List[str]]] = None) -> Path:
        manifest = {"tasks": self.entries, "features": features, "labels": labels or {}}
        path = self.root / "manifest.json"
        path.write_text(canonical_json(manifest), encoding="utf-8")
        return path

    @staticmethod
    def read_manifest(root: Union[str, Path]) -> dict:
        path = Path(root) / "manifest.json"
        if not path.exists():
            raise ModelShapeError(f"No manifest.json in {root}")
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)

    @staticmethod
    def load_task(root: Union[str, Path], task: str) -> List[ModelCheckpoint]:
        """Load every fold checkpoint of a task listed in the manifest, verifying checksums."""
        root = Path(root)
        manifest = CheckpointStore.read_manifest(root)
        checkpoints = []
        for entry in manifest["tasks"].get(task, []):
            path = root / entry["path"]
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != entry["sha256"]:
                raise ModelShapeError(f"Checksum mismatch for {path}")
            checkpoints.append(load_checkpoint(path))
        return checkpoints
