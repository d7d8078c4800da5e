"""JSON-lines dataset files and their manifests."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from pydantic import ValidationError

from ..errors import DataContractError
from ..models import Dataset, DatasetMode, SequenceSample

SAMPLE_KEYS = ("points", "snr_db", "label", "position_index", "split")


def sample_to_dict(sample: SequenceSample) -> Dict[str, Any]:
    """Sample as a dict with a fixed key order."""
    return {
        "points": [float(p) for p in sample.points],
        "snr_db": float(sample.snr_db),
        "label": sample.label.value,
        "position_index": sample.position_index,
        "split": sample.split.value if sample.split else None,
    }


def sample_to_line(sample: SequenceSample) -> str:
    return json.dumps(sample_to_dict(sample), separators=(",", ":"))


def parse_sample_line(line: str, line_number: Optional[int] = None) -> SequenceSample:
    """Parse one dataset line; errors name the line number."""
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise DataContractError(f"not valid JSON ({e.msg})", line_number) from e
    if not isinstance(data, dict):
        raise DataContractError("expected a JSON object", line_number)
    unknown = set(data) - set(SAMPLE_KEYS)
    if unknown:
        raise DataContractError(f"unknown fields {sorted(unknown)}", line_number)
    try:
        return SequenceSample(**data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise DataContractError(problems, line_number) from e


def manifest_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.manifest.json")


def build_manifest(dataset: Dataset) -> Dict[str, Any]:
    return {
        "mode": dataset.mode.value,
        "seed": dataset.seed,
        "config_hash": dataset.config_hash,
        "count": len(dataset.samples),
        "class_counts": dataset.class_counts,
        "split_counts": dataset.split_counts,
    }


def write_samples(samples: Iterable[SequenceSample], path: Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sample in samples:
            f.write(sample_to_line(sample))
            f.write("\n")
            count += 1
    return count


def save_dataset(dataset: Dataset, path: Path) -> Path:
    """Write the JSONL file and its manifest; returns the manifest path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_samples(dataset.samples, path)
    target = manifest_path(path)
    with open(target, "w", encoding="utf-8", newline="\n") as f:
        json.dump(build_manifest(dataset), f, indent=2)
        f.write("\n")
    return target


def read_samples(path: Path) -> List[SequenceSample]:
    """Read every non-blank line of a JSONL dataset."""
    samples: List[SequenceSample] = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if line.strip():
                samples.append(parse_sample_line(line, number))
    return samples


def load_dataset(path: Path) -> Dataset:
    """Load a dataset; the manifest supplies mode, seed and config hash when present."""
    path = Path(path)
    samples = read_samples(path)
    target = manifest_path(path)
    if target.exists():
        with open(target, "r", encoding="utf-8") as f:
            try:
                manifest = json.load(f)
            except json.JSONDecodeError as e:
                raise DataContractError(f"{target}: not valid JSON ({e.msg})") from e
        if manifest.get("count") != len(samples):
            raise DataContractError(
                f"{target}: manifest lists {manifest.get('count')} samples, file has {len(samples)}"
            )
        try:
            mode = DatasetMode(manifest.get("mode", DatasetMode.DIAG.value))
        except ValueError as e:
            raise DataContractError(f"{target}: {e}") from e
        return Dataset(
            mode=mode,
            seed=int(manifest.get("seed", 0)),
            config_hash=str(manifest.get("config_hash", "")),
            samples=samples,
        )
    has_normals = any(not s.is_faulty for s in samples)
    mode = DatasetMode.AE if has_normals else DatasetMode.DIAG
    return Dataset(mode=mode, seed=0, samples=samples)
