"""
Record exporters
JSON-lines records, JSON metadata, CSV reports, npz sample pools and debug dumps
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from src.metrics.poincare import PoincareHistogram, bin_edges

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays -> Python types, NaN/inf -> None"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(to_jsonable(record), ensure_ascii=False, sort_keys=True)


class RecordExporter:
    """Write and read pipeline artifacts"""

    @staticmethod
    def write_json(data: Dict[str, Any], output_path) -> None:
        """Write one JSON document (sorted keys)"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(to_jsonable(data), f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write("\n")
        logger.debug(f"Wrote JSON: {output_path}")

    @staticmethod
    def read_json(path) -> Optional[Dict[str, Any]]:
        path = Path(path)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)

    @staticmethod
    def write_jsonl(records: Iterable[Dict[str, Any]], output_path) -> int:
        """Write records to a new JSON-lines file"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        n = 0
        with open(output_path, "w", encoding="utf-8") as f:
            for record in records:
                f.write(_dumps(record) + "\n")
                n += 1
        logger.info(f"Exported {n} records to JSONL: {output_path}")
        return n

    @staticmethod
    def append_jsonl(record: Dict[str, Any], output_path) -> None:
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "a", encoding="utf-8") as f:
            f.write(_dumps(record) + "\n")

    @staticmethod
    def read_jsonl(path) -> List[Dict[str, Any]]:
        path = Path(path)
        if not path.exists():
            return []
        records = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(json.loads(line))
        return records

    @classmethod
    def truncate_jsonl(cls, path, keep: Callable[[Dict[str, Any]], bool]) -> int:
        """Rewrite a JSON-lines file keeping only records accepted by keep"""
        path = Path(path)
        if not path.exists():
            return 0
        records = cls.read_jsonl(path)
        kept = [r for r in records if keep(r)]
        if len(kept) != len(records):
            with open(path, "w", encoding="utf-8") as f:
                for record in kept:
                    f.write(_dumps(record) + "\n")
            logger.info(f"Dropped {len(records) - len(kept)} records from {path}")
        return len(kept)

    @staticmethod
    def write_csv(frame: pd.DataFrame, output_path) -> None:
        """Write a report table"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index=False, float_format="%.6g")
        logger.info(f"Exported {len(frame)} rows to CSV: {output_path}")

    @staticmethod
    def save_pools(pools: Dict[str, np.ndarray], output_path) -> None:
        """Save per-property sample pools of one segment"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(output_path, **pools)

    @staticmethod
    def load_pools(path) -> Optional[Dict[str, np.ndarray]]:
        path = Path(path)
        if not path.exists():
            return None
        with np.load(path) as data:
            return {name: data[name] for name in data.files}

    @staticmethod
    def save_population(thetas: np.ndarray, eps: np.ndarray, segment: int, output_path) -> None:
        """GA population checkpoint after a completed segment"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(output_path).with_suffix(".tmp.npz")
        np.savez(tmp, thetas=thetas, eps=eps, segment=np.array(segment))
        tmp.replace(output_path)

    @staticmethod
    def load_population(path):
        """Returns (thetas, eps, last segment index) or None"""
        path = Path(path)
        if not path.exists():
            return None
        with np.load(path) as data:
            return data["thetas"], data["eps"], int(data["segment"])

    @staticmethod
    def write_beats_csv(beat_times: np.ndarray, valid: np.ndarray, recording_start: str, output_path) -> None:
        """Beat file in the ingest format with a recording-start comment"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# recording_start: {recording_start}\n")
            writer = csv.writer(f)
            writer.writerow(["t_ms", "valid"])
            for t, ok in zip(beat_times, valid):
                writer.writerow([f"{t:.3f}", int(bool(ok))])
        logger.info(f"Exported {len(beat_times)} beats to {output_path}")

    @staticmethod
    def write_afr_csv(minutes: np.ndarray, afr_hz: np.ndarray, output_path) -> None:
        """AFR trend in Hz; NaN minutes are written as empty cells"""
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["minute", "afr_hz"])
            for m, value in zip(minutes, afr_hz):
                writer.writerow([int(m), "" if not np.isfinite(value) else f"{value:.4f}"])

    @staticmethod
    def dump_histogram(hist: PoincareHistogram, output_path) -> None:
        """31 x 31 count matrix; rows RR_n bins, columns RR_n+1 bins (lower edges in ms)"""
        edges = bin_edges()[:-1].astype(int)
        frame = pd.DataFrame(hist.counts, index=edges, columns=edges)
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index_label="rr_n")

    @staticmethod
    def dump_simulation(ventricular_times: np.ndarray, output_path) -> None:
        """Ventricular activation times and the RR intervals ending at them"""
        rr = np.concatenate([[np.nan], np.diff(ventricular_times)]) if len(ventricular_times) else np.empty(0)
        frame = pd.DataFrame({"t_ms": ventricular_times, "rr_ms": rr})
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index=False)

    @staticmethod
    def dump_samples(samples: Dict[str, np.ndarray], output_path) -> None:
        """Raw property samples in long format (property, value)"""
        frame = pd.concat(
            [pd.DataFrame({"property": name, "value_ms": values}) for name, values in samples.items()],
            ignore_index=True,
        )
        Path(output_path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output_path, index=False)
