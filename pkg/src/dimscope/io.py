"""Binary tensor container, CSV schemas and JSON run manifests.

Tensor layout (all integers little-endian)::

    offset  size     field
    0       8        magic b"DIMSCOPE"
    8       4        version (u32), currently 1
    12      1        dtype code (u8), 1 = float64 LE
    13      1        rank (u8), at most 4
    14      8*rank   dims (u64 each)
    ...     8*prod   payload, row-major
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ValidationError

MAGIC = b"DIMSCOPE"
VERSION = 1
DTYPE_F64 = 1
MAX_RANK = 4
MAX_PAYLOAD_BYTES = 1 << 40

CONSENSUS_MIN = 0.65
ANGULAR_SIZE_MIN = 20.0
FR_CLASSES = ("FRI", "FRII", "unlabeled")


class FormatError(ValidationError):
    """Malformed tensor file; ``offset`` is the byte position where reading failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def write_tensor(path, values, dims=None) -> Path:
    arr = np.asarray(values, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(x) for x in dims)
        if math.prod(dims) != arr.size:
            raise ValidationError(f"dims {dims} do not match {arr.size} values")
        arr = arr.reshape(dims)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ValidationError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
    header = MAGIC + struct.pack("<IBB", VERSION, DTYPE_F64, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 14:
        raise FormatError(f"truncated header: {len(raw)} bytes", offset=len(raw))
    if raw[:8] != MAGIC:
        raise FormatError(f"bad magic {raw[:8]!r}", offset=0)
    version, dtype, rank = struct.unpack_from("<IBB", raw, 8)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=8)
    if dtype != DTYPE_F64:
        raise FormatError(f"unsupported dtype code {dtype}", offset=12)
    if not 1 <= rank <= MAX_RANK:
        raise FormatError(f"invalid rank {rank}", offset=13)
    end = 14 + 8 * rank
    if len(raw) < end:
        raise FormatError("truncated dims", offset=len(raw))
    dims = struct.unpack_from(f"<{rank}Q", raw, 14)
    nbytes = 8 * math.prod(dims)
    if nbytes > MAX_PAYLOAD_BYTES:
        raise FormatError(f"dims {dims} overflow the payload limit", offset=14)
    if len(raw) < end + nbytes:
        raise FormatError(f"truncated payload: expected {nbytes} bytes, found {len(raw) - end}", offset=len(raw))
    if len(raw) > end + nbytes:
        raise FormatError("trailing bytes after payload", offset=end + nbytes)
    return np.frombuffer(raw, dtype="<f8", count=math.prod(dims), offset=end).astype(np.float64).reshape(dims)


# -- catalog ---------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    sample_id: str
    fr_class: str = "unlabeled"
    consensus_level: float | None = None
    angular_size: float | None = None
    snr: float | None = None


@dataclass
class Catalog:
    entries: list[CatalogEntry] = field(default_factory=list)
    n_rejected: int = 0

    def by_id(self) -> dict[str, CatalogEntry]:
        return {e.sample_id: e for e in self.entries}


_ID_COLUMNS = ("id", "sample_id", "source_id")
_CONSENSUS_COLUMNS = ("consensus", "consensus_level")


def normalize_fr_class(label) -> str:
    key = str(label or "").strip().upper().replace(" ", "").replace("_", "")
    if key in ("FRI", "FR1", "1"):
        return "FRI"
    if key in ("FRII", "FR2", "2"):
        return "FRII"
    return "unlabeled"


def _opt_float(value):
    value = (value or "").strip()
    if value == "" or value.upper() in ("NA", "N/A", "NAN"):
        return None
    return float(value)


def read_catalog_csv(path) -> Catalog:
    """Read a source catalog, applying the consensus >= 0.65 and angular size > 20 arcsec cuts."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns = reader.fieldnames or []
        id_col = next((c for c in _ID_COLUMNS if c in columns), None)
        if id_col is None:
            raise ValidationError(f"catalog {path} has no id column (expected one of {_ID_COLUMNS})")
        cons_col = next((c for c in _CONSENSUS_COLUMNS if c in columns), None)
        catalog = Catalog()
        for row in reader:
            consensus = _opt_float(row.get(cons_col)) if cons_col else None
            size = _opt_float(row.get("angular_size"))
            if (consensus is not None and consensus < CONSENSUS_MIN) or (size is not None and size <= ANGULAR_SIZE_MIN):
                catalog.n_rejected += 1
                continue
            snr = _opt_float(row.get("snr"))
            catalog.entries.append(
                CatalogEntry(
                    sample_id=row[id_col].strip(),
                    fr_class=normalize_fr_class(row.get("fr_class")),
                    consensus_level=consensus,
                    angular_size=size,
                    snr=snr if snr is not None and snr > 0 else None,
                )
            )
    return catalog


# -- generic CSV helpers ---------------------------------------------------


def format_value(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_ids_csv(path) -> tuple[str, ...]:
    rows = read_csv(path)
    if not rows:
        return ()
    col = next((c for c in _ID_COLUMNS if c in rows[0]), None)
    if col is None:
        raise ValidationError(f"{path} has no id column")
    return tuple(r[col] for r in rows)


def write_ids_csv(path, ids) -> Path:
    return write_csv(path, ["id"], [[i] for i in ids])


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


# -- estimate records ------------------------------------------------------

ESTIMATE_HEADER = ["sample_id", "method", "k_hat", "gap_index", "truncated", "low_confidence", "excluded", "reason"]


def write_estimates_csv(path, estimates) -> Path:
    rows = [
        (e.sample_id, e.method, e.k_hat, e.gap_index, e.truncated, e.low_confidence, e.excluded, e.reason)
        for e in estimates
    ]
    return write_csv(path, ESTIMATE_HEADER, rows)


def _parse_number(text):
    text = text.strip()
    if text in ("", "NA"):
        return None
    value = float(text)
    return int(value) if text.lstrip("-").isdigit() else value


def read_estimates_csv(path, spectra: dict | None = None) -> list:
    from .core import IdEstimate

    out = []
    for row in read_csv(path):
        gap = _parse_number(row.get("gap_index", ""))
        out.append(
            IdEstimate(
                sample_id=row["sample_id"],
                method=row["method"],
                k_hat=_parse_number(row["k_hat"]),
                spectrum=(spectra or {}).get(row["sample_id"], np.empty(0)),
                gap_index=gap,
                truncated=row.get("truncated") == "true",
                low_confidence=row.get("low_confidence") == "true",
                reason=row.get("reason", ""),
            )
        )
    return out


def read_spectra_csv(path) -> dict[str, np.ndarray]:
    """Long-format ``sample_id,index,value`` rows back into per-sample arrays."""
    grouped: dict[str, list[tuple[int, float]]] = {}
    for row in read_csv(path):
        grouped.setdefault(row["sample_id"], []).append((int(row["index"]), float(row["value"])))
    return {sid: np.array([v for _, v in sorted(items)]) for sid, items in grouped.items()}
