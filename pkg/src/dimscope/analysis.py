"""SNR, per-interval aggregation, trend checks and plot-data emission."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .classical import InsufficientSamplesError, mle_id_aggregate, ppca_id_global
from .core import IdEstimate, ImageGrid, NumericalError, PointSet, ValidationError
from .energy import EnergyRecord
from .io import FR_CLASSES, Catalog, read_csv, write_csv
from .svg import bar_chart, loglog_scatter

MAD_TO_SIGMA = 1.4826
NA = None


@dataclass
class IntervalTable:
    method: str
    by: str = "mean"
    cells: dict[int, float | None] = field(default_factory=dict)
    counts: dict[int, int] = field(default_factory=dict)
    excluded: dict[int, int] = field(default_factory=dict)
    notes: dict[int, str] = field(default_factory=dict)

    def intervals(self) -> list[int]:
        return sorted(self.cells)

    def values(self) -> list[float | None]:
        return [self.cells[i] for i in self.intervals()]

    def rows(self):
        for i in self.intervals():
            yield (self.method, self.by, i, self.cells[i], self.counts.get(i, 0), self.excluded.get(i, 0), self.notes.get(i, ""))


TABLE_HEADER = ["method", "by", "interval", "estimate", "n_samples", "excluded_count", "note"]


@dataclass(frozen=True)
class JoinedRecord:
    sample_id: str
    k_hat: float | None
    snr: float | None = None
    fr_class: str = "unlabeled"
    mean_interval: int | None = None
    std_interval: int | None = None


# -- SNR -------------------------------------------------------------------


def border_ring(shape, width: int = 5) -> np.ndarray:
    """Boolean mask of pixels within ``width`` of the image edge."""
    h, w = shape
    mask = np.ones(shape, dtype=bool)
    if 2 * width < h and 2 * width < w:
        mask[width : h - width, width : w - width] = False
    return mask


def estimate_snr(img: ImageGrid, border_width: int = 5) -> float:
    """Peak pixel over the robust (MAD) noise level of the border ring."""
    if border_width < 1:
        raise ValidationError("border width must be at least 1")
    ring = img.pixels[border_ring(img.pixels.shape, border_width)]
    mad = np.median(np.abs(ring - np.median(ring)))
    if mad <= 0:
        raise NumericalError(f"image {img.id!r}: zero border MAD, SNR undefined")
    return float(img.pixels.max() / (MAD_TO_SIGMA * mad))


# -- joins and aggregation -------------------------------------------------


def join_records(
    estimates: Sequence[IdEstimate],
    energy: Sequence[EnergyRecord] = (),
    catalog: Catalog | None = None,
    snr: Mapping[str, float] | None = None,
) -> list[JoinedRecord]:
    """One joined row per estimate; catalog SNR is used when no measured SNR is given."""
    energy_by_id = {r.sample_id: r for r in energy}
    cat = catalog.by_id() if catalog is not None else {}
    snr = snr or {}
    out = []
    for est in estimates:
        rec = energy_by_id.get(est.sample_id)
        entry = cat.get(est.sample_id)
        value = snr.get(est.sample_id, entry.snr if entry else None)
        out.append(
            JoinedRecord(
                sample_id=est.sample_id,
                k_hat=est.k_hat,
                snr=value,
                fr_class=entry.fr_class if entry else "unlabeled",
                mean_interval=rec.mean_interval if rec else None,
                std_interval=rec.std_interval if rec else None,
            )
        )
    return out


def _interval_of(rec: EnergyRecord, by: str) -> int:
    if by == "mean":
        return rec.mean_interval
    if by == "std":
        return rec.std_interval
    raise ValidationError(f"intervals are by 'mean' or 'std', not {by!r}")


def aggregate_by_interval(
    estimates: Sequence[IdEstimate] | None,
    records: Sequence[EnergyRecord],
    method: str,
    by: str = "mean",
    points: PointSet | None = None,
) -> IntervalTable:
    """Aggregate per-sample estimates within each energy interval.

    diffusion and lpca cells are plain means, mle cells use the
    inverse-mean rule, and ppca refits the global model on each interval's
    samples (``points`` required), giving N/A when there are too few.
    """
    labels = {r.sample_id: _interval_of(r, by) for r in records}
    if not labels:
        raise ValidationError("no energy records to aggregate over")
    n_intervals = max(labels.values())
    table = IntervalTable(method=method, by=by)

    if method == "ppca":
        if points is None:
            raise ValidationError("PPCA interval aggregation needs the point set")
        row_of = {sid: i for i, sid in enumerate(points.ids)}
        for iv in range(1, n_intervals + 1):
            rows = [row_of[s] for s, lab in labels.items() if lab == iv and s in row_of]
            table.counts[iv] = len(rows)
            try:
                if not rows:
                    raise InsufficientSamplesError("insufficient samples: empty interval")
                table.cells[iv] = float(ppca_id_global(points.subset(sorted(rows))).q_star)
            except InsufficientSamplesError as exc:
                table.cells[iv] = NA
                table.notes[iv] = str(exc)
        return table

    if estimates is None:
        raise ValidationError(f"{method} aggregation needs per-sample estimates")
    groups: dict[int, list[IdEstimate]] = {iv: [] for iv in range(1, n_intervals + 1)}
    for est in estimates:
        if est.sample_id in labels:
            groups[labels[est.sample_id]].append(est)
    for iv, members in groups.items():
        kept = [e.k_hat for e in members if e.k_hat is not None]
        table.counts[iv] = len(members)
        table.excluded[iv] = len(members) - len(kept)
        if not kept:
            table.cells[iv] = NA
            table.notes[iv] = "empty interval" if not members else "all samples excluded"
        elif method == "mle":
            table.cells[iv] = mle_id_aggregate(kept).estimate
        else:
            table.cells[iv] = float(np.mean(kept))
    return table


def trend_check(table) -> float:
    """Spearman rank correlation between interval index and estimate, N/A cells skipped.

    Ties get average ranks; a constant column has no ordering and yields 0.
    """
    items = table.cells.items() if isinstance(table, IntervalTable) else dict(table).items()
    pairs = sorted((int(i), float(v)) for i, v in items if v is not None and not math.isnan(v))
    if len(pairs) < 3:
        raise ValidationError(f"trend check needs at least 3 non-N/A cells, got {len(pairs)}")
    x = rankdata([p[0] for p in pairs])
    y = rankdata([p[1] for p in pairs])
    x, y = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(np.dot(x, x) * np.dot(y, y)))
    if denom == 0:
        return 0.0
    return float(np.clip(np.dot(x, y) / denom, -1.0, 1.0))


# -- reference interval tables ------------------------------------------


def load_fixture_tables(path=None) -> list[IntervalTable]:
    """Read interval tables in the ``table,method,interval,value`` fixture schema.

    With no path, the bundled reference mean- and
    std-interval tables are used.
    """
    if path is None:
        ref = resources.files("dimscope") / "data" / "reference_interval_tables.csv"
        with resources.as_file(ref) as p:
            rows = read_csv(p)
    else:
        rows = read_csv(path)
    tables: dict[tuple[str, str], IntervalTable] = {}
    for row in rows:
        by = row.get("table") or row.get("by") or "mean"
        key = (row["method"], by)
        table = tables.setdefault(key, IntervalTable(method=row["method"], by=by))
        raw = (row.get("value") or row.get("estimate") or "").strip()
        iv = int(row["interval"])
        if raw.upper() in ("NA", "N/A", ""):
            table.cells[iv] = NA
            table.notes[iv] = "insufficient samples"
        else:
            table.cells[iv] = float(raw)
    return list(tables.values())


def fixture_trends(tables: Iterable[IntervalTable]) -> list[tuple[str, str, float | None, int]]:
    out = []
    for t in tables:
        usable = sum(v is not None for v in t.values())
        out.append((t.method, t.by, trend_check(t) if usable >= 3 else None, usable))
    return out


# -- emission --------------------------------------------------------------


def write_interval_tables(path, tables: Iterable[IntervalTable]) -> Path:
    return write_csv(path, TABLE_HEADER, [row for t in tables for row in t.rows()])


def write_spectra_csv(path, estimates: Iterable[IdEstimate]) -> Path:
    rows = []
    for est in estimates:
        for i, v in enumerate(est.spectrum, start=1):
            rows.append((est.sample_id, i, float(v)))
    return write_csv(path, ["sample_id", "index", "value"], rows)


def _plottable(rec: JoinedRecord) -> str:
    if rec.k_hat is None:
        return "no estimate"
    if rec.snr is None:
        return "no snr"
    if rec.k_hat <= 0 or rec.snr <= 0:
        return "non-positive value on log axis"
    return ""


def emit_plots(
    joined: Sequence[JoinedRecord],
    out_dir,
    tables: Sequence[IntervalTable] = (),
    spectra: Sequence[IdEstimate] = (),
) -> list[Path]:
    """Write SNR-vs-iD scatter (CSV + log-log SVG), per-interval bar data and score spectra.

    Every joined record gets a row in the scatter CSV; rows that cannot sit
    on log axes carry the reason instead of a mark.
    """
    if not joined:
        raise ValidationError("nothing to plot: no joined records")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    rows, marks = [], []
    for rec in joined:
        fr = rec.fr_class if rec.fr_class in FR_CLASSES else "unlabeled"
        reason = _plottable(rec)
        rows.append((rec.sample_id, fr, rec.k_hat, rec.snr, not reason, reason))
        if not reason:
            marks.append((float(rec.k_hat), float(rec.snr), fr, rec.sample_id))
    try:
        written.append(write_csv(out / "snr_vs_id.csv", ["sample_id", "fr_class", "k_hat", "snr", "plotted", "reason"], rows))
        svg = loglog_scatter(marks, categories=FR_CLASSES, x_label="intrinsic dimension", y_label="SNR")
        (out / "snr_vs_id.svg").write_text(svg)
        written.append(out / "snr_vs_id.svg")
        if tables:
            written.append(write_interval_tables(out / "interval_id.csv", tables))
            for t in tables:
                bars = [(str(i), v) for i, v in zip(t.intervals(), t.values())]
                name = f"interval_id_{_slug(t.method)}_{t.by}.svg"
                (out / name).write_text(bar_chart(bars, title=f"{t.method} by {t.by} interval"))
                written.append(out / name)
        if spectra:
            written.append(write_spectra_csv(out / "score_spectra.csv", spectra))
    except OSError as exc:
        raise ValidationError(f"cannot write plots to {out}: {exc}") from exc
    return written


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text).strip("_").lower()
