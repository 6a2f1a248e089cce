"""CSV/JSON input and output.

File formats (site order in ``locations.csv`` is the canonical index order
for every downstream vector and matrix):

- ``locations.csv``:    header ``site_id,x1[,x2,...]``
- ``observations.csv``: header ``site_id,t,value`` (long format)
- ``weights.csv``:      header ``site_id,lambda``
- ``prediction.csv``:   header ``t,value``
- model files (variogram, basis): JSON with a ``schema_version`` field

Floats are serialized with 17 significant digits so a write/read round trip
is exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, IoError

SCHEMA_VERSION = 1

_FLOAT_FMT = "{:.17g}"


def _fmt(x: float) -> str:
    return _FLOAT_FMT.format(float(x))


def _parse_float(text: str, context: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise DataError(f"{context}: not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise DataError(f"{context}: non-finite value {text!r}")
    return value


@dataclass(frozen=True)
class LocationSet:
    """Observed site identifiers and their coordinates (n x d), in file order."""

    site_ids: tuple[str, ...]
    coords: np.ndarray  # shape (n, d)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", coords)
        if coords.ndim != 2 or coords.shape[0] != len(self.site_ids):
            raise DataError("coords must be an (n, d) array matching site_ids")
        if coords.shape[1] < 1:
            raise DataError("coordinate dimension must be >= 1")
        if not np.all(np.isfinite(coords)):
            raise DataError("coordinates must be finite")
        if len(set(self.site_ids)) != len(self.site_ids):
            raise DataError("duplicate site_id")
        # kriging assumes distinct locations
        for i in range(len(self.site_ids)):
            for j in range(i + 1, len(self.site_ids)):
                if np.array_equal(coords[i], coords[j]):
                    raise DataError(
                        f"sites {self.site_ids[i]!r} and {self.site_ids[j]!r} "
                        "share identical coordinates"
                    )

    @property
    def n(self) -> int:
        return len(self.site_ids)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def index_of(self, site_id: str) -> int:
        try:
            return self.site_ids.index(site_id)
        except ValueError as exc:
            raise DataError(f"unknown site_id {site_id!r}") from exc

    def subset(self, indices) -> "LocationSet":
        idx = list(indices)
        return LocationSet(
            tuple(self.site_ids[i] for i in idx), self.coords[idx]
        )


@dataclass
class LongitudinalTable:
    """Long-format observations grouped by site.

    ``times[i]`` and ``values[i]`` hold the observations of site i in the
    order of the associated LocationSet.
    """

    locations: LocationSet
    times: list[np.ndarray] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.times) != self.locations.n or len(self.values) != self.locations.n:
            raise DataError("per-site arrays must match the location set size")
        for sid, t, v in zip(self.locations.site_ids, self.times, self.values):
            t = np.asarray(t, dtype=float)
            v = np.asarray(v, dtype=float)
            if t.shape != v.shape or t.ndim != 1:
                raise DataError(f"site {sid!r}: times/values shape mismatch")
            if len(np.unique(t)) != len(t):
                raise DataError(f"site {sid!r}: repeated time point")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
                raise DataError(f"site {sid!r}: non-finite observation")

    @property
    def n_rows(self) -> int:
        return sum(len(t) for t in self.times)


def load_locations(path) -> LocationSet:
    """Read ``locations.csv``; row order is preserved as the site index order."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            if header[0] != "site_id" or len(header) < 2:
                raise DataError(f"{path}: expected header site_id,x1[,x2,...]")
            d = len(header) - 1
            site_ids: list[str] = []
            rows: list[list[float]] = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != d + 1:
                    raise DataError(f"{path}:{lineno}: expected {d + 1} columns")
                site_ids.append(row[0])
                rows.append([_parse_float(x, f"{path}:{lineno}") for x in row[1:]])
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not site_ids:
        raise DataError(f"{path}: no data rows")
    return LocationSet(tuple(site_ids), np.array(rows, dtype=float))


def load_longitudinal(path, locations: LocationSet) -> LongitudinalTable:
    """Read ``observations.csv`` and group rows by site."""
    per_site_t: dict[str, list[float]] = {sid: [] for sid in locations.site_ids}
    per_site_v: dict[str, list[float]] = {sid: [] for sid in locations.site_ids}
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            if header != ["site_id", "t", "value"]:
                raise DataError(f"{path}: expected header site_id,t,value")
            n_rows = 0
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise DataError(f"{path}:{lineno}: expected 3 columns")
                sid = row[0]
                if sid not in per_site_t:
                    raise DataError(f"{path}:{lineno}: unknown site_id {sid!r}")
                per_site_t[sid].append(_parse_float(row[1], f"{path}:{lineno}"))
                per_site_v[sid].append(_parse_float(row[2], f"{path}:{lineno}"))
                n_rows += 1
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if n_rows == 0:
        raise DataError(f"{path}: no data rows")
    return LongitudinalTable(
        locations,
        [np.array(per_site_t[sid]) for sid in locations.site_ids],
        [np.array(per_site_v[sid]) for sid in locations.site_ids],
    )


def _write_csv(path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_locations(path, locations: LocationSet) -> None:
    header = ["site_id"] + [f"x{k + 1}" for k in range(locations.dim)]
    _write_csv(path, header,
               ((sid, *map(_fmt, row))
                for sid, row in zip(locations.site_ids, locations.coords)))


def write_observations(path, table: LongitudinalTable) -> None:
    rows = ((sid, _fmt(t), _fmt(v))
            for sid, ts, vs in zip(table.locations.site_ids, table.times,
                                   table.values)
            for t, v in zip(ts, vs))
    _write_csv(path, ["site_id", "t", "value"], rows)


def write_weights(path, site_ids, lam) -> None:
    lam = np.asarray(lam, dtype=float)
    if len(site_ids) != len(lam):
        raise ValueError("site_ids and lambda lengths differ")
    _write_csv(path, ["site_id", "lambda"],
               ((sid, _fmt(v)) for sid, v in zip(site_ids, lam)))


def read_weights(path) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["site_id", "lambda"]:
                raise DataError(f"{path}: expected header site_id,lambda")
            ids, vals = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                ids.append(row[0])
                vals.append(_parse_float(row[1], f"{path}:{lineno}"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return ids, np.array(vals)


def write_prediction(path, grid, values) -> None:
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.shape != values.shape:
        raise ValueError("grid and values lengths differ")
    _write_csv(path, ["t", "value"],
               ((_fmt(t), _fmt(v)) for t, v in zip(grid, values)))


def read_prediction(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["t", "value"]:
                raise DataError(f"{path}: expected header t,value")
            ts, vs = [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                ts.append(_parse_float(row[0], f"{path}:{lineno}"))
                vs.append(_parse_float(row[1], f"{path}:{lineno}"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return np.array(ts), np.array(vs)


def write_json_model(path, payload: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **payload}
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_json_model(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if "schema_version" not in doc:
        raise DataError(f"{path}: missing schema_version")
    return doc
