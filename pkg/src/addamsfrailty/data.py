"""Clustered current-status datasets and their CSV representation.

The on-disk format is long: one row per (cluster, unit) with required
columns ``cluster_id, unit, time, event`` plus optional ``stratum`` and
``weight`` columns and arbitrary covariate columns.  ``weight`` and
``stratum`` must be constant within a cluster.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import (
    BadEventFlag,
    DatasetError,
    DuplicateUnit,
    InvalidParameters,
    MalformedRow,
    NegativeTimeRow,
)

__all__ = ["UnitRecord", "Cluster", "CurrentStatusDataset", "read_csv", "write_csv"]

REQUIRED_COLUMNS = ("cluster_id", "unit", "time", "event")
RESERVED_COLUMNS = REQUIRED_COLUMNS + ("stratum", "weight")


@dataclass(frozen=True)
class UnitRecord:
    unit: str
    time: float
    event: int
    covariates: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    records: Tuple[UnitRecord, ...]
    stratum: Optional[str] = None
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise InvalidParameters(f"cluster {self.cluster_id!r} has no unit records")
        units = [r.unit for r in self.records]
        if len(set(units)) != len(units):
            dup = next(u for u in units if units.count(u) > 1)
            raise DuplicateUnit(self.cluster_id, dup)
        if not self.weight > 0:
            raise InvalidParameters(f"cluster {self.cluster_id!r}: weight must be > 0")
        for r in self.records:
            if r.time < 0:
                raise InvalidParameters(
                    f"cluster {self.cluster_id!r}: negative monitoring time"
                )
            if r.event not in (0, 1):
                raise InvalidParameters(
                    f"cluster {self.cluster_id!r}: event must be 0 or 1"
                )

    @property
    def event_units(self) -> Tuple[str, ...]:
        return tuple(r.unit for r in self.records if r.event == 1)


@dataclass(frozen=True)
class CurrentStatusDataset:
    clusters: Tuple[Cluster, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        ids = [c.cluster_id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise InvalidParameters("duplicate cluster ids in dataset")

    def __len__(self):
        return len(self.clusters)

    @property
    def covariate_names(self) -> Tuple[str, ...]:
        names: List[str] = []
        for c in self.clusters:
            for r in c.records:
                for k in r.covariates:
                    if k not in names:
                        names.append(k)
        return tuple(names)


def read_csv(path) -> CurrentStatusDataset:
    """Parse a long-format dataset, reporting every rejected row at once."""
    problems: list = []
    order: List[str] = []
    per_cluster: Dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DatasetError([MalformedRow(1, f"missing columns {missing}")])
        covariate_cols = [c for c in header if c not in RESERVED_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            try:
                cid = (row["cluster_id"] or "").strip()
                unit = (row["unit"] or "").strip()
                if not cid or not unit:
                    problems.append(MalformedRow(lineno, "(empty cluster_id or unit)"))
                    continue
                try:
                    time = float(row["time"])
                except (TypeError, ValueError):
                    problems.append(MalformedRow(lineno, "(non-numeric time)"))
                    continue
                if time < 0:
                    problems.append(NegativeTimeRow(lineno, time))
                    continue
                raw_event = (row["event"] or "").strip()
                if raw_event not in ("0", "1"):
                    problems.append(BadEventFlag(lineno, raw_event))
                    continue
                covs = {}
                bad_cov = False
                for c in covariate_cols:
                    val = row.get(c)
                    if val is None or val == "":
                        continue
                    try:
                        covs[c] = float(val)
                    except ValueError:
                        problems.append(MalformedRow(lineno, f"(non-numeric {c!r})"))
                        bad_cov = True
                        break
                if bad_cov:
                    continue
                stratum = (row.get("stratum") or "").strip() or None
                weight = float(row["weight"]) if row.get("weight") not in (None, "") else 1.0
                if cid not in per_cluster:
                    order.append(cid)
                    per_cluster[cid] = {
                        "stratum": stratum, "weight": weight, "records": [], "units": set(),
                    }
                info = per_cluster[cid]
                if unit in info["units"]:
                    problems.append(DuplicateUnit(cid, unit, line=lineno))
                    continue
                if info["stratum"] != stratum or info["weight"] != weight:
                    problems.append(
                        MalformedRow(lineno, "(stratum/weight differ within cluster)")
                    )
                    continue
                info["units"].add(unit)
                info["records"].append(UnitRecord(unit, time, int(raw_event), covs))
            except Exception as exc:  # pragma: no cover - safety net
                problems.append(MalformedRow(lineno, f"({exc})"))
    if problems:
        raise DatasetError(problems)
    clusters = [
        Cluster(
            cluster_id=cid,
            records=tuple(per_cluster[cid]["records"]),
            stratum=per_cluster[cid]["stratum"],
            weight=per_cluster[cid]["weight"],
        )
        for cid in order
    ]
    return CurrentStatusDataset(tuple(clusters))


def write_csv(dataset: CurrentStatusDataset, path) -> None:
    """Emit the dataset in the same format ``read_csv`` ingests."""
    cov_names = dataset.covariate_names
    has_stratum = any(c.stratum is not None for c in dataset.clusters)
    has_weight = any(c.weight != 1.0 for c in dataset.clusters)
    header = list(REQUIRED_COLUMNS)
    if has_stratum:
        header.append("stratum")
    if has_weight:
        header.append("weight")
    header.extend(cov_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in dataset.clusters:
            for r in c.records:
                row = [c.cluster_id, r.unit, repr(r.time), str(r.event)]
                if has_stratum:
                    row.append(c.stratum if c.stratum is not None else "")
                if has_weight:
                    row.append(repr(c.weight))
                row.extend(
                    repr(r.covariates[n]) if n in r.covariates else "" for n in cov_names
                )
                writer.writerow(row)
