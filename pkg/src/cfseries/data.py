"""Dataset model and long-form CSV storage for multivariate time series.

A sample holds V named variables observed over T timesteps as a (V, T) float
matrix, variable-major. A dataset directory contains three files:

  manifest.json   {"class_names": [...], "variable_names": [...], "timesteps": T}
  data.csv        header ``sample_id,variable,t,value``; one value per row,
                  rows in any order; t is a 0-based integer < timesteps
  labels.csv      header ``sample_id,label``; one 0-based class index per sample

Loading validates the full rectangular grid (no missing cells, no duplicate
cells, no unknown variables, every sample labelled exactly once), rejects
non-finite values, and normalizes order (samples sorted by id, values sorted
by timestep), so ``load_dataset(save_dataset(ds))`` reproduces ``ds``
bit-exactly. Datasets and samples are immutable after construction and safe
for any number of concurrent readers.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


class DatasetError(Exception):
    """Malformed dataset directory or violated dataset invariant."""


@dataclass(frozen=True)
class Manifest:
    class_names: tuple[str, ...]
    variable_names: tuple[str, ...]
    timesteps: int

    def __post_init__(self):
        if not self.class_names:
            raise DatasetError("manifest needs at least one class name")
        if len(set(self.class_names)) != len(self.class_names):
            raise DatasetError("duplicate class names in manifest")
        if not self.variable_names:
            raise DatasetError("manifest needs at least one variable name")
        if len(set(self.variable_names)) != len(self.variable_names):
            raise DatasetError("duplicate variable names in manifest")
        if not isinstance(self.timesteps, int) or self.timesteps < 1:
            raise DatasetError(f"timesteps must be a positive integer, got {self.timesteps!r}")

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise DatasetError(
                f"unknown class {name!r}; valid classes: {', '.join(self.class_names)}"
            ) from None

    def variable_index(self, name: str) -> int:
        try:
            return self.variable_names.index(name)
        except ValueError:
            raise DatasetError(
                f"unknown variable {name!r}; valid variables: {', '.join(self.variable_names)}"
            ) from None


@dataclass(frozen=True)
class MultivariateSeries:
    """One sample: a (V, T) matrix of finite floats with named variable rows."""

    variables: tuple[str, ...]
    values: np.ndarray
    sample_rate_hz: float | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DatasetError(f"values must be a V x T matrix, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DatasetError(f"values must be at least 1 x 1, got shape {values.shape}")
        if values.shape[0] != len(self.variables):
            raise DatasetError(
                f"{len(self.variables)} variable names for {values.shape[0]} rows"
            )
        if len(set(self.variables)) != len(self.variables):
            raise DatasetError("duplicate variable names in sample")
        if not np.isfinite(values).all():
            raise DatasetError("sample contains non-finite values")
        if self.sample_rate_hz is not None and not self.sample_rate_hz > 0:
            raise DatasetError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def n_variables(self) -> int:
        return self.values.shape[0]

    @property
    def n_timesteps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Id-keyed sample collection with single integer class labels."""

    manifest: Manifest
    samples: dict[str, MultivariateSeries]
    labels: dict[str, int]

    def __post_init__(self):
        for sid, sample in self.samples.items():
            if not isinstance(sid, str) or not sid:
                raise DatasetError(f"sample ids must be nonempty strings, got {sid!r}")
            if sample.variables != self.manifest.variable_names:
                raise DatasetError(f"sample {sid} variables do not match manifest order")
            if sample.n_timesteps != self.manifest.timesteps:
                raise DatasetError(
                    f"sample {sid} has {sample.n_timesteps} timesteps, "
                    f"manifest says {self.manifest.timesteps}"
                )
        if set(self.labels) != set(self.samples):
            missing = sorted(set(self.samples) - set(self.labels))
            extra = sorted(set(self.labels) - set(self.samples))
            if missing:
                raise DatasetError(f"missing label for sample {missing[0]}")
            raise DatasetError(f"label for unknown sample {extra[0]}")
        n_classes = len(self.manifest.class_names)
        for sid, label in self.labels.items():
            if not isinstance(label, int) or not 0 <= label < n_classes:
                raise DatasetError(f"label {label!r} for sample {sid} out of range")

    def __len__(self) -> int:
        return len(self.samples)

    def ids(self) -> list[str]:
        return list(self.samples)


def flatten(sample: MultivariateSeries) -> np.ndarray:
    """Concatenate variable rows in manifest order into one V*T vector."""
    return sample.values.reshape(-1).copy()


MANIFEST_FILE = "manifest.json"
DATA_FILE = "data.csv"
LABELS_FILE = "labels.csv"

_DATA_HEADER = ["sample_id", "variable", "t", "value"]
_LABELS_HEADER = ["sample_id", "label"]


def _read_manifest(root: str) -> Manifest:
    path = os.path.join(root, MANIFEST_FILE)
    if not os.path.isfile(path):
        raise DatasetError(f"missing {MANIFEST_FILE} in {root}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{MANIFEST_FILE}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise DatasetError(f"{MANIFEST_FILE}: expected a JSON object")
    try:
        class_names = tuple(str(c) for c in raw["class_names"])
        variable_names = tuple(str(v) for v in raw["variable_names"])
        timesteps = raw["timesteps"]
    except KeyError as exc:
        raise DatasetError(f"{MANIFEST_FILE}: missing key {exc}") from None
    if not isinstance(timesteps, int):
        raise DatasetError(f"{MANIFEST_FILE}: timesteps must be an integer")
    return Manifest(class_names, variable_names, timesteps)


def load_dataset(root: str) -> Dataset:
    """Load and validate a dataset directory.

    Rows of data.csv may appear in any order; values are placed by their
    timestep index. Every malformed row is reported with file name, line
    number, and the offending key.
    """
    manifest = _read_manifest(root)
    v_index = {name: i for i, name in enumerate(manifest.variable_names)}
    n_vars, n_t = len(manifest.variable_names), manifest.timesteps

    data_path = os.path.join(root, DATA_FILE)
    if not os.path.isfile(data_path):
        raise DatasetError(f"missing {DATA_FILE} in {root}")
    grids: dict[str, np.ndarray] = {}
    seen: dict[str, np.ndarray] = {}
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _DATA_HEADER:
            raise DatasetError(f"{DATA_FILE} line 1: expected header {','.join(_DATA_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"{DATA_FILE} line {lineno}: expected 4 fields, got {len(row)}")
            sid, var, t_raw, value_raw = row
            if not sid:
                raise DatasetError(f"{DATA_FILE} line {lineno}: empty sample_id")
            if var not in v_index:
                raise DatasetError(f"{DATA_FILE} line {lineno}: unknown variable {var!r} for sample {sid}")
            try:
                t = int(t_raw)
            except ValueError:
                raise DatasetError(f"{DATA_FILE} line {lineno}: non-integer t {t_raw!r}") from None
            if not 0 <= t < n_t:
                raise DatasetError(
                    f"{DATA_FILE} line {lineno}: t {t} out of range [0, {n_t}) for sample {sid}"
                )
            try:
                value = float(value_raw)
            except ValueError:
                raise DatasetError(f"{DATA_FILE} line {lineno}: unparseable value {value_raw!r}") from None
            if not math.isfinite(value):
                raise DatasetError(
                    f"non-finite value at {DATA_FILE} line {lineno} (sample {sid}, variable {var}, t {t})"
                )
            if sid not in grids:
                grids[sid] = np.zeros((n_vars, n_t))
                seen[sid] = np.zeros((n_vars, n_t), dtype=bool)
            vi = v_index[var]
            if seen[sid][vi, t]:
                raise DatasetError(
                    f"{DATA_FILE} line {lineno}: duplicate entry for (sample {sid}, variable {var}, t {t})"
                )
            grids[sid][vi, t] = value
            seen[sid][vi, t] = True

    for sid in grids:
        if not seen[sid].all():
            vi, t = np.argwhere(~seen[sid])[0]
            var = manifest.variable_names[vi]
            raise DatasetError(
                f"{DATA_FILE}: sample {sid} missing value for (variable {var}, t {t})"
            )

    labels_path = os.path.join(root, LABELS_FILE)
    if not os.path.isfile(labels_path):
        raise DatasetError(f"missing {LABELS_FILE} in {root}")
    labels: dict[str, int] = {}
    n_classes = len(manifest.class_names)
    with open(labels_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _LABELS_HEADER:
            raise DatasetError(f"{LABELS_FILE} line 1: expected header {','.join(_LABELS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DatasetError(f"{LABELS_FILE} line {lineno}: expected 2 fields, got {len(row)}")
            sid, label_raw = row
            if sid not in grids:
                raise DatasetError(f"{LABELS_FILE} line {lineno}: label for unknown sample {sid}")
            if sid in labels:
                raise DatasetError(f"{LABELS_FILE} line {lineno}: duplicate label for sample {sid}")
            try:
                label = int(label_raw)
            except ValueError:
                raise DatasetError(f"{LABELS_FILE} line {lineno}: non-integer label {label_raw!r}") from None
            if not 0 <= label < n_classes:
                raise DatasetError(
                    f"{LABELS_FILE} line {lineno}: label {label} out of range for sample {sid}"
                )
            labels[sid] = label

    for sid in grids:
        if sid not in labels:
            raise DatasetError(f"{LABELS_FILE}: missing label for sample {sid}")

    samples = {
        sid: MultivariateSeries(manifest.variable_names, grids[sid])
        for sid in sorted(grids)
    }
    return Dataset(manifest, samples, {sid: labels[sid] for sid in sorted(grids)})


def save_dataset(dataset: Dataset, root: str) -> None:
    """Write the directory layout read by load_dataset, order-normalized."""
    os.makedirs(root, exist_ok=True)
    manifest = dataset.manifest
    with open(os.path.join(root, MANIFEST_FILE), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "class_names": list(manifest.class_names),
                "variable_names": list(manifest.variable_names),
                "timesteps": manifest.timesteps,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    with open(os.path.join(root, DATA_FILE), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_DATA_HEADER)
        for sid in sorted(dataset.samples):
            values = dataset.samples[sid].values
            for vi, var in enumerate(manifest.variable_names):
                for t in range(manifest.timesteps):
                    writer.writerow([sid, var, t, repr(float(values[vi, t]))])
    with open(os.path.join(root, LABELS_FILE), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_LABELS_HEADER)
        for sid in sorted(dataset.labels):
            writer.writerow([sid, dataset.labels[sid]])


def quality_filter(
    dataset: Dataset,
    class_filter: int | None = None,
    threshold: float = 0.1,
) -> tuple[Dataset, list[str]]:
    """Drop near-constant samples (population std of the flattened vector
    below ``threshold``), optionally restricted to one class.

    Returns the kept dataset and the removed ids; together they partition
    the input ids.
    """
    if threshold < 0:
        raise DatasetError(f"threshold must be >= 0, got {threshold}")
    if class_filter is not None and not 0 <= class_filter < len(dataset.manifest.class_names):
        raise DatasetError(f"class_filter {class_filter} out of range")
    removed = []
    for sid, sample in dataset.samples.items():
        if class_filter is not None and dataset.labels[sid] != class_filter:
            continue
        if float(np.std(flatten(sample))) < threshold:
            removed.append(sid)
    removed_set = set(removed)
    kept = Dataset(
        dataset.manifest,
        {sid: s for sid, s in dataset.samples.items() if sid not in removed_set},
        {sid: c for sid, c in dataset.labels.items() if sid not in removed_set},
    )
    return kept, removed
