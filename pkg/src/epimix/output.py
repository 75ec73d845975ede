"""Chain output container, sample/diagnostic file formats, and the
effective-sample-size estimator.

On disk a chain directory holds:
  samples.csv      one row per retained iteration, flattened columns
  diagnostics.csv  per-sweep series (log-joint, acceptance rates, occupancy)
  meta.yaml        schema version, column layout, config echo, hash
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import DataError

SCHEMA_VERSION = 1

__all__ = ["ChainOutput", "SampleBuffer", "effective_sample_size"]


class SampleBuffer:
    """Accumulates named arrays, one slot per retained iteration."""

    def __init__(self, n_retained: int):
        self.n_retained = n_retained
        self._arrays: dict[str, np.ndarray] = {}
        self._cursor = 0

    def append(self, record: dict[str, np.ndarray]) -> None:
        if self._cursor >= self.n_retained:
            raise DataError("sample buffer overflow")
        for name, value in record.items():
            value = np.asarray(value, dtype=float)
            if name not in self._arrays:
                self._arrays[name] = np.empty((self.n_retained, *value.shape))
            self._arrays[name][self._cursor] = value
        self._cursor += 1

    def arrays(self) -> dict[str, np.ndarray]:
        if self._cursor != self.n_retained:
            return {k: v[: self._cursor] for k, v in self._arrays.items()}
        return dict(self._arrays)


@dataclass
class ChainOutput:
    """Retained posterior samples plus per-sweep diagnostics."""

    model: str
    samples: dict[str, np.ndarray]
    sweep_stats: dict[str, np.ndarray]
    acceptance: dict[str, float]
    stage_seconds: dict[str, float]
    config: dict
    iterations: int
    burnin: int
    thinning: int
    group_sizes: tuple = (0, 0)
    gene_loci: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @property
    def n_retained(self) -> int:
        first = next(iter(self.samples.values()))
        return first.shape[0]

    def param(self, name: str) -> np.ndarray:
        if name not in self.samples:
            raise DataError(
                f"chain has no parameter {name!r}; available: {sorted(self.samples)}"
            )
        return self.samples[name]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.samples):
            arr = np.ascontiguousarray(self.samples[name])
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        return h.hexdigest()

    # -- disk round trip -------------------------------------------------------

    def save(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        columns, widths = [], {}
        for name in sorted(self.samples):
            arr = self.samples[name]
            flat = arr.reshape(arr.shape[0], -1)
            widths[name] = {"shape": list(arr.shape[1:]),
                            "count": flat.shape[1]}
            columns.extend(
                f"{name}[{i}]" if flat.shape[1] > 1 else name
                for i in range(flat.shape[1])
            )
        with open(outdir / "samples.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            mats = [self.samples[n].reshape(self.n_retained, -1)
                    for n in sorted(self.samples)]
            stacked = np.hstack(mats) if mats else np.empty((0, 0))
            for row in stacked:
                writer.writerow([repr(float(v)) for v in row])
        with open(outdir / "diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            names = sorted(self.sweep_stats)
            writer.writerow(names)
            if names:
                series = np.column_stack([self.sweep_stats[n] for n in names])
                for row in series:
                    writer.writerow([repr(float(v)) for v in row])
        meta = {
            "schema_version": self.schema_version,
            "model": self.model,
            "iterations": self.iterations,
            "burnin": self.burnin,
            "thinning": self.thinning,
            "group_sizes": list(self.group_sizes),
            "gene_loci": [int(x) for x in self.gene_loci],
            "layout": widths,
            "acceptance": {k: float(v) for k, v in self.acceptance.items()},
            "stage_seconds": {k: float(v) for k, v in self.stage_seconds.items()},
            "config": self.config,
            "content_hash": self.content_hash(),
        }
        with open(outdir / "meta.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(meta, fh, sort_keys=False)

    @classmethod
    def load(cls, outdir) -> "ChainOutput":
        outdir = Path(outdir)
        try:
            with open(outdir / "meta.yaml", encoding="utf-8") as fh:
                meta = yaml.safe_load(fh)
        except FileNotFoundError as exc:
            raise DataError(f"{outdir} is not a chain directory: {exc}") from exc
        if meta.get("schema_version") != SCHEMA_VERSION:
            raise DataError(
                f"unsupported chain schema {meta.get('schema_version')!r}"
            )
        header, flat = _read_table(outdir / "samples.csv")
        n_rows = flat.shape[0]
        samples = {}
        cursor = 0
        for name in sorted(meta["layout"]):
            info = meta["layout"][name]
            count = info["count"]
            block = flat[:, cursor: cursor + count]
            samples[name] = block.reshape(n_rows, *info["shape"])
            cursor += count
        diag_names, diag_mat = _read_table(outdir / "diagnostics.csv")
        sweep_stats = {name: diag_mat[:, idx]
                       for idx, name in enumerate(diag_names)}
        out = cls(
            model=meta["model"],
            samples=samples,
            sweep_stats=sweep_stats,
            acceptance=meta.get("acceptance", {}),
            stage_seconds=meta.get("stage_seconds", {}),
            config=meta.get("config", {}),
            iterations=meta["iterations"],
            burnin=meta["burnin"],
            thinning=meta["thinning"],
            group_sizes=tuple(meta.get("group_sizes", (0, 0))),
            gene_loci=meta.get("gene_loci", []),
        )
        if out.content_hash() != meta.get("content_hash"):
            raise DataError("chain content hash mismatch (corrupt samples.csv)")
        return out


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        rows = [[float(v) for v in row] for row in reader if row]
    mat = np.asarray(rows, dtype=float) if rows else np.empty((0, len(header)))
    return header, mat


def effective_sample_size(series) -> float:
    """Effective sample size from the initial-positive-sequence truncation of
    the autocorrelation function (pairwise sums kept while positive)."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 100:
        raise DataError(f"need at least 100 samples for ESS, got {n}")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        raise DataError("ESS undefined for a constant series")
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conjugate(f))[:n].real
    acf /= acf[0]
    tau = 1.0
    k = 1
    while k + 1 < n:
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        k += 2
    return float(n / max(tau, 1e-12))
