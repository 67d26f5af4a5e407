"""Data generation: the Gaussian partially-linear simulation model,
lazy sample streams, and tabular CSV ingestion with synthetic outcomes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import MissingColumn, ParseError, StreamExhausted
from .linalg import cholesky
from .problems.base import Sample, SampleBatch
from .rng import Rng

DEFAULT_THETA0 = (-0.5, 1.0)
DEFAULT_MU_X = (1.0, 1.0)
DEFAULT_MU_W = (2.0, 2.0)


def smooth_shift(s: np.ndarray) -> np.ndarray:
    """The nonlinear control effect used by the simulation model."""
    return 0.5 * np.cos(s) + 0.5 * np.sin(s)


@dataclass
class DgpConfig:
    """Configuration of the simulated partially linear model.

    (X, W) are jointly Gaussian in R^2 x R^2 with block covariance
    [[(1 + delta) I, lam I], [lam I, (1 + delta) I]];
    Y = <theta0, X> + alpha0(W) + eps and U = alpha0(W) + xi, where
    alpha0(w) = smooth_shift((w1 + w2) / 2) and eps, xi are independent
    standard normals scaled by the configured noise levels.
    """

    lam: float = 0.5
    delta: float = 0.05
    theta0: tuple = DEFAULT_THETA0
    mu_x: tuple = DEFAULT_MU_X
    mu_w: tuple = DEFAULT_MU_W
    noise_sd_eps: float = 1.0
    noise_sd_xi: float = 1.0

    @property
    def d(self) -> int:
        return len(self.theta0)

    def covariance(self) -> np.ndarray:
        d = self.d
        eye = np.eye(d)
        top = np.hstack([(1 + self.delta) * eye, self.lam * eye])
        bot = np.hstack([self.lam * eye, (1 + self.delta) * eye])
        return np.vstack([top, bot])

    def chol(self) -> np.ndarray:
        return cholesky(self.covariance())

    def alpha0(self, w: np.ndarray) -> np.ndarray:
        w = np.atleast_2d(w)
        return smooth_shift(w.sum(axis=1) / w.shape[1])

    def cond_mean_x(self, w: np.ndarray) -> np.ndarray:
        """E[X | W = w]; linear in w under the joint Gaussian."""
        w = np.atleast_2d(w)
        slope = self.lam / (1 + self.delta)
        return np.asarray(self.mu_x) + slope * (w - np.asarray(self.mu_w))


def draw_batch(rng: Rng, cfg: DgpConfig, n: int) -> SampleBatch:
    """n i.i.d. draws from the simulation model, column-oriented."""
    d = cfg.d
    if n == 0:
        return SampleBatch(np.zeros((0, d)), np.zeros((0, d)), np.zeros(0),
                           u=np.zeros(0), eps=np.zeros(0))
    mean = np.concatenate([cfg.mu_x, cfg.mu_w])
    z = rng.standard_normal((n, 2 * d)) @ cfg.chol().T + mean
    x, w = z[:, :d], z[:, d:]
    alpha = cfg.alpha0(w)
    eps = cfg.noise_sd_eps * rng.standard_normal(n)
    xi = cfg.noise_sd_xi * rng.standard_normal(n)
    lin = x @ np.asarray(cfg.theta0)
    y = lin + alpha + eps
    u = alpha + xi
    # stored noise is defined through the same left-to-right expression
    # consumers evaluate, so the structural identity holds bit-for-bit
    eps_stored = y - lin - alpha
    return SampleBatch(x=x, w=w, y=y, u=u, eps=eps_stored)


def draw_sample(rng: Rng, cfg: DgpConfig) -> Sample:
    return draw_batch(rng, cfg, 1).row(0)


class SampleStream:
    """Lazy single-consumer stream of simulated samples.

    Backed by its own generator; `count=None` makes it unbounded. Batches
    are drawn on demand so multi-hundred-thousand-sample runs never
    materialize the full stream.
    """

    def __init__(self, rng: Rng, cfg: DgpConfig, count=None):
        self.rng = rng
        self.cfg = cfg
        self.remaining = count

    def next_batch(self, k: int) -> SampleBatch:
        if self.remaining is not None:
            if self.remaining <= 0:
                raise StreamExhausted("stream is empty")
            k = min(k, self.remaining)
            self.remaining -= k
        return draw_batch(self.rng, self.cfg, k)

    def __iter__(self):
        while True:
            try:
                batch = self.next_batch(1024)
            except StreamExhausted:
                return
            for i in range(len(batch)):
                yield batch.row(i)


class FixedStream:
    """Single sequential pass over a materialized batch. Block sizes do
    not affect which samples are seen, so two consumers with different
    chunking observe identical data."""

    def __init__(self, batch: SampleBatch):
        self.batch = batch
        self.pos = 0

    def next_batch(self, k: int) -> SampleBatch:
        if self.pos >= len(self.batch):
            raise StreamExhausted("fixed stream is empty")
        out = self.batch.slice(self.pos, min(self.pos + k, len(self.batch)))
        self.pos += len(out)
        return out


class BatchStream:
    """Stream view over a fixed batch, sampling rows i.i.d. with
    replacement (the empirical distribution of a data table)."""

    def __init__(self, rng: Rng, batch: SampleBatch, count=None):
        self.rng = rng
        self.batch = batch
        self.remaining = count

    def next_batch(self, k: int) -> SampleBatch:
        if self.remaining is not None:
            if self.remaining <= 0:
                raise StreamExhausted("stream is empty")
            k = min(k, self.remaining)
            self.remaining -= k
        idx = self.rng.integers(0, len(self.batch), size=k)
        return self.batch.subset(idx)


def split_streams(rng: Rng, cfg: DgpConfig, counts: dict) -> dict:
    """Independent target / nuisance / eval streams off one master seed.

    Child generators are spawned with distinct keys, so no sample is
    shared across the three streams.
    """
    names = ("target", "nuisance", "eval")
    children = rng.spawn(len(names))
    return {name: SampleStream(child, cfg, counts.get(name))
            for name, child in zip(names, children)}


# ---------------------------------------------------------------------------
# Tabular ingestion (schema-compatible CSV with synthetic outcome)


REAL_DATA_X_COL = "change"
REAL_DATA_W_COLS = (
    "time_in_hospital",
    "num_lab_procedures",
    "num_procedures",
    "num_medications",
    "number_diagnoses",
)


@dataclass
class TabularSource:
    """A CSV file plus the column mapping and synthetic-outcome settings."""

    path: str
    x_col: str = REAL_DATA_X_COL
    w_cols: tuple = REAL_DATA_W_COLS
    theta0: float = -1.0
    noise_scale: float = 0.5
    delimiter: str = ","

    def alpha0(self, w_std: np.ndarray) -> np.ndarray:
        # applied to standardized controls; keeps the sinusoid in range
        return smooth_shift(w_std.mean(axis=1))


def ingest_csv(src: TabularSource, rng: Rng, counters: dict | None = None) -> SampleBatch:
    """Parse the file, standardize the controls, attach synthetic outcomes.

    Every accepted row yields exactly one sample; a malformed numeric cell
    aborts with the row / column named. The binary input column must hold
    0/1 values. Pass a dict as `counters` to receive accepted / skipped
    row counts (blank lines are skipped, not errors).
    """
    if counters is None:
        counters = {}
    counters.update(accepted=0, skipped_blank=0)
    with open(src.path, newline="") as fh:
        reader = csv.reader(fh, delimiter=src.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{src.path}: empty file, header row required")
        header = [h.strip() for h in header]
        for col in (src.x_col, *src.w_cols):
            if col not in header:
                raise MissingColumn(f"column {col!r} not in header {header}")
        xi = header.index(src.x_col)
        wi = [header.index(c) for c in src.w_cols]

        xs, ws = [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                counters["skipped_blank"] += 1
                continue
            def cell(idx):
                name = header[idx]
                try:
                    return float(row[idx])
                except (ValueError, IndexError):
                    raise ParseError(
                        f"{src.path}: row {rownum}, column {name!r}: "
                        f"malformed numeric cell {row[idx] if idx < len(row) else '<missing>'!r}")
            xval = cell(xi)
            if xval not in (0.0, 1.0):
                raise ParseError(
                    f"{src.path}: row {rownum}, column {src.x_col!r}: "
                    f"expected binary 0/1, got {xval!r}")
            xs.append(xval)
            ws.append([cell(j) for j in wi])

    if not xs:
        raise ParseError(f"{src.path}: no data rows")
    counters["accepted"] = len(xs)
    x = np.array(xs)[:, None]
    w = np.array(ws, dtype=float)
    mu = w.mean(axis=0)
    sd = w.std(axis=0)
    sd[sd == 0] = 1.0
    w_std = (w - mu) / sd

    n = len(x)
    alpha = src.alpha0(w_std)
    eps = rng.standard_normal(n)
    xi_noise = rng.standard_normal(n)
    y = src.theta0 * x[:, 0] + alpha + src.noise_scale * eps
    u = alpha + src.noise_scale * xi_noise
    return SampleBatch(x=x, w=w_std, y=y, u=u, eps=src.noise_scale * eps)


def write_synthetic_table(path: str, rng: Rng, n: int,
                          x_col: str = REAL_DATA_X_COL,
                          w_cols: tuple = REAL_DATA_W_COLS) -> None:
    """Emit a schema-compatible CSV with integer-valued feature columns.

    The controls mimic count-style clinical features and the binary input
    is confounded with them through a logistic link, so downstream fits
    have signal to find.
    """
    w = np.column_stack([
        rng.integers(1, 15, size=n),      # days in hospital
        rng.integers(1, 100, size=n),     # lab procedures
        rng.integers(0, 7, size=n),       # other procedures
        rng.integers(1, 40, size=n),      # medications
        rng.integers(1, 10, size=n),      # diagnoses
    ]).astype(float)
    z = (w - w.mean(axis=0)) / np.maximum(w.std(axis=0), 1e-12)
    logits = 0.8 * z.mean(axis=1) + 0.3 * z[:, 0]
    p = 1.0 / (1.0 + np.exp(-logits))
    x = (rng.uniform(size=n) < p).astype(int)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([x_col, *w_cols])
        for i in range(n):
            writer.writerow([x[i], *[int(v) for v in w[i]]])
