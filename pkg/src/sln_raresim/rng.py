"""Uniform streams: the single source of randomness for every estimator.

A stream hands out rows of ``dim`` uniforms addressed by a replication index
(the cursor). Row ``i`` depends only on (kind, seed, shift, i), so a run can
be split into disjoint cursor ranges and processed in any order with
identical results. Swapping a pseudorandom stream for a shifted Sobol one
changes nothing in the estimator code.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import DimTooLarge, Insufficient
from .stats import LogAccumulator, LogEstimate

# outputs are clamped into [2^-53, 1 - 2^-53] so logs and quantiles stay finite
U_MIN = 2.0 ** -53
U_MAX = 1.0 - 2.0 ** -53

PSEUDO_BLOCK = 4096
SOBOL_BITS = 32
DIRECTIONS_ENV = "SLN_SOBOL_DIRECTIONS"
_DEFAULT_DIRECTIONS = Path(__file__).with_name("data") / "new-joe-kuo-6.21201"


@dataclass(frozen=True)
class UniformStream:
    """Deterministic source of (count, dim) uniform blocks.

    ``kind`` is ``"pseudo"`` or ``"sobol"``. For Sobol streams ``shift`` is
    the Cranley-Patterson shift added modulo one to every point.
    """

    kind: str
    dim: int
    seed: int = 0
    shift: np.ndarray | None = None

    def uniforms(self, start: int, count: int) -> np.ndarray:
        if count <= 0:
            return np.empty((0, self.dim))
        if self.kind == "pseudo":
            u = _pseudo_rows(self.seed, self.dim, start, count)
        elif self.kind == "sobol":
            u = sobol_points(self.dim, start, count)
            if self.shift is not None:
                u = u + self.shift
                u -= np.floor(u)
        else:
            raise ValueError(f"unknown stream kind {self.kind!r}")
        return np.clip(u, U_MIN, U_MAX, out=u)

    def blocks(self, n: int, start: int = 0, block: int = 65536):
        """Yield (offset, uniforms) chunks covering rows [start, start + n)."""
        for off in range(start, start + n, block):
            yield off, self.uniforms(off, min(block, start + n - off))

    def with_dim(self, dim: int) -> "UniformStream":
        return UniformStream(self.kind, dim, self.seed, None if self.shift is None else _shift_vector(self.seed, dim))


def _pseudo_rows(seed: int, dim: int, start: int, count: int) -> np.ndarray:
    # fixed blocks of PSEUDO_BLOCK rows, each seeded from (seed, block index)
    first, last = start // PSEUDO_BLOCK, (start + count - 1) // PSEUDO_BLOCK
    parts = [
        np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED, b]).random((PSEUDO_BLOCK, dim))
        for b in range(first, last + 1)
    ]
    rows = np.concatenate(parts) if len(parts) > 1 else parts[0]
    lo = start - first * PSEUDO_BLOCK
    return rows[lo: lo + count].copy()


def pseudo_stream(seed: int, dim: int) -> UniformStream:
    return UniformStream("pseudo", int(dim), int(seed))


def _shift_vector(seed: int, dim: int) -> np.ndarray:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x5417]).random(dim)


def sobol_stream(dim: int, shift_seed: int | None = None) -> UniformStream:
    """Sobol points, randomly shifted when ``shift_seed`` is given."""
    if dim > max_sobol_dim():
        raise DimTooLarge(f"dim={dim} exceeds the {max_sobol_dim()} available Sobol dimensions")
    shift = None if shift_seed is None else _shift_vector(shift_seed, dim)
    return UniformStream("sobol", int(dim), 0 if shift_seed is None else int(shift_seed), shift)


# ---------------------------------------------------------------- Sobol core


@lru_cache(maxsize=4)
def _read_direction_file(path: str) -> tuple:
    """Parse a Joe-Kuo style 'd s a m_i' table into (s, a, m) tuples."""
    entries = []
    with open(path) as fh:
        header = fh.readline()
        if not header.lstrip().startswith("d"):
            fh.seek(0)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            s, a = int(parts[1]), int(parts[2])
            m = tuple(int(v) for v in parts[3: 3 + s])
            if len(m) != s:
                raise ValueError(f"{path}: malformed line {line.strip()!r}")
            entries.append((s, a, m))
    return tuple(entries)


def _directions_path() -> str:
    return os.environ.get(DIRECTIONS_ENV, str(_DEFAULT_DIRECTIONS))


def max_sobol_dim() -> int:
    return len(_read_direction_file(_directions_path())) + 1


@lru_cache(maxsize=16)
def _direction_matrix(dim: int, path: str) -> np.ndarray:
    """(dim, SOBOL_BITS) integer direction numbers v_{j,k} scaled to 2^SOBOL_BITS."""
    table = _read_direction_file(path)
    if dim > len(table) + 1:
        raise DimTooLarge(f"dim={dim} exceeds the {len(table) + 1} available Sobol dimensions")
    B = SOBOL_BITS
    V = np.zeros((dim, B), dtype=np.uint64)
    V[0] = [1 << (B - 1 - k) for k in range(B)]
    for j in range(1, dim):
        s, a, m = table[j - 1]
        v = [0] * B
        for k in range(min(s, B)):
            v[k] = m[k] << (B - 1 - k)
        for k in range(s, B):
            x = v[k - s] ^ (v[k - s] >> s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    x ^= v[k - i]
            v[k] = x
        V[j] = v
    return V


def sobol_points(dim: int, start: int, count: int) -> np.ndarray:
    """Unshifted Sobol points with indices start .. start + count - 1.

    Point i is the XOR of the direction numbers selected by the bits of the
    Gray code of i, so any index range can be generated independently.
    """
    if start + count > 2 ** SOBOL_BITS:
        raise ValueError("Sobol index range exceeds 2^32 points")
    V = _direction_matrix(dim, _directions_path())
    idx = np.arange(start, start + count, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    acc = np.zeros((count, dim), dtype=np.uint64)
    top = int(gray.max()).bit_length() if count else 0
    for k in range(top):
        bit = ((gray >> np.uint64(k)) & np.uint64(1)).astype(bool)
        if bit.any():
            acc[bit] ^= V[:, k]
    return acc.astype(np.float64) * (2.0 ** -SOBOL_BITS)


# ------------------------------------------------------ replication harness

# A replication kernel maps a (count, dim) block of uniforms to per-row
# (log|value|, sign) arrays; sign may be None for nonnegative kernels.
Kernel = Callable[[np.ndarray], tuple]


def run_kernel(kernel: Kernel, stream: UniformStream, n: int, start: int = 0, block: int = 65536,
               threads: int = 1) -> LogAccumulator:
    """Accumulate ``kernel`` over stream rows [start, start + n).

    Rows are cut into fixed blocks and block results are merged in cursor
    order, so the answer does not depend on ``threads``.
    """
    offsets = list(range(start, start + n, block))

    def one(off):
        lv, sg = kernel(stream.uniforms(off, min(block, start + n - off)))
        return LogAccumulator.from_batch(lv, sg)

    acc = LogAccumulator()
    if threads > 1 and len(offsets) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(one, offsets):
                acc.merge(part)
    else:
        for off in offsets:
            acc.merge(one(off))
    return acc


def rqmc_estimate(kernel: Kernel, dim: int, n: int, R: int = 100, seed: int = 0,
                  kind: str = "sobol") -> LogEstimate:
    """Average of R independently shifted point-set estimates.

    The RE is computed from the R shift means (they are iid and unbiased),
    and ``n`` in the result is the total number of kernel evaluations.
    With ``kind="pseudo"`` each "shift" is an independent pseudorandom
    batch, which gives the plain Monte Carlo reference at equal cost.
    """
    if R < 2:
        raise Insufficient("RQMC needs at least two shifts")
    seeds = np.random.SeedSequence(seed).generate_state(R, dtype=np.uint64)
    means = LogAccumulator()
    for r in range(R):
        if kind == "sobol":
            stream = sobol_stream(dim, int(seeds[r]))
        else:
            stream = pseudo_stream(int(seeds[r]), dim)
        acc = run_kernel(kernel, stream, n)
        means.merge(LogAccumulator.from_batch([acc.log_abs_mean], [acc.sign if acc.mean else 1.0]))
    est = LogEstimate.from_accumulator(means, shifts=R, points_per_shift=n)
    est.n = R * n
    return est


def convergence_slope(kernel: Kernel, dim: int, n_grid, R: int = 30, seed: int = 0,
                      kind: str = "sobol") -> tuple[float, list]:
    """Least-squares slope of ln RE against ln n over ``n_grid``.

    Returns (slope, [(n, re_percent), ...]).
    """
    n_grid = [int(v) for v in n_grid]
    if len(n_grid) < 5:
        raise Insufficient("slope fit needs at least 5 grid points")
    rows = []
    for i, n in enumerate(n_grid):
        est = rqmc_estimate(kernel, dim, n, R, seed=seed + 7919 * i, kind=kind)
        rows.append((n, est.re_percent))
    x = np.log([r[0] for r in rows])
    y = np.log([max(r[1], 1e-300) for r in rows])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, rows


def fit_slope(ns, res) -> float:
    return float(np.polyfit(np.log(ns), np.log(res), 1)[0])


def exp1_from_uniform(u):
    """Exp(1) variates as -ln(1 - u)."""
    return -np.log1p(-np.asarray(u))


def split_seed(seed: int, k: int) -> int:
    """Deterministic child seed number k of ``seed``."""
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, k]).generate_state(1, dtype=np.uint64)[0])
