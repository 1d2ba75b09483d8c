"""Peer-distance features against reference groups of nominal samples.

For every feature j of a query sample x, the distances to a reference group
phi are d_i = |x^j - phi_i^j|.  The feature value theta^j condenses them:

- ``knn_mean``:    mean of the k smallest d_i
- ``mknn_median``: median of the k smallest d_i
- ``mcp``:         |x^j - c^j| where c^j is the most central reference value
                   for feature j (the value minimizing total L1 distance to
                   the rest of the column: its lower median)

Reference groups are drawn without replacement from nominal pools; a mode
(build_side, predict_side) selects which domain's pool feeds the group used
at model-fit time and at prediction time (S = source, T = target, ST = the
union pool).  ``estimate_num_conditions`` counts operating regimes from the
three setting columns via the spectral eigengap, which validates k against
the group size through ``check_k_condition``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import N_FEATURES, N_SETTINGS, NominalPool

PHI_SIZE_DEFAULT = 80
K_DEFAULT = 8
MAX_K_DEFAULT = 10

DISTANCE_KINDS = ("knn_mean", "mknn_median", "mcp")
_EIG_SUBSAMPLE_CAP = 500
_MATRIX_CHUNK = 512


@dataclass(frozen=True)
class DistanceMethod:
    """A peer-distance summary: one of DISTANCE_KINDS, with neighbor count k
    (ignored for mcp)."""

    kind: str
    k: int = K_DEFAULT

    def __post_init__(self) -> None:
        if self.kind not in DISTANCE_KINDS:
            raise ValueError(f"kind must be one of {DISTANCE_KINDS}, got {self.kind!r}")
        if int(self.k) < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "k", int(self.k))


@dataclass(frozen=True)
class ReferenceMode:
    """Which nominal pools feed the reference group when fitting the model
    (build_side: S or ST) and when predicting (predict_side: T or ST)."""

    build_side: str
    predict_side: str

    def __post_init__(self) -> None:
        if self.build_side not in ("S", "ST"):
            raise ValueError(f"build_side must be 'S' or 'ST', got {self.build_side!r}")
        if self.predict_side not in ("T", "ST"):
            raise ValueError(f"predict_side must be 'T' or 'ST', got {self.predict_side!r}")

    @property
    def label(self) -> str:
        return f"{self.build_side},{self.predict_side}"

    @classmethod
    def from_label(cls, label: str) -> "ReferenceMode":
        parts = [p.strip() for p in label.replace("(", "").replace(")", "").split(",")]
        if len(parts) != 2:
            raise ValueError(f"reference mode must look like 'ST,T', got {label!r}")
        return cls(build_side=parts[0], predict_side=parts[1])


REFERENCE_MODES = (
    ReferenceMode("S", "T"),
    ReferenceMode("S", "ST"),
    ReferenceMode("ST", "ST"),
    ReferenceMode("ST", "T"),
)


@dataclass(frozen=True)
class ReferenceGroup:
    """A fixed bag of nominal samples acting as the peer population."""

    samples: np.ndarray
    provenance: str
    seed: int

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[1] != N_FEATURES or arr.shape[0] == 0:
            raise ValueError(f"reference group must be (n, {N_FEATURES}) with n >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("reference group samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class CosmoFeatureMatrix:
    """Per-sample, per-feature peer distances, with the (unit, cycle) identity
    of each row when known."""

    values: np.ndarray
    unit_ids: np.ndarray | None = None
    cycles: np.ndarray | None = None

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if vals.ndim != 2 or vals.shape[1] != N_FEATURES:
            raise ValueError(f"feature matrix must be (n, {N_FEATURES}), got {vals.shape}")
        if not np.isfinite(vals).all() or (vals < 0).any():
            raise ValueError("feature matrix entries must be finite and nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        for name in ("unit_ids", "cycles"):
            ids = getattr(self, name)
            if ids is not None:
                ids = np.asarray(ids, dtype=np.int64)
                if ids.shape != (vals.shape[0],):
                    raise ValueError(f"{name} must have one entry per row")
                ids.setflags(write=False)
                object.__setattr__(self, name, ids)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# reference groups


def sample_reference_group(
    pool: NominalPool | np.ndarray,
    size: int = PHI_SIZE_DEFAULT,
    seed: int = 0,
    provenance: str = "pool",
) -> ReferenceGroup:
    """Draw ``size`` pool samples uniformly without replacement (seeded)."""
    samples = pool.samples if isinstance(pool, NominalPool) else np.asarray(pool, dtype=np.float64)
    n = samples.shape[0]
    if n < size:
        raise ValueError(f"pool of {n} samples cannot yield a reference group of {size}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=size, replace=False)
    return ReferenceGroup(samples=samples[idx], provenance=provenance, seed=seed)


def build_mode_groups(
    mode: ReferenceMode,
    pool_S: NominalPool,
    pool_T: NominalPool,
    size: int = PHI_SIZE_DEFAULT,
    seed: int = 0,
) -> tuple[ReferenceGroup, ReferenceGroup]:
    """Build (model-fit group, prediction group) for a reference mode.

    ST sides draw from the union pool (source rows first, then target); the
    two groups use independent streams derived from ``seed``.
    """
    if pool_S is None or len(pool_S) == 0:
        raise ValueError("reference mode requires a non-empty source pool")
    if pool_T is None or len(pool_T) == 0:
        raise ValueError(f"mode ({mode.label}) requires a non-empty target pool")
    union = np.vstack([pool_S.samples, pool_T.samples])
    side_pools = {"S": pool_S.samples, "T": pool_T.samples, "ST": union}
    fit_seed, predict_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2, np.uint64))
    fit = sample_reference_group(
        side_pools[mode.build_side], size=size, seed=fit_seed, provenance=mode.build_side
    )
    predict = sample_reference_group(
        side_pools[mode.predict_side], size=size, seed=predict_seed, provenance=mode.predict_side
    )
    return fit, predict


# ---------------------------------------------------------------------------
# distances


def _knn_block(distances: np.ndarray, k: int) -> np.ndarray:
    """k smallest entries of each column, in ascending order.

    ``distances`` is (n_ref, n_features); the result is (k, n_features) and
    carries exactly the values a full sort of each column would put first.
    """
    n = distances.shape[0]
    if k < n:
        block = np.partition(distances, k - 1, axis=0)[:k]
    else:
        block = distances
    return np.sort(block, axis=0)


def _summarize(sorted_block: np.ndarray, kind: str) -> np.ndarray:
    k = sorted_block.shape[0]
    if kind == "knn_mean":
        # reduce over a contiguous last axis: summation order then matches
        # np.mean of each k-vector on its own, bit for bit
        return np.mean(np.ascontiguousarray(sorted_block.T), axis=1)
    # median of an even count = arithmetic mean of the two middle values
    if k % 2:
        return sorted_block[k // 2].copy()
    return (sorted_block[k // 2 - 1] + sorted_block[k // 2]) / 2.0


def _mcp_centers(reference: np.ndarray) -> np.ndarray:
    """Per-feature most central value: the lower median of each column."""
    m = reference.shape[0]
    return np.sort(reference, axis=0)[(m - 1) // 2]


def feature_vector(
    x: np.ndarray, phi: ReferenceGroup, method: DistanceMethod
) -> np.ndarray:
    """Per-feature peer distances of one sample against a reference group."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_FEATURES,):
        raise ValueError(f"sample must have shape ({N_FEATURES},), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("sample values must be finite")
    ref = phi.samples
    if method.kind == "mcp":
        return np.abs(x - _mcp_centers(ref))
    if method.k > len(phi):
        raise ValueError(f"k={method.k} exceeds reference group size {len(phi)}")
    distances = np.abs(ref - x[None, :])
    return _summarize(_knn_block(distances, method.k), method.kind)


def feature_matrix(
    samples: np.ndarray | Sequence[np.ndarray],
    phi: ReferenceGroup,
    method: DistanceMethod,
    unit_ids: np.ndarray | None = None,
    cycles: np.ndarray | None = None,
) -> CosmoFeatureMatrix:
    """Row i = feature_vector(samples[i]); rows are independent.

    Processes chunks of rows at a time; each row's result is bitwise equal to
    the single-sample path.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"samples must be (n, {N_FEATURES}), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("samples must be non-empty")
    ref = phi.samples
    if method.kind != "mcp" and method.k > len(phi):
        raise ValueError(f"k={method.k} exceeds reference group size {len(phi)}")

    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        raise ValueError(f"row {int(np.flatnonzero(bad)[0])}: sample values must be finite")

    if method.kind == "mcp":
        theta = np.abs(X - _mcp_centers(ref)[None, :])
        return CosmoFeatureMatrix(values=theta, unit_ids=unit_ids, cycles=cycles)

    out = np.empty_like(X)
    for lo in range(0, X.shape[0], _MATRIX_CHUNK):
        hi = min(lo + _MATRIX_CHUNK, X.shape[0])
        # (rows, n_ref, n_features) distance block for this chunk
        d = np.abs(ref[None, :, :] - X[lo:hi, None, :])
        if method.k < ref.shape[0]:
            block = np.partition(d, method.k - 1, axis=1)[:, : method.k, :]
        else:
            block = d
        block = np.sort(block, axis=1)
        if method.kind == "knn_mean":
            # contiguous last-axis reduction: same summation order as the
            # single-sample path and a plain 1-D mean
            out[lo:hi] = np.mean(np.ascontiguousarray(block.transpose(0, 2, 1)), axis=2)
        elif method.k % 2:
            out[lo:hi] = block[:, method.k // 2, :]
        else:
            out[lo:hi] = (block[:, method.k // 2 - 1, :] + block[:, method.k // 2, :]) / 2.0
    return CosmoFeatureMatrix(values=out, unit_ids=unit_ids, cycles=cycles)


def write_features(matrix: CosmoFeatureMatrix, path: str | os.PathLike) -> None:
    """Columnar text export with a header row, ordered by (unit, cycle).

    Rows without identity default to unit 0 / running cycle so the export is
    still deterministic.
    """
    n = matrix.n_samples
    units = matrix.unit_ids if matrix.unit_ids is not None else np.zeros(n, dtype=np.int64)
    cycles = matrix.cycles if matrix.cycles is not None else np.arange(1, n + 1, dtype=np.int64)
    order = np.lexsort((cycles, units))
    header = ["unit", "cycle"] + [f"theta_{j:02d}" for j in range(N_FEATURES)]
    with open(path, "w") as fh:
        fh.write(" ".join(header) + "\n")
        for i in order:
            fields = [str(int(units[i])), str(int(cycles[i]))]
            fields += [repr(float(v)) for v in matrix.values[i]]
            fh.write(" ".join(fields) + "\n")


def read_features(path: str | os.PathLike) -> CosmoFeatureMatrix:
    """Read a write_features export back."""
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["unit", "cycle"] or len(header) != 2 + N_FEATURES:
            raise ValueError(f"unrecognized feature export header in {path}")
        rows = [line.split() for line in fh if line.strip()]
    data = np.asarray(rows, dtype=np.float64)
    return CosmoFeatureMatrix(
        values=data[:, 2:],
        unit_ids=data[:, 0].astype(np.int64),
        cycles=data[:, 1].astype(np.int64),
    )


# ---------------------------------------------------------------------------
# operating-condition count and the k-condition


def _canonical_subsample(points: np.ndarray, cap: int) -> np.ndarray:
    """Deterministic, order-independent subsample: sort rows lexicographically
    and take an even stride."""
    order = np.lexsort(points.T[::-1])  # sort by column 0, then 1, then 2
    pts = points[order]
    n = pts.shape[0]
    if n <= cap:
        return pts
    idx = np.unique(np.linspace(0, n - 1, cap).round().astype(np.intp))
    return pts[idx]


def estimate_num_conditions(
    samples: np.ndarray | Sequence[np.ndarray], max_k: int = MAX_K_DEFAULT
) -> int:
    """Estimate the number of operating conditions from the setting columns.

    Builds a Gaussian-similarity graph on (a canonical subsample of) the
    three setting features and returns the position of the largest gap in the
    ascending eigenvalues of its symmetric normalized Laplacian.  The
    bandwidth is the median distance to the 7th-nearest neighbor — a local
    scale, so well-separated condition clusters leave the graph effectively
    disconnected and contribute near-zero eigenvalues.  Falls back to a third
    of the smallest positive distance when that median is zero (heavily
    duplicated settings).  All samples identical returns 1.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < N_SETTINGS:
        raise ValueError("need at least 2 samples with the 3 setting columns")
    if int(max_k) < 2:
        raise ValueError(f"max_k must be >= 2, got {max_k}")
    pts = _canonical_subsample(np.ascontiguousarray(X[:, :N_SETTINGS]), _EIG_SUBSAMPLE_CAP)
    n = pts.shape[0]

    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    d = np.sqrt(np.maximum(d2, 0.0))
    positive = d[d > 0]
    if positive.size == 0:
        return 1

    k0 = min(7, n - 1)
    sigma = float(np.median(np.sort(d, axis=1)[:, k0]))
    if sigma == 0.0:
        sigma = float(positive.min()) / 3.0

    W = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(W, 0.0)
    deg = W.sum(axis=1)
    deg = np.maximum(deg, np.finfo(np.float64).tiny)  # isolated-node guard
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(n) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    eigenvalues = np.linalg.eigvalsh(lap)

    top = min(int(max_k), n)
    gaps = np.diff(eigenvalues[:top])
    return int(np.argmax(gaps)) + 1


def check_k_condition(k: int, group_size: int, n_conditions: int) -> bool:
    """True iff k <= group_size / n_conditions (real division): each operating
    condition is expected to contribute enough peers to the group."""
    if k < 1 or group_size < 1 or n_conditions < 1:
        raise ValueError("k, group_size, and n_conditions must all be positive")
    return k <= group_size / n_conditions
