"""Gaussian random-field simulation and the simulated-variogram pipeline.

Fields are drawn either through the Cholesky factor of the Gram matrix
(z = m + L w) or through its eigendecomposition (Karhunen-Loeve route,
z = m + Psi sqrt(Lambda) w). Normal draws come from counter-based streams
keyed on (seed, simulation index), so results are bit-identical for a
given seed no matter how the work is scheduled.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._linalg import chol_with_jitter
from .empvario import SpatialDataset, empirical_variogram
from .exceptions import DomainError, FormatError, NumericError
from .models import covariance_eval, validity_check
from .util import fmt_float, parallel_map

# re-exported here because the jitter policy is this module's contract
cholesky_with_jitter = chol_with_jitter

EIGEN_CLIP_REL = 1e-12


def make_grid(xmin, xmax, ymin, ymax, nx: int, ny: int) -> np.ndarray:
    """Rectangular grid with the offset-from-min convention.

    Points sit at (xmin + i dx, ymin + j dy) for i = 1..nx, j = 1..ny with
    dx = (xmax - xmin)/nx: the minimum edge is excluded, the maximum edge
    included. Expanded row-major (x outer, y inner), matching the reference
    layout.
    """
    if nx < 1 or ny < 1:
        raise DomainError("nx and ny must be >= 1")
    if xmax <= xmin or ymax <= ymin:
        raise DomainError("max must exceed min on both axes")
    dx = (xmax - xmin) / nx
    dy = (ymax - ymin) / ny
    pts = [
        (xmin + dx * i, ymin + dy * j)
        for i in range(1, nx + 1)
        for j in range(1, ny + 1)
    ]
    return np.array(pts, dtype=float)


def make_grid_inclusive(xmin, xmax, ymin, ymax, nx: int, ny: int) -> np.ndarray:
    """Rectangular grid including both edges on each axis (general use)."""
    if nx < 1 or ny < 1:
        raise DomainError("nx and ny must be >= 1")
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    return np.array([(x, y) for x in xs for y in ys], dtype=float)


@dataclass(frozen=True)
class SimBatch:
    """A batch of field realizations: one column per simulation."""

    locations: np.ndarray
    realizations: np.ndarray
    seed: int
    spec: object

    @property
    def n_points(self) -> int:
        return self.realizations.shape[0]

    @property
    def n_sims(self) -> int:
        return self.realizations.shape[1]

    MAGIC = b"SIMB"

    def to_binary(self) -> bytes:
        """16-byte header (magic, u32 n_points, u32 n_sims, u32 reserved)
        followed by little-endian float64 data in column-major order."""
        header = self.MAGIC + struct.pack("<III", self.n_points, self.n_sims, 0)
        body = np.asfortranarray(self.realizations).astype("<f8").tobytes(order="F")
        return header + body

    @staticmethod
    def read_binary(blob: bytes) -> np.ndarray:
        if len(blob) < 16 or blob[:4] != SimBatch.MAGIC:
            raise FormatError("not a SIMB realization dump")
        n_points, n_sims, _ = struct.unpack("<III", blob[4:16])
        expect = 16 + 8 * n_points * n_sims
        if len(blob) != expect:
            raise FormatError(
                f"SIMB dump has {len(blob)} bytes, expected {expect}"
            )
        flat = np.frombuffer(blob, dtype="<f8", offset=16)
        return flat.reshape((n_points, n_sims), order="F")


def _normal_draws(seed: int, index: int, n: int) -> np.ndarray:
    """Standard-normal vector from the stream keyed (seed, index)."""
    bitgen = np.random.Philox(key=[np.uint64(seed), np.uint64(index)])
    return np.random.Generator(bitgen).standard_normal(n)


def _gram(spec, locations) -> np.ndarray:
    return np.asarray(covariance_eval(spec, cdist(locations, locations)), dtype=float)


def _check_dims(spec, locations):
    dim = locations.shape[1]
    if not validity_check(spec, dim):
        raise DomainError(
            f"model is not positive definite in dimension {dim}"
        )


def simulate_gaussian_field(locations, spec, mean: float, n_sims: int, seed: int) -> SimBatch:
    """Cholesky-route simulation: each column is mean + L w."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    _check_dims(spec, locations)
    L, _ = chol_with_jitter(_gram(spec, locations))
    n = locations.shape[0]

    def column(j: int) -> np.ndarray:
        return mean + L @ _normal_draws(seed, j, n)

    cols = parallel_map(column, range(n_sims))
    real = np.column_stack(cols) if cols else np.empty((n, 0))
    return SimBatch(locations, real, seed, spec)


def kl_eigensystem(spec, locations):
    """Eigenpairs of the Gram matrix with small/negative eigenvalues
    clamped to zero. Returns (eigenvalues desc, eigenvectors)."""
    K = _gram(spec, np.atleast_2d(np.asarray(locations, dtype=float)))
    try:
        lam, psi = np.linalg.eigh(K)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from None
    lam = lam[::-1].copy()
    psi = psi[:, ::-1].copy()
    lam[lam < EIGEN_CLIP_REL * max(lam[0], 0.0)] = 0.0
    np.maximum(lam, 0.0, out=lam)
    return lam, psi


def kl_simulate(locations, spec, mean: float, n_sims: int, seed: int) -> SimBatch:
    """Karhunen-Loeve-route simulation: each column is
    mean + Psi diag(sqrt(lambda)) w."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    _check_dims(spec, locations)
    lam, psi = kl_eigensystem(spec, locations)
    A = psi * np.sqrt(lam)
    n = locations.shape[0]

    def column(j: int) -> np.ndarray:
        return mean + A @ _normal_draws(seed, j, n)

    cols = parallel_map(column, range(n_sims))
    real = np.column_stack(cols) if cols else np.empty((n, 0))
    return SimBatch(locations, real, seed, spec)


@dataclass(frozen=True)
class VariogramTable:
    """Binned variogram estimates of simulated fields, one column per run.

    Descriptor columns: 1-based lag index, mean pair distance (bin center
    for empty bins), pair count. Empty bins carry NaN estimates.
    """

    lags: np.ndarray
    distances: np.ndarray
    counts: np.ndarray
    gammas: np.ndarray

    @property
    def n_sims(self) -> int:
        return self.gammas.shape[1]

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.lags, self.distances, self.counts, self.gammas])

    def to_csv(self) -> str:
        header = "lag,dist,n" + "".join(f",sim{j+1}" for j in range(self.n_sims))
        lines = [header]
        for row in self.as_matrix():
            cells = [str(int(row[0])), fmt_float(row[1]), str(int(row[2]))]
            cells += [fmt_float(v) for v in row[3:]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "VariogramTable":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or not lines[0].startswith("lag,dist,n"):
            raise FormatError("variogram table must start with a lag,dist,n header")
        rows = []
        for ln in lines[1:]:
            try:
                rows.append([float(c) if c else np.nan for c in ln.split(",")])
            except ValueError:
                raise FormatError(f"bad variogram table row: {ln!r}") from None
        mat = np.array(rows, dtype=float)
        return cls(mat[:, 0], mat[:, 1], mat[:, 2], mat[:, 3:])


def _bin_descriptors(locations, bin_edges):
    """Per-bin mean pair distance and count from the pair geometry alone."""
    probe = SpatialDataset(locations, np.zeros(locations.shape[0]))
    emp = empirical_variogram(probe, bin_edges, estimator="matheron")
    dist = np.array(
        [b.lag_center if b.mean_pair_distance is None else b.mean_pair_distance
         for b in emp.bins]
    )
    counts = np.array([b.n_pairs for b in emp.bins], dtype=float)
    return dist, counts


def _conditioning_weights(data: SpatialDataset, spec, targets):
    """Simple-kriging weight matrix from the data locations to each target."""
    Kdd = _gram(spec, data.locations)
    Cdt = np.asarray(covariance_eval(spec, cdist(data.locations, targets)), dtype=float)
    L, _ = chol_with_jitter(Kdd)
    y = np.linalg.solve(L, Cdt)
    return np.linalg.solve(L.T, y)  # (n_data, n_targets)


def simulate_variograms(
    locations,
    spec,
    bin_edges,
    n_sims: int,
    seed: int,
    conditional: bool = False,
    data: SpatialDataset | None = None,
    mean: float = 0.0,
) -> VariogramTable:
    """Empirical variograms of simulated fields at the given locations.

    Unconditional mode estimates straight from each realization.
    Conditional mode applies residual conditioning before estimating:
    z_c = z_sim + W'(z_data - z_sim[data locations]), with W the
    simple-kriging weights under the same model, which honors the observed
    values exactly when the nugget vanishes.
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    edges = np.asarray(bin_edges, dtype=float)
    dist, counts = _bin_descriptors(locations, edges)
    lags = np.arange(1, dist.size + 1, dtype=float)
    if conditional:
        if data is None:
            raise DomainError("conditional simulation requires observed data")
        # simulate jointly over data locations plus the new target points
        seen = {loc.tobytes(): i for i, loc in enumerate(data.locations)}
        extra, target_idx = [], []
        for loc in locations:
            key = loc.tobytes()
            if key in seen:
                target_idx.append(seen[key])
            else:
                seen[key] = len(data) + len(extra)
                target_idx.append(seen[key])
                extra.append(loc)
        joint = np.vstack([data.locations] + extra) if extra else data.locations.copy()
        batch = simulate_gaussian_field(joint, spec, mean, n_sims, seed)
        W = _conditioning_weights(data, spec, locations)
        target_idx = np.array(target_idx)

        def column(j: int) -> np.ndarray:
            z = batch.realizations[:, j]
            resid = data.values - z[: len(data)]
            return z[target_idx] + W.T @ resid

    else:
        batch = simulate_gaussian_field(locations, spec, mean, n_sims, seed)

        def column(j: int) -> np.ndarray:
            return batch.realizations[:, j]

    def gamma_column(j: int) -> np.ndarray:
        ds = SpatialDataset(locations, column(j))
        emp = empirical_variogram(ds, edges, estimator="matheron")
        return np.array(
            [np.nan if b.gamma_hat is None else b.gamma_hat for b in emp.bins]
        )

    cols = parallel_map(gamma_column, range(n_sims))
    gammas = np.column_stack(cols) if cols else np.empty((dist.size, 0))
    return VariogramTable(lags, dist, counts, gammas)
