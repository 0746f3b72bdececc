"""Command-line front end.

Subcommands: synth, variogram, fit, krige, simulate, posterior, density,
copula-fit. Every stochastic command requires an explicit --seed and is a
pure function of its inputs, so reruns reproduce outputs byte for byte.
All files land in the directory given by --out; on failure the partial
outputs of the failing command are removed and the exit status is 1 for
user errors, 2 for numeric failures.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import bayes, copula, empvario, fit, krige, models, sim
from .exceptions import DomainError, FormatError, NumericError, VariokrigError
from .util import fmt_float

# Matern parameters of the synthetic generator standing in for the
# original (non-distributable) survey data; log-scale mean to match its
# reported location.
SYNTH_MODEL = "kind=matern nugget=0.0661 sill=2.4523 range=122.79 nu=0.5"
SYNTH_MEAN = 0.66
SYNTH_REGION = (-148.0, 149.0, -108.0, 109.0)

_LOCATION_STREAM = np.uint64(2**63)


class UsageError(VariokrigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class OutputDir:
    """Tracks files written by one command so failures can clean up."""

    def __init__(self, path: str):
        self.path = path
        self.created: list[str] = []
        os.makedirs(path, exist_ok=True)

    def write_text(self, name: str, text: str) -> str:
        return self._write(name, text.encode("utf-8"))

    def write_bytes(self, name: str, blob: bytes) -> str:
        return self._write(name, blob)

    def _write(self, name: str, blob: bytes) -> str:
        if os.path.basename(name) != name:
            raise UsageError(f"output name {name!r} must be a bare file name")
        full = os.path.join(self.path, name)
        with open(full, "wb") as fh:
            fh.write(blob)
        self.created.append(full)
        return full

    def cleanup(self):
        for full in self.created:
            try:
                os.unlink(full)
            except OSError:
                pass


def ingest_csv(path: str, log_transform: bool = False) -> empvario.SpatialDataset:
    """Read an EASTING,NORTHING,VALUE table (case-insensitive header).

    Row order is preserved; duplicate locations are kept with a warning
    count on stderr. --log takes natural logs and requires positive values.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    lines = [ln for ln in lines if ln]
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = [c.strip().upper() for c in lines[0].split(",")]
    try:
        cols = [header.index(k) for k in ("EASTING", "NORTHING", "VALUE")]
    except ValueError:
        raise FormatError(
            f"{path}: header must contain EASTING,NORTHING,VALUE, got {lines[0]!r}"
        ) from None
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise FormatError(f"{path}: row {i} has {len(cells)} cells, expected {len(header)}")
        try:
            rows.append([float(cells[c]) for c in cols])
        except ValueError:
            bad = next(c for c in cols if not _is_float(cells[c]))
            raise FormatError(
                f"{path}: non-numeric {header[bad]} on row {i}: {cells[bad]!r}"
            ) from None
    if not rows:
        raise FormatError(f"{path}: empty dataset (header only)")
    arr = np.array(rows, dtype=float)
    locs, vals = arr[:, :2], arr[:, 2]
    uniq = np.unique(locs, axis=0).shape[0]
    if uniq < locs.shape[0]:
        print(f"warning: {locs.shape[0] - uniq} duplicate locations kept", file=sys.stderr)
    if log_transform:
        if np.any(vals <= 0.0):
            raise DomainError("log transform requires strictly positive values")
        vals = np.log(vals)
    return empvario.SpatialDataset(locs, vals)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _dataset_csv(data: empvario.SpatialDataset) -> str:
    lines = ["EASTING,NORTHING,VALUE"]
    for (x, y), v in zip(data.locations, data.values):
        lines.append(f"{fmt_float(x)},{fmt_float(y)},{fmt_float(v)}")
    return "\n".join(lines) + "\n"


def _parse_model(text: str):
    return models.spec_from_text(text)


def _grid_from_args(args) -> np.ndarray:
    nx, ny = int(args.grid[0]), int(args.grid[1])
    xmin, xmax, ymin, ymax = map(float, args.grid[2:])
    return sim.make_grid(xmin, xmax, ymin, ymax, nx, ny)


def _bin_edges(args, data: empvario.SpatialDataset) -> np.ndarray:
    if args.max_dist is not None:
        maxd = float(args.max_dist)
    else:
        span = data.locations.max(axis=0) - data.locations.min(axis=0)
        maxd = 0.5 * float(np.hypot(*span))
    if maxd <= 0.0:
        raise UsageError("--max-dist must be positive")
    return np.linspace(0.0, maxd, int(args.n_bins) + 1)


def _parse_emp_csv(path: str) -> empvario.EmpiricalVariogram:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if not lines or lines[0] != "lag_center,mean_pair_distance,gamma_hat,n_pairs":
        raise FormatError(f"{path}: expected an empirical-variogram CSV header")
    bins = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != 4:
            raise FormatError(f"{path}: bad variogram row {ln!r}")
        center = float(cells[0])
        n_pairs = int(cells[3])
        if n_pairs == 0 or cells[1] == "" or cells[2] == "":
            bins.append(empvario.VariogramBin(center, None, None, 0))
        else:
            bins.append(
                empvario.VariogramBin(center, float(cells[1]), float(cells[2]), n_pairs)
            )
    if not bins:
        raise FormatError(f"{path}: no bins found")
    maxd = max(b.lag_center for b in bins)
    return empvario.EmpiricalVariogram(tuple(bins), "matheron", maxd)


# -- subcommand implementations ------------------------------------------------


def _cmd_synth(args, out: OutputDir):
    spec = _parse_model(args.model)
    rng = np.random.Generator(
        np.random.Philox(key=[np.uint64(args.seed), _LOCATION_STREAM])
    )
    xmin, xmax, ymin, ymax = args.region
    locs = np.column_stack(
        [rng.uniform(xmin, xmax, args.n), rng.uniform(ymin, ymax, args.n)]
    )
    batch = sim.simulate_gaussian_field(locs, spec, args.mean, 1, args.seed)
    values = np.exp(batch.realizations[:, 0])
    out.write_text("synth.csv", _dataset_csv(empvario.SpatialDataset(locs, values)))


def _cmd_variogram(args, out: OutputDir):
    data = ingest_csv(args.input, args.log)
    edges = _bin_edges(args, data)
    direction = None
    if args.direction is not None:
        direction = empvario.Direction(
            math.radians(args.direction), math.radians(args.tolerance)
        )
    if args.cloud:
        cloud = empvario.variogram_cloud(data, float(edges[-1]))
        lines = ["distance,half_sq_diff"]
        lines += [f"{fmt_float(d)},{fmt_float(v)}" for d, v in cloud]
        out.write_text("cloud.csv", "\n".join(lines) + "\n")
        return
    if args.estimator == "huber":
        emp = empvario.huber_robust_variogram(data, edges, c=args.huber_c, direction=direction)
    else:
        emp = empvario.empirical_variogram(data, edges, args.estimator, direction)
    out.write_text("variogram.csv", emp.to_csv())


def _cmd_fit(args, out: OutputDir):
    emp = _parse_emp_csv(args.input)
    bounds = None
    if args.bounds:
        lo_txt, _, hi_txt = args.bounds.partition(":")
        bounds = fit.FitBounds(
            np.array([float(v) for v in lo_txt.split(",")]),
            np.array([float(v) for v in hi_txt.split(",")]),
        )
    result = fit.fit_variogram(emp, args.family, args.method, bounds)
    out.write_text("fit.csv", fit.fit_results_to_csv([result], args.family))


def _cmd_krige(args, out: OutputDir):
    data = ingest_csv(args.input, args.log)
    spec = _parse_model(args.model)
    if args.at_data:
        grid = data.locations
    elif args.at is not None:
        grid = np.array([[float(v) for v in args.at.split(",")]])
    else:
        if args.grid is None:
            raise UsageError("krige needs --grid, --at or --at-data")
        grid = _grid_from_args(args)
    basis = None
    prior = None
    if args.method in ("universal", "bayes"):
        basis = krige.TrendBasis.linear(2) if args.basis == "linear" else krige.TrendBasis.constant()
    if args.method == "bayes":
        k = len(basis)
        prior = krige.BayesPrior(
            np.full(k, args.prior_mean), args.prior_var * np.eye(k)
        )
    radius = args.radius if args.radius is not None else math.inf
    rows = krige.krige_map(
        grid, args.method, data, spec, radius,
        min_neighbors=args.min_neighbors, mean=args.mean, basis=basis, prior=prior,
    )
    out.write_text("krige.csv", krige.krige_map_csv(rows))
    if args.pgm:
        if args.at is not None or args.at_data or args.grid is None:
            raise UsageError("--pgm needs a rectangular --grid")
        nx, ny = int(args.grid[0]), int(args.grid[1])
        out.write_text("krige.pgm", _pgm(rows, nx, ny))


def _pgm(rows, nx: int, ny: int) -> str:
    """Grayscale map of the predictions, linear value-to-gray, missing = 0."""
    vals = np.full((nx, ny), np.nan)
    for idx, row in enumerate(rows):
        if row.result is not None:
            vals[idx // ny, idx % ny] = row.result.prediction
    finite = np.isfinite(vals)
    if np.any(finite):
        lo, hi = vals[finite].min(), vals[finite].max()
        span = hi - lo if hi > lo else 1.0
        gray = np.where(finite, 1.0 + 254.0 * (vals - lo) / span, 0.0)
    else:
        gray = np.zeros_like(vals)
    lines = [f"P2", f"{nx} {ny}", "255"]
    for j in range(ny - 1, -1, -1):  # north at the top
        lines.append(" ".join(str(int(round(gray[i, j]))) for i in range(nx)))
    return "\n".join(lines) + "\n"


def _cmd_simulate(args, out: OutputDir):
    spec = _parse_model(args.model)
    data = None
    if args.conditional:
        if not args.input:
            raise UsageError("--conditional requires --input data")
        data = ingest_csv(args.input, args.log)
        locs = data.locations if args.grid is None else _grid_from_args(args)
    elif args.input:
        data = ingest_csv(args.input, args.log)
        locs = data.locations
    else:
        if args.grid is None:
            raise UsageError("simulate needs --grid or --input")
        locs = _grid_from_args(args)
    span = locs.max(axis=0) - locs.min(axis=0)
    maxd = args.max_dist if args.max_dist is not None else 0.5 * float(np.hypot(*span))
    edges = np.linspace(0.0, maxd, int(args.n_bins) + 1)
    route = sim.kl_simulate if args.route == "kl" else sim.simulate_gaussian_field
    batch = route(locs, spec, args.mean, args.sims, args.seed)
    out.write_bytes("simbatch.bin", batch.to_binary())
    table = sim.simulate_variograms(
        locs, spec, edges, args.sims, args.seed,
        conditional=args.conditional, data=data, mean=args.mean,
    )
    out.write_text("variograms.csv", table.to_csv())


def _cmd_posterior(args, out: OutputDir):
    data = ingest_csv(args.input, args.log)
    spec = _parse_model(args.model)
    edges = _bin_edges(args, data)
    table = sim.simulate_variograms(
        data.locations, spec, edges, args.sims, args.seed,
        conditional=args.conditional, data=data if args.conditional else None,
    )
    family = "nested_matern" if args.family == "nested" else "matern"
    results = fit.fit_family_batch(table, family, method=args.method, seed=args.seed)
    out.write_text("draws.csv", fit.fit_results_to_csv(results, family))


def _cmd_density(args, out: OutputDir):
    log_data = ingest_csv(args.input, args.log)
    with open(args.draws, "r", encoding="utf-8") as fh:
        draws = bayes.PosteriorDraws.from_csv(fh.read())
    grid_cfg = bayes.DensityGrid(args.grid_lo, args.grid_hi, args.grid_step, args.rule)
    if args.at is not None:
        x0 = [float(v) for v in args.at.split(",")]
        pd = bayes.predictive_density_at(
            x0, log_data, draws, args.prior_mean, args.prior_var, args.radius, grid_cfg
        )
        if pd is None:
            print("too few neighbors at the requested point", file=sys.stderr)
            out.write_text("density.csv", "value,density,cdf\n")
            return
        out.write_text("density.csv", pd.to_csv())
        summary = ",".join(f"{k}={fmt_float(v)}" for k, v in sorted(pd.summary.items()))
        out.write_text("density_summary.txt", summary + "\n")
    else:
        if args.grid is None:
            raise UsageError("density needs --at or --grid")
        grid = _grid_from_args(args)
        rows = bayes.density_map(
            grid, log_data, draws, args.prior_mean, args.prior_var, args.radius, grid_cfg
        )
        out.write_text("density_map.csv", bayes.density_map_csv(rows))


def _cmd_copula_fit(args, out: OutputDir):
    with open(args.draws, "r", encoding="utf-8") as fh:
        draws = bayes.PosteriorDraws.from_csv(fh.read())
    result = copula.fit_copula_mle(draws)
    lines = [
        f"family={result.family}",
        f"theta={fmt_float(result.theta)}",
        f"theta_code={fmt_float(result.theta_code)}",
        f"loglik={fmt_float(result.loglik)}",
        f"converged={'true' if result.converged else 'false'}",
        f"n_dropped={result.n_dropped}",
        f"unreliable={'true' if result.unreliable else 'false'}",
    ]
    out.write_text("copula.txt", "\n".join(lines) + "\n")
    out.write_text("joint_density.csv", copula.joint_density_csv(draws, result))


# -- argument plumbing ----------------------------------------------------------


def _add_common(p, seed_required=False):
    p.add_argument("--out", default=".", help="output directory")
    if seed_required:
        p.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory)")


def _add_grid(p, required=False):
    p.add_argument(
        "--grid", nargs=6, metavar=("NX", "NY", "XMIN", "XMAX", "YMIN", "YMAX"),
        required=required, help="rectangular grid spec",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="variokrig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthetic lognormal dataset")
    _add_common(p, seed_required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--model", default=SYNTH_MODEL)
    p.add_argument("--mean", type=float, default=SYNTH_MEAN, help="log-scale mean")
    p.add_argument("--region", nargs=4, type=float, default=list(SYNTH_REGION),
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("variogram", help="empirical variogram estimation")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--log", action="store_true")
    p.add_argument("--estimator", choices=("matheron", "cressie_hawkins", "huber"),
                   default="matheron")
    p.add_argument("--huber-c", type=float, default=2.0)
    p.add_argument("--max-dist", type=float, default=None)
    p.add_argument("--n-bins", type=int, default=15)
    p.add_argument("--direction", type=float, default=None, help="degrees from east")
    p.add_argument("--tolerance", type=float, default=22.5, help="degrees")
    p.add_argument("--cloud", action="store_true", help="emit the variogram cloud")
    p.set_defaults(func=_cmd_variogram)

    p = sub.add_parser("fit", help="fit a variogram model to a binned estimate")
    _add_common(p)
    p.add_argument("--input", required=True, help="empirical-variogram CSV")
    p.add_argument("--family", default="nested_matern")
    p.add_argument("--method", choices=fit.METHODS, default="wls")
    p.add_argument("--bounds", default=None, help="lo1,lo2,...:hi1,hi2,...")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("krige", help="kriging prediction map")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--log", action="store_true")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("simple", "ordinary", "universal", "bayes"),
                   default="ordinary")
    _add_grid(p)
    p.add_argument("--at", default=None, help="single location X,Y")
    p.add_argument("--at-data", action="store_true", help="predict at the data locations")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--min-neighbors", type=int, default=krige.MIN_NEIGHBORS)
    p.add_argument("--mean", type=float, default=0.0, help="known mean (simple)")
    p.add_argument("--basis", choices=("constant", "linear"), default="constant")
    p.add_argument("--prior-mean", type=float, default=0.0)
    p.add_argument("--prior-var", type=float, default=10000.0)
    p.add_argument("--pgm", action="store_true", help="grayscale heatmap")
    p.set_defaults(func=_cmd_krige)

    p = sub.add_parser("simulate", help="Gaussian field simulation + variogram table")
    _add_common(p, seed_required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--input", default=None)
    p.add_argument("--log", action="store_true")
    _add_grid(p)
    p.add_argument("--sims", type=int, default=100)
    p.add_argument("--mean", type=float, default=0.0)
    p.add_argument("--route", choices=("cholesky", "kl"), default="cholesky")
    p.add_argument("--conditional", action="store_true")
    p.add_argument("--max-dist", type=float, default=None)
    p.add_argument("--n-bins", type=int, default=15)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("posterior", help="simulate + estimate + batch-fit draws")
    _add_common(p, seed_required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--log", action="store_true")
    p.add_argument("--model", required=True)
    p.add_argument("--sims", type=int, default=100)
    p.add_argument("--method", choices=fit.METHODS, default="ols")
    p.add_argument("--family", choices=("nested", "matern"), default="nested")
    p.add_argument("--conditional", action="store_true")
    p.add_argument("--max-dist", type=float, default=None)
    p.add_argument("--n-bins", type=int, default=15)
    p.set_defaults(func=_cmd_posterior)

    p = sub.add_parser("density", help="predictive density at a point or grid")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--log", action="store_true")
    p.add_argument("--draws", required=True)
    p.add_argument("--at", default=None, help="single location X,Y")
    _add_grid(p)
    p.add_argument("--radius", type=float, default=40.0)
    p.add_argument("--prior-mean", type=float, default=0.0)
    p.add_argument("--prior-var", type=float, default=10000.0)
    p.add_argument("--grid-lo", type=float, default=-5.0)
    p.add_argument("--grid-hi", type=float, default=6.5)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--rule", choices=("trapezoid", "forward"), default="trapezoid")
    p.set_defaults(func=_cmd_density)

    p = sub.add_parser("copula-fit", help="dependence of the posterior draws")
    _add_common(p)
    p.add_argument("--draws", required=True)
    p.set_defaults(func=_cmd_copula_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    out = None
    try:
        args = parser.parse_args(argv)
        out = OutputDir(args.out)
        args.func(args, out)
        return 0
    except (UsageError, FormatError, DomainError, FileNotFoundError) as exc:
        if out is not None:
            out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, np.linalg.LinAlgError) as exc:
        if out is not None:
            out.cleanup()
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
