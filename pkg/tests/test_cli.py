import math
import os

import numpy as np
import pytest

from variokrig.cli import main

SYNTH_NONUG = "kind=matern nugget=0.0 sill=2.4523 range=122.79 nu=0.5"


def run(*argv) -> int:
    return main(list(argv))


def read(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def make_synth(tmp_path, name="a", seed=1, n=60):
    out = tmp_path / name
    code = run("synth", "--seed", str(seed), "--n", str(n), "--out", str(out))
    assert code == 0
    return out / "synth.csv"


# -- synth ------------------------------------------------------------------------


def test_synth_deterministic(tmp_path):
    f1 = make_synth(tmp_path, "a", seed=1)
    f2 = make_synth(tmp_path, "b", seed=1)
    assert read(f1) == read(f2)
    f3 = make_synth(tmp_path, "c", seed=2)
    assert read(f1) != read(f3)


def test_synth_values_positive(tmp_path):
    path = make_synth(tmp_path)
    lines = read(path).strip().splitlines()
    assert lines[0] == "EASTING,NORTHING,VALUE"
    vals = np.array([float(ln.split(",")[2]) for ln in lines[1:]])
    assert np.all(vals > 0.0)
    assert len(vals) == 60


def test_synth_requires_seed(tmp_path, capsys):
    assert run("synth", "--out", str(tmp_path / "x")) == 1
    assert "seed" in capsys.readouterr().err


# -- ingestion errors ----------------------------------------------------------------


def test_header_only_file_rejected(tmp_path, capsys):
    src = tmp_path / "empty.csv"
    src.write_text("EASTING,NORTHING,VALUE\n")
    code = run("variogram", "--input", str(src), "--out", str(tmp_path / "o"))
    assert code == 1
    assert "empty dataset" in capsys.readouterr().err


def test_non_numeric_cell_cites_row(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    rows = ["EASTING,NORTHING,VALUE"]
    rows += [f"{i}.0,{i}.0,1.0" for i in range(1, 6)]
    rows.append("6.0,6.0,oops")
    src.write_text("\n".join(rows) + "\n")
    code = run("variogram", "--input", str(src), "--out", str(tmp_path / "o"))
    assert code == 1
    err = capsys.readouterr().err
    assert "row 7" in err and "VALUE" in err


def test_missing_column_rejected(tmp_path, capsys):
    src = tmp_path / "cols.csv"
    src.write_text("X,Y,VALUE\n1.0,2.0,3.0\n")
    assert run("variogram", "--input", str(src), "--out", str(tmp_path / "o")) == 1
    assert "EASTING" in capsys.readouterr().err


def test_header_case_insensitive_and_reordered(tmp_path):
    src = tmp_path / "ok.csv"
    src.write_text(
        "value,easting,northing\n"
        + "\n".join(f"{v}.5,{v}.0,0.0" for v in range(8))
        + "\n"
    )
    assert run("variogram", "--input", str(src), "--out", str(tmp_path / "o"),
               "--n-bins", "3") == 0


# -- variogram / fit ------------------------------------------------------------------


def test_variogram_then_fit_compose(tmp_path):
    data = make_synth(tmp_path, n=80)
    vdir = tmp_path / "v"
    assert run("variogram", "--input", str(data), "--log", "--out", str(vdir),
               "--max-dist", "200", "--n-bins", "12") == 0
    text = read(vdir / "variogram.csv")
    assert text.splitlines()[0] == "lag_center,mean_pair_distance,gamma_hat,n_pairs"
    fdir = tmp_path / "f"
    assert run("fit", "--input", str(vdir / "variogram.csv"), "--family", "matern",
               "--method", "wls", "--out", str(fdir)) == 0
    fit_text = read(fdir / "fit.csv")
    assert fit_text.splitlines()[0] == "nugget,sill,range,shape,objective,converged"


def test_variogram_cloud_output(tmp_path):
    data = make_synth(tmp_path, n=30)
    cdir = tmp_path / "c"
    assert run("variogram", "--input", str(data), "--out", str(cdir),
               "--max-dist", "100", "--cloud") == 0
    lines = read(cdir / "cloud.csv").strip().splitlines()
    assert lines[0] == "distance,half_sq_diff"
    assert len(lines) > 1


# -- krige -----------------------------------------------------------------------------


def test_krige_exactness_smoke(tmp_path):
    data = make_synth(tmp_path, n=40)
    kdir = tmp_path / "k"
    code = run(
        "krige", "--input", str(data), "--model", SYNTH_NONUG,
        "--method", "ordinary", "--at-data", "--out", str(kdir),
    )
    assert code == 0
    lines = read(kdir / "krige.csv").strip().splitlines()
    data_lines = read(data).strip().splitlines()[1:]
    assert lines[0] == "x,y,prediction,sd,n_neighbors,status"
    for out_line, in_line in zip(lines[1:], data_lines):
        cells = out_line.split(",")
        assert cells[-1] == "ok"
        assert float(cells[2]) == pytest.approx(float(in_line.split(",")[2]), abs=1e-6)


def test_krige_grid_and_pgm(tmp_path):
    data = make_synth(tmp_path, n=50)
    kdir = tmp_path / "k"
    code = run(
        "krige", "--input", str(data), "--log", "--model", SYNTH_NONUG.replace("nugget=0.0", "nugget=0.0661"),
        "--method", "bayes", "--grid", "5", "4", "-100", "100", "-80", "80",
        "--radius", "150", "--out", str(kdir), "--pgm",
    )
    assert code == 0
    lines = read(kdir / "krige.csv").strip().splitlines()
    assert len(lines) == 21
    pgm = read(kdir / "krige.pgm").splitlines()
    assert pgm[0] == "P2" and pgm[1] == "5 4"


def test_partial_output_removed_on_failure(tmp_path):
    data = make_synth(tmp_path, n=40)
    kdir = tmp_path / "k"
    code = run(
        "krige", "--input", str(data), "--model", SYNTH_NONUG,
        "--method", "ordinary", "--at", "0,0", "--pgm", "--out", str(kdir),
    )
    assert code == 1
    assert not (kdir / "krige.csv").exists()  # cleaned up


def test_bad_model_string_is_user_error(tmp_path, capsys):
    data = make_synth(tmp_path, n=10)
    assert run("krige", "--input", str(data), "--model", "kind=matern nugget=0",
               "--method", "ordinary", "--at", "0,0", "--out", str(tmp_path / "x")) == 1


# -- simulate --------------------------------------------------------------------------


def test_simulate_outputs(tmp_path):
    sdir = tmp_path / "s"
    code = run(
        "simulate", "--seed", "3", "--model", "kind=exponential nugget=0.0 sill=1.0 range=3.0",
        "--grid", "4", "4", "0", "10", "0", "10", "--sims", "5",
        "--max-dist", "9", "--n-bins", "4", "--out", str(sdir),
    )
    assert code == 0
    blob = (sdir / "simbatch.bin").read_bytes()
    assert blob[:4] == b"SIMB"
    assert len(blob) == 16 + 8 * 16 * 5
    table = read(sdir / "variograms.csv")
    assert table.splitlines()[0] == "lag,dist,n,sim1,sim2,sim3,sim4,sim5"


# -- posterior / density / copula-fit ---------------------------------------------------


def _pipeline(tmp_path, tag, threads=None, monkeypatch=None):
    if monkeypatch is not None and threads is not None:
        monkeypatch.setenv("VARIOKRIG_THREADS", str(threads))
    data = make_synth(tmp_path, f"{tag}-data", seed=5, n=45)
    pdir = tmp_path / f"{tag}-post"
    assert run(
        "posterior", "--input", str(data), "--log",
        "--model", "kind=matern nugget=0.0661 sill=2.4523 range=122.79 nu=0.5",
        "--sims", "12", "--seed", "5", "--max-dist", "220", "--n-bins", "10",
        "--out", str(pdir),
    ) == 0
    ddir = tmp_path / f"{tag}-dens"
    assert run(
        "density", "--input", str(data), "--log", "--draws", str(pdir / "draws.csv"),
        "--grid", "3", "3", "-100", "100", "-80", "80", "--radius", "200",
        "--out", str(ddir),
    ) == 0
    cdir = tmp_path / f"{tag}-cop"
    assert run("copula-fit", "--draws", str(pdir / "draws.csv"), "--out", str(cdir)) == 0
    return [pdir / "draws.csv", ddir / "density_map.csv", cdir / "copula.txt",
            cdir / "joint_density.csv"]


def test_pipeline_composes_and_is_deterministic(tmp_path, monkeypatch):
    first = _pipeline(tmp_path, "one")
    second = _pipeline(tmp_path, "two")
    for a, b in zip(first, second):
        assert read(a) == read(b)
    draws_text = read(first[0])
    assert draws_text.splitlines()[0] == (
        "nugget,sill1,range1,nu1,sill2,range2,nu2,objective,converged"
    )
    dens_lines = read(first[1]).strip().splitlines()
    assert dens_lines[0].startswith("x,y,Modal,Median,Mean")
    assert "theta=" in read(first[2])


def test_density_single_point_matches_closed_form(tmp_path):
    import variokrig as vk

    data_path = make_synth(tmp_path, n=30)
    draws_path = tmp_path / "draws.csv"
    draws_path.write_text(
        "nugget,sill,range,shape,objective,converged\n"
        "0.05,1.2,60.0,0.5,0.0,true\n"
    )
    ddir = tmp_path / "d"
    assert run(
        "density", "--input", str(data_path), "--log", "--draws", str(draws_path),
        "--at", "0,0", "--radius", "1000", "--prior-mean", "0.3", "--prior-var", "5.0",
        "--out", str(ddir),
    ) == 0
    lines = read(ddir / "density.csv").strip().splitlines()
    assert lines[0] == "value,density,cdf"
    rows = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    # closed-form lognormal from the kriging moments
    data = vk.SpatialDataset(
        *(lambda arr: (arr[:, :2], np.log(arr[:, 2])))(
            np.array([[float(c) for c in ln.split(",")]
                      for ln in read(data_path).strip().splitlines()[1:]])
        )
    )
    spec = vk.CovarianceSpec("matern", 0.05, 1.2, 60.0, 0.5)
    bk = vk.bayes_kriging([0.0, 0.0], data, spec, vk.TrendBasis.constant(),
                          vk.BayesPrior.scalar(0.3, 5.0))
    m, s = bk.prediction, bk.sd
    y = rows[:, 0]
    expect = np.exp(-((np.log(y) - m) ** 2) / (2.0 * s**2)) / (y * s * math.sqrt(2.0 * math.pi))
    interior = (rows[:, 2] > 1e-3) & (rows[:, 2] < 1.0 - 1e-3)
    assert np.abs(rows[interior, 1] / expect[interior] - 1.0).max() < 1e-6


def test_density_too_few_neighbors_writes_empty(tmp_path, capsys):
    data_path = make_synth(tmp_path, n=20)
    draws_path = tmp_path / "draws.csv"
    draws_path.write_text("nugget,sill,range,shape\n0.05,1.2,60.0,0.5\n")
    ddir = tmp_path / "d"
    assert run(
        "density", "--input", str(data_path), "--log", "--draws", str(draws_path),
        "--at", "5000,5000", "--radius", "10", "--out", str(ddir),
    ) == 0
    assert read(ddir / "density.csv") == "value,density,cdf\n"
    assert "too few neighbors" in capsys.readouterr().err


def test_all_outputs_inside_out_dir(tmp_path):
    before = set(os.listdir(tmp_path))
    make_synth(tmp_path, "only")
    after = set(os.listdir(tmp_path))
    assert after - before == {"only"}


def test_posterior_matern_family_feeds_density(tmp_path):
    data = make_synth(tmp_path, "m4", seed=9, n=40)
    pdir = tmp_path / "p4"
    assert run(
        "posterior", "--input", str(data), "--log",
        "--model", "kind=matern nugget=0.0661 sill=2.4523 range=122.79 nu=0.5",
        "--family", "matern", "--sims", "12", "--seed", "9",
        "--max-dist", "220", "--n-bins", "10", "--out", str(pdir),
    ) == 0
    header = read(pdir / "draws.csv").splitlines()[0]
    assert header == "nugget,sill,range,shape,objective,converged"
    ddir = tmp_path / "d4"
    assert run(
        "density", "--input", str(data), "--log", "--draws", str(pdir / "draws.csv"),
        "--at", "0,0", "--radius", "400", "--out", str(ddir),
    ) == 0
    assert read(ddir / "density.csv").startswith("value,density,cdf")


def test_simulate_kl_route(tmp_path):
    sdir = tmp_path / "kl"
    assert run(
        "simulate", "--seed", "4", "--model", "kind=exponential nugget=0.0 sill=1.0 range=3.0",
        "--grid", "3", "3", "0", "9", "0", "9", "--sims", "4", "--route", "kl",
        "--max-dist", "8", "--n-bins", "3", "--out", str(sdir),
    ) == 0
    assert (sdir / "simbatch.bin").exists()


def test_duplicate_locations_warned_on_ingest(tmp_path, capsys):
    src = tmp_path / "dup.csv"
    rows = ["EASTING,NORTHING,VALUE", "1.0,1.0,2.0", "1.0,1.0,3.0"]
    rows += [f"{i}.0,0.0,1.0" for i in range(2, 9)]
    src.write_text("\n".join(rows) + "\n")
    assert run("variogram", "--input", str(src), "--out", str(tmp_path / "o"),
               "--max-dist", "10", "--n-bins", "3") == 0
    assert "duplicate" in capsys.readouterr().err


def test_completely_empty_file_rejected(tmp_path, capsys):
    src = tmp_path / "none.csv"
    src.write_text("")
    assert run("variogram", "--input", str(src), "--out", str(tmp_path / "o")) == 1
    assert "empty file" in capsys.readouterr().err
