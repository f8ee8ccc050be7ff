import subprocess
import sys

import numpy as np
import pytest

from paramdist import __version__, io as pio
from paramdist.cli import load_manifest, main, parse_ladder
from paramdist.measures import DiscreteMeasure, ParameterDomain, make_uniform_grid
from paramdist.pde_forward import discretize_at, propagate


def write_manifest(path, **kv):
    path.write_text("".join(f"{k}={v}\n" for k, v in kv.items()))
    return path


@pytest.fixture
def inputs(tmp_path):
    assert main(["inputs", "--count", "3", "--n", "40", "--tau", "0.1", "--out", str(tmp_path / "in")]) == 0
    return ",".join(f"in/ep0{i}.csv" for i in (1, 2, 3))


@pytest.fixture
def data(tmp_path, inputs):
    man = write_manifest(tmp_path / "sim.txt", datasets=inputs, tau=0.1, N=8, seed=2, path_count=20, output_dir="data")
    assert main(["simulate", str(man)]) == 0
    return ",".join(f"data/ep0{i}.csv" for i in (1, 2, 3))


def estimate_manifest(tmp_path, data, **extra):
    kv = dict(datasets=data, tau=0.1, m1=3, m2=3, N=8, w1=1e-3, w2=1e-4, seed=2, output_dir="fit", thin=5, path_count=20)
    kv.update(extra)
    return write_manifest(tmp_path / "est.txt", **kv)


class TestSimulate:
    def test_noiseless_point_mass_matches_forward_model(self, tmp_path, inputs):
        grid = make_uniform_grid(ParameterDomain(), 3, 3)
        pio.write_measure(tmp_path / "truth.csv", DiscreteMeasure.point_mass(grid, 5))
        man = write_manifest(tmp_path / "m.txt", datasets=inputs, tau=0.1, N=16, true_dist="truth.csv",
                             path_count=1, noise_std=0, output_dir="out")
        assert main(["simulate", str(man)]) == 0
        ep = pio.read_episode(tmp_path / "out" / "ep02.csv")
        ref = propagate(discretize_at(grid.nodes[5], 16, 0.1), ep.input_u)
        np.testing.assert_allclose(ep.output_y, ref, rtol=0, atol=1e-16)

    def test_same_seed_byte_identical(self, tmp_path, inputs):
        man = write_manifest(tmp_path / "m.txt", datasets=inputs, tau=0.1, N=8, seed=7, path_count=10, output_dir="out")
        assert main(["simulate", str(man)]) == 0
        first = [(tmp_path / "out" / f"ep0{i}.csv").read_bytes() for i in (1, 2, 3)]
        assert main(["simulate", str(man)]) == 0
        assert [(tmp_path / "out" / f"ep0{i}.csv").read_bytes() for i in (1, 2, 3)] == first

    def test_missing_input_file(self, tmp_path, capsys):
        man = write_manifest(tmp_path / "m.txt", datasets="in/absent.csv", tau=0.1, output_dir="out")
        assert main(["simulate", str(man)]) == 2
        assert "absent.csv" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "nope.txt")]) == 2
        assert "nope.txt" in capsys.readouterr().err


class TestEstimate:
    def test_outputs_and_metadata(self, tmp_path, data):
        assert main(["estimate", str(estimate_manifest(tmp_path, data))]) == 0
        meta = pio.read_keyvalue(tmp_path / "fit" / "estimate.meta")
        assert set(meta) == {"objective", "residual_norm", "iterations", "converged", "w1", "w2", "N", "M", "seed"}
        assert meta["converged"] == "true" and meta["M"] == "9"
        text = (tmp_path / "fit" / "estimate.csv").read_text()
        assert f"# tool=paramdist {__version__}" in text
        assert "# w1=0.001" in text
        m = pio.read_measure(tmp_path / "fit" / "estimate.csv")
        assert m.weights.sum() == pytest.approx(1.0, abs=1e-10)

    def test_rerun_identical(self, tmp_path, data):
        man = estimate_manifest(tmp_path, data)
        main(["estimate", str(man)])
        first = (tmp_path / "fit" / "estimate.csv").read_bytes()
        main(["estimate", str(man)])
        assert (tmp_path / "fit" / "estimate.csv").read_bytes() == first

    def test_single_node(self, tmp_path, data):
        assert main(["estimate", str(estimate_manifest(tmp_path, data, m1=1, m2=1))]) == 0
        _, rows, _ = pio.read_csv(tmp_path / "fit" / "estimate.csv")
        assert len(rows) == 1 and float(rows[0][2]) == 1.0

    def test_tau_mismatch(self, tmp_path, data, capsys):
        assert main(["estimate", str(estimate_manifest(tmp_path, data, tau=0.2))]) == 2
        assert "tau" in capsys.readouterr().err

    def test_nonconvergence_exit_code(self, tmp_path, data):
        man = estimate_manifest(tmp_path, data, max_iter=1, tolerance=1e-14)
        assert main(["estimate", str(man)]) == 1
        assert (tmp_path / "fit" / "estimate.meta").exists()
        assert main(["estimate", str(man), "--allow-nonconverged"]) == 0
        assert pio.read_keyvalue(tmp_path / "fit" / "estimate.meta")["converged"] == "false"

    def test_bad_manifest_values(self, tmp_path, data):
        assert main(["estimate", str(estimate_manifest(tmp_path, data, m1="three"))]) == 2
        assert main(["estimate", str(estimate_manifest(tmp_path, data, colour="red"))]) == 2
        assert main(["estimate", str(estimate_manifest(tmp_path, data, w1=-1))]) == 2


class TestDownstream:
    @pytest.fixture
    def fitted(self, tmp_path, data):
        man = estimate_manifest(tmp_path, data)
        assert main(["estimate", str(man)]) == 0
        return man

    def test_sample_and_kstest(self, tmp_path, fitted, capsys):
        assert main(["sample", str(fitted), "--measure", "fit/estimate.csv", "--count", "150"]) == 0
        s = tmp_path / "fit" / "samples.csv"
        assert pio.read_samples(s).shape == (150, 2)
        first = s.read_bytes()
        main(["sample", str(fitted), "--measure", "fit/estimate.csv", "--count", "150"])
        assert s.read_bytes() == first
        capsys.readouterr()
        assert main(["kstest", str(s), str(s)]) == 0
        lines = dict(l.split("=", 1) for l in capsys.readouterr().out.splitlines() if not l.startswith("#"))
        assert float(lines["p_value"]) == 1.0
        assert float(lines["d_stat"]) == 0.0

    def test_kstest_too_few_points(self, tmp_path):
        pio.write_samples(tmp_path / "s.csv", np.random.default_rng(0).random((5, 2)))
        assert main(["kstest", str(tmp_path / "s.csv"), str(tmp_path / "s.csv")]) == 2

    def test_band(self, tmp_path, fitted):
        assert main(["band", str(fitted), "--measure", "fit/estimate.csv", "--episode", "data/ep01.csv"]) == 0
        header, rows, comments = pio.read_csv(tmp_path / "fit" / "band.csv")
        assert header == ["t", "mean", "lo", "hi"]
        assert len(rows) == 40
        lo, hi = np.array([[float(r[2]), float(r[3])] for r in rows]).T
        assert np.all(lo <= hi)
        assert any(c.startswith("multiplier=") for c in comments)
        out = tmp_path / "plot" / "band.csv"
        assert main(["plotdata", "band", "--band", str(tmp_path / "fit" / "band.csv"),
                     "--episode", str(tmp_path / "data" / "ep01.csv"), "--out", str(out)]) == 0
        assert pio.read_csv(out)[0] == ["t", "measured", "mean", "lo", "hi"]

    def test_loocv_ladder_rows(self, tmp_path, fitted):
        assert main(["loocv", str(fitted), "--ladder", "4:2,9:4"]) == 0
        header, rows, _ = pio.read_csv(tmp_path / "fit" / "loocv.csv")
        assert header[:6] == ["M", "N", "fold", "episode_id", "nrmse", "seconds"]
        assert len(rows) == 3 * 2
        assert {(r[0], r[1]) for r in rows} == {("4", "2"), ("9", "4")}
        text = (tmp_path / "fit" / "loocv.csv").read_text()
        assert text.count("# summary") == 2


class TestPlotdata:
    def test_cdf_of_point_mass_is_unit_step(self, tmp_path):
        grid = make_uniform_grid(ParameterDomain(), 4, 3)
        pio.write_measure(tmp_path / "m.csv", DiscreteMeasure.point_mass(grid, 7))
        out = tmp_path / "cdf.csv"
        assert main(["plotdata", "cdf", "--measure", str(tmp_path / "m.csv"), "--out", str(out)]) == 0
        header, rows, _ = pio.read_csv(out)
        assert header == ["q1", "q2", "F"]
        q = grid.nodes[7]
        for q1, q2, F in ((float(a), float(b), float(c)) for a, b, c in rows):
            assert F == (1.0 if (q1 >= q[0] and q2 >= q[1]) else 0.0)

    def test_hist(self, tmp_path):
        pio.write_samples(tmp_path / "s.csv", np.random.default_rng(1).random((200, 2)))
        out = tmp_path / "h.csv"
        assert main(["plotdata", "hist", "--samples", str(tmp_path / "s.csv"), "--bins", "8", "--out", str(out)]) == 0
        _, rows, _ = pio.read_csv(out)
        assert len(rows) == 16
        assert sum(int(r[3]) for r in rows if r[0] == "q1") == 200

    def test_missing_argument(self, tmp_path):
        assert main(["plotdata", "cdf", "--out", str(tmp_path / "x.csv")]) == 2


def test_ladder_parsing():
    assert parse_ladder("4:2, 16:4,64:32") == [(2, 2, 2), (4, 4, 4), (8, 8, 32)]
    assert parse_ladder("20x20:128") == [(20, 20, 128)]
    with pytest.raises(ValueError):
        parse_ladder("5:2")


def test_manifest_resolves_relative_paths(tmp_path):
    man = load_manifest(write_manifest(tmp_path / "m.txt", datasets="a.csv, sub/b.csv", tau=0.1))
    assert man.datasets == [tmp_path / "a.csv", tmp_path / "sub" / "b.csv"]
    assert man.tau == 0.1 and man.m1 == 20


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "paramdist.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert __version__ in out.stdout
