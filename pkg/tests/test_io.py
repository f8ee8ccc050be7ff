import numpy as np
import pytest

from paramdist import io as pio
from paramdist.evaluation import BetaProduct
from paramdist.measures import DiscreteMeasure, ParameterDomain, make_uniform_grid
from paramdist.pde_forward import Episode


def test_measure_round_trip_is_exact(tmp_path):
    m = BetaProduct().discretize(make_uniform_grid(ParameterDomain(0.1, 0.9, 0, 2, 1.0), 7, 5))
    pio.write_measure(tmp_path / "m.csv", m, {"note": "x"})
    back = pio.read_measure(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.weights, m.weights)
    np.testing.assert_array_equal(back.grid.nodes, m.grid.nodes)
    assert back.grid.domain == m.grid.domain


def test_measure_layout(tmp_path):
    m = DiscreteMeasure.point_mass(make_uniform_grid(ParameterDomain(), 2, 2), 1)
    pio.write_measure(tmp_path / "m.csv", m)
    text = (tmp_path / "m.csv").read_bytes().decode()
    assert "\r" not in text
    body = [l for l in text.splitlines() if not l.startswith("#")]
    assert body == ["q1,q2,p", "0.0,0.0,0.0", "0.0,1.0,1.0", "1.0,0.0,0.0", "1.0,1.0,0.0"]


def test_measure_rejects_shuffled_rows(tmp_path):
    (tmp_path / "m.csv").write_text("q1,q2,p\n0,1,0.5\n0,0,0.5\n1,0,0\n1,1,0\n")
    with pytest.raises(pio.InputError):
        pio.read_measure(tmp_path / "m.csv")


def test_measure_rejects_bad_mass(tmp_path):
    (tmp_path / "m.csv").write_text("q1,q2,p\n0,0,0.5\n0,1,0.4\n")
    with pytest.raises(pio.InputError):
        pio.read_measure(tmp_path / "m.csv")


def test_episode_round_trip(tmp_path):
    ep = Episode("ignored", 0.25, np.linspace(0, 1, 9), np.linspace(1, 2, 9))
    pio.write_episode(tmp_path / "day3.csv", ep)
    back = pio.read_episode(tmp_path / "day3.csv", tau=0.25)
    assert back.id == "day3"
    assert back.tau == 0.25
    np.testing.assert_array_equal(back.input_u, ep.input_u)
    np.testing.assert_array_equal(back.output_y, ep.output_y)


def test_episode_without_output(tmp_path):
    pio.write_episode(tmp_path / "e.csv", Episode("e", 0.1, np.ones(4)))
    assert pio.read_episode(tmp_path / "e.csv").output_y is None


@pytest.mark.parametrize(
    "text",
    [
        "t,u\n0.1,1\n0.2,1\n0.4,1\n",  # uneven spacing
        "t,y\n0.1,1\n0.2,1\n",  # no input column
        "t,u\n0.1,abc\n0.2,1\n",  # not numeric
        "t,u,y\n0.1,1,\n0.2,1,0.5\n",  # partly missing output
        "# only a comment\n",
    ],
)
def test_bad_episode_files(tmp_path, text):
    (tmp_path / "e.csv").write_text(text)
    with pytest.raises(pio.InputError):
        pio.read_episode(tmp_path / "e.csv")


def test_tau_mismatch(tmp_path):
    (tmp_path / "e.csv").write_text("t,u\n0.1,1\n0.2,1\n")
    with pytest.raises(pio.InputError, match="tau"):
        pio.read_episode(tmp_path / "e.csv", tau=0.5)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(pio.InputError, match="nowhere.csv"):
        pio.read_samples(tmp_path / "nowhere.csv")


def test_samples_and_keyvalue(tmp_path):
    pts = np.random.default_rng(0).random((5, 2))
    pio.write_samples(tmp_path / "s.csv", pts, ["tool=test"])
    np.testing.assert_array_equal(pio.read_samples(tmp_path / "s.csv"), pts)
    pio.write_keyvalue(tmp_path / "kv", {"a": 1, "b": 0.1, "c": "x=y"})
    assert pio.read_keyvalue(tmp_path / "kv") == {"a": "1", "b": "0.1", "c": "x=y"}
    (tmp_path / "bad").write_text("novalue\n")
    with pytest.raises(pio.InputError):
        pio.read_keyvalue(tmp_path / "bad")
