import numpy as np
import pytest

from ftrend.fda import FunctionalDataset, Grid
from ftrend.io import InputError, read_curves, read_edges, write_curves, write_json, write_text


def test_curve_round_trip(tmp_path, rng):
    grid = Grid(np.sort(rng.uniform(0, 10, 15)))
    data = FunctionalDataset(grid, rng.normal(size=(4, 15)) * 1e3)
    write_curves(tmp_path / "c.csv", data)
    back = read_curves(tmp_path / "c.csv")
    assert back.grid == grid
    np.testing.assert_array_equal(back.values, data.values)


@pytest.mark.parametrize("text,line", [
    ("1,2,3\n1,2,3\n1,x,3\n", 3),
    ("1,2,3\n1,2\n1,2,3\n", 2),
    ("1,2,3\n1,2,nan\n1,2,3\n", 2),
])
def test_malformed_curves_report_line(tmp_path, text, line):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=f"bad.csv:{line}:"):
        read_curves(p)


def test_curve_file_problems(tmp_path):
    with pytest.raises(InputError, match="no such file"):
        read_curves(tmp_path / "missing.csv")
    p = tmp_path / "one.csv"
    p.write_text("1,2\n3,4\n")
    with pytest.raises(InputError, match="two curves"):
        read_curves(p)
    p.write_text("2,1\n3,4\n5,6\n")
    with pytest.raises(InputError, match="increasing"):
        read_curves(p)


def test_edges(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("from,to\n1,2\n3,2\n\n")
    g = read_edges(p, 3)
    assert g.edges == ((0, 1), (1, 2))


@pytest.mark.parametrize("text,msg", [
    ("1,2\n2,1\n", "duplicate"),
    ("1,1\n", "self-loop"),
    ("1,4\n", "out of range"),
    ("1,2,3\n", "two vertex"),
    ("1,2\na,b\n", "integers"),
])
def test_bad_edges(tmp_path, text, msg):
    p = tmp_path / "e.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=msg):
        read_edges(p, 3)


def test_atomic_write_leaves_no_temp(tmp_path):
    write_text(tmp_path / "sub" / "a.txt", "x")
    write_json(tmp_path / "sub" / "b.json", {"a": np.arange(2), "b": np.float64(1.5)})
    assert sorted(p.name for p in (tmp_path / "sub").iterdir()) == ["a.txt", "b.json"]
    assert '"b": 1.5' in (tmp_path / "sub" / "b.json").read_text()
