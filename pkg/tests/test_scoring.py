import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from raymc import scoring
from raymc.physics import attenuate
from raymc.scoring import FluenceGrid, Summary, merge_grids, merge_summaries, normalize

coord = st.floats(-3.0, 13.0)
point = st.tuples(coord, coord, coord)


def grid():
    return FluenceGrid((0.0, 0.0, 0.0), 1.0, (10, 10, 10))


@given(point, point)
def test_deposit_length_partition(a, b):
    g = grid()
    g.deposit_segment(a, b, 1.0, 0.0)
    want = oracles.segment_grid_length(a, b, np.zeros(3), np.full(3, 10.0))
    assert g.total_path_weight() == pytest.approx(want, rel=1e-9, abs=1e-9)
    assert np.all(g.data >= 0)


@given(point, point, st.floats(0.0, 2.0))
def test_deposit_weight_partition(a, b, mua):
    a = np.clip(a, 0.0, 10.0)
    b = np.clip(b, 0.0, 10.0)
    g = grid()
    w_out = g.deposit_segment(a, b, 0.8, mua)
    length = float(np.linalg.norm(np.subtract(b, a)))
    after, path = attenuate(0.8, mua, length)
    assert w_out == pytest.approx(after, rel=1e-12, abs=1e-15)
    assert g.total_path_weight() == pytest.approx(path, rel=1e-9, abs=1e-12)


def test_axis_aligned_on_voxel_faces():
    g = grid()
    g.deposit_segment((0, 2.0, 2.0), (10, 2.0, 2.0), 1.0, 0.0)
    assert g.total_path_weight() == pytest.approx(10.0)
    assert np.count_nonzero(g.data) == 10


def test_voxel_values_along_line():
    g = grid()
    g.deposit_segment((0.5, 0.5, 0.5), (0.5, 0.5, 3.5), 1.0, 0.0)
    assert np.allclose(g.data[0, 0, :4], [0.5, 1, 1, 0.5])


def test_normalize_and_merge():
    a, b = grid(), grid()
    a.deposit_segment((0, 0, 0.5), (10, 0.5, 0.5), 1.0, 0.0)
    b.data += a.data
    a.nphoton = b.nphoton = 5
    m = merge_grids([a, b])
    assert m.nphoton == 10 and np.allclose(m.data, 2 * a.data)
    n = normalize(m, 10)
    assert n.normalized and np.allclose(n.data, m.data / 10)
    with pytest.raises(ValueError):
        normalize(n, 10)
    with pytest.raises(ValueError):
        n.deposit_segment((0, 0, 0), (1, 1, 1), 1.0, 0.0)
    with pytest.raises(ValueError):
        merge_grids([a, FluenceGrid((1, 0, 0), 1.0, (10, 10, 10))])


def test_grid_validation():
    with pytest.raises(ValueError):
        FluenceGrid((0, 0, 0), 0.0, (1, 1, 1))
    with pytest.raises(ValueError):
        FluenceGrid((0, 0, 0), 1.0, (1, 0, 1))


def test_summary_balance_and_merge():
    t = np.zeros(scoring.N_TALLY)
    t[scoring.T_LAUNCHED] = 10
    t[scoring.T_ABSORBED] = 4
    t[scoring.T_EXITED] = 5
    t[scoring.T_TIMEOUT] = 0.5
    t[scoring.T_LEAKED_W] = 0.5
    t[scoring.T_LEAKED_N] = 1
    s = Summary.from_tally(t, rng_draws=7)
    assert s.balance_error() == 0.0 and s.leaked_count == 1
    m = merge_summaries([s, s])
    assert m.launched_weight == 20 and m.rng_draws == 14 and m.workers == 2
    assert Summary().balance_error() == 0.0


def test_writers_roundtrip(tmp_path):
    g = grid()
    g.data[:] = np.arange(1000).reshape(10, 10, 10)
    raw, hdr = scoring.write_volume(tmp_path / "run", g, {"config_hash": "abc", "seed": 3})
    meta, data = scoring.read_volume(hdr)
    assert meta["config_hash"] == "abc" and meta["seed"] == 3
    assert np.array_equal(data, g.data)
    assert raw.stat().st_size == 4000
    summ = scoring.write_summary(tmp_path / "run", Summary(photons=2), {"seed": 3})
    assert json.loads(summ.read_text())["photons"] == 2
    sl = scoring.write_slice_csv(tmp_path / "run", g, "y", 4)
    rows = list(csv.reader(sl.open()))
    assert rows[0] == ["x", "z", "value"] and len(rows) == 101
    assert float(rows[1 + 3 * 10 + 7][2]) == g.data[3, 4, 7]
    with pytest.raises(ValueError):
        scoring.write_slice_csv(tmp_path / "run", g, "z", 10)
