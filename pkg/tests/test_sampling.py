import numpy as np
import pytest

from cpinn_rp.exceptions import ConfigError, DataError, StructuralError
from cpinn_rp.pde import heat_problem, wave_problem
from cpinn_rp.sampling import (Dataset, load_dataset, make_grid, read_csv, sample, sample_heat, sample_wave,
                               save_dataset, split_counts, write_csv)


def test_heat_counts_and_labels():
    p = heat_problem()
    ds = sample_heat(p, seed=0)
    assert ds.d_b.shape == (130, 3)
    assert ds.extra_collocation.shape == (20, 2)
    assert len(ds.d_i) == 0
    assert len(ds.collocation) == 150
    ic = ds.d_b[ds.d_b[:, 1] == 0]
    assert np.allclose(ic[:, 2], np.sin(ic[:, 0] / 2))
    left = ds.d_b[ds.d_b[:, 0] == 0]
    assert np.all(left[:, 2] == 0)
    right = ds.d_b[ds.d_b[:, 0] == np.pi]
    assert np.allclose(right[:, 2], p.exact_u(right[:, 0], right[:, 1]))
    assert ds.neumann_mask(p).sum() == len(right)


def test_heat_without_edge_values():
    p = heat_problem()
    ds = sample_heat(p, seed=0, neumann_values=False)
    right = ds.neumann_mask(p)
    assert np.all(np.isnan(ds.labeled[right, 2]))
    assert np.all(np.isfinite(ds.labeled[~right, 2]))


def test_wave_counts_and_velocity_rows():
    p = wave_problem()
    ds = sample_wave(p, seed=1)
    assert ds.d_b.shape == (170, 3)
    assert ds.d_i.shape == (40, 3)
    assert np.allclose(ds.d_i[:, 2], p.exact_u(ds.d_i[:, 0], ds.d_i[:, 1]))
    assert ds.velocity_mask(p).sum() == np.sum(ds.labeled[:, 1] == 0)
    assert not ds.neumann_mask(p).any()


def test_sampling_is_deterministic_per_seed():
    p = wave_problem()
    assert sample(p, 3).equals(sample(p, 3))
    assert not sample(p, 3).equals(sample(p, 4))


def test_split_counts_sum_and_proportion():
    c = split_counts(130, [np.pi, 10, 10])
    assert c.sum() == 130
    assert list(c) == [18, 56, 56]


def test_sampler_kind_checks():
    with pytest.raises(ConfigError):
        sample_heat(wave_problem())
    with pytest.raises(ConfigError):
        sample_wave(heat_problem())


def test_grid_layout():
    g = make_grid(heat_problem(), 3, 4)
    assert g.points.shape == (12, 2)
    assert g.dt == pytest.approx(10 / 3)
    with pytest.raises(ConfigError):
        make_grid(heat_problem(), 1, 5)


def test_dataset_files_roundtrip_bytes(tmp_path):
    ds = sample_heat(heat_problem(), seed=5)
    save_dataset(ds, tmp_path / "a")
    save_dataset(load_dataset(tmp_path / "a"), tmp_path / "b")
    for name in ("d_b.csv", "d_i.csv", "collocation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert load_dataset(tmp_path / "a").equals(ds)


def test_csv_errors(tmp_path):
    with pytest.raises(DataError):
        read_csv(tmp_path / "missing.csv", ("x", "t"))
    (tmp_path / "h.csv").write_text("a,b\n1,2\n")
    with pytest.raises(StructuralError):
        read_csv(tmp_path / "h.csv", ("x", "t"))
    (tmp_path / "n.csv").write_text("x,t\n1,abc\n")
    with pytest.raises(DataError):
        read_csv(tmp_path / "n.csv", ("x", "t"))
    (tmp_path / "w.csv").write_text("x,t\n1,2,3\n")
    with pytest.raises(StructuralError):
        read_csv(tmp_path / "w.csv", ("x", "t"))


def test_csv_is_full_precision(tmp_path):
    v = np.array([[np.pi, 1 / 3]])
    write_csv(tmp_path / "p.csv", v, ("x", "t"))
    assert np.array_equal(read_csv(tmp_path / "p.csv", ("x", "t")), v)


def test_with_extra_labels():
    ds = Dataset(d_b=[[0, 0, 1.0]])
    out = ds.with_extra_labels([[1.0, 2.0, 3.0]])
    assert out.labeled.shape == (2, 3)
    assert len(ds.d_i) == 0
