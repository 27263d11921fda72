import numpy as np
import pytest

from pcreg.io import (
    MAGIC, FormatError, load_fit, parse_t3f, read_matrix, read_matrix_csv, read_t3f, save_fit,
    t3f_bytes, write_matrix_csv, write_t3f,
)
from pcreg.hetero import VarianceModel
from pcreg.regress import fit_otdr
from pcreg.tensor import DimensionError


def test_t3f_header_layout():
    t = np.arange(6.0).reshape((1, 2, 3), order="F")
    buf = t3f_bytes(t)
    assert buf[:8] == MAGIC
    assert int.from_bytes(buf[8:12], "little") == 1
    assert [int.from_bytes(buf[16 + 8 * i: 24 + 8 * i], "little") for i in range(3)] == [1, 2, 3]
    assert np.frombuffer(buf[40:], "<f8").tolist() == list(range(6))


def test_t3f_roundtrip(tmp_path, rng):
    t = rng.standard_normal((4, 3, 5))
    write_t3f(tmp_path / "a.t3f", t)
    assert np.array_equal(read_t3f(tmp_path / "a.t3f"), t)


@pytest.mark.parametrize("mutate", [
    lambda b: b[:20],
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b[:8] + (2).to_bytes(4, "little") + b[12:],
    lambda b: b + b"\0" * 8,
])
def test_t3f_rejects_malformed(mutate):
    with pytest.raises(FormatError):
        parse_t3f(mutate(t3f_bytes(np.ones((2, 2, 2)))))


def test_csv_roundtrip_is_exact(tmp_path, rng):
    m = rng.standard_normal((7, 3)) * 1e5
    write_matrix_csv(tmp_path / "m.csv", m)
    assert np.array_equal(read_matrix_csv(tmp_path / "m.csv"), m)


def test_read_matrix_from_t3f(tmp_path):
    write_t3f(tmp_path / "m.t3f", np.ones((3, 2, 1)))
    assert read_matrix(tmp_path / "m.t3f").shape == (3, 2)
    write_t3f(tmp_path / "bad.t3f", np.ones((3, 2, 2)))
    with pytest.raises(DimensionError):
        read_matrix(tmp_path / "bad.t3f")


def test_csv_rejects_nonfinite(tmp_path):
    (tmp_path / "m.csv").write_text("1,nan\n2,3\n")
    with pytest.raises(ValueError):
        read_matrix_csv(tmp_path / "m.csv")


def test_fit_save_load(tmp_path, rng):
    Y = rng.standard_normal((6, 5, 8))
    X = np.column_stack([np.ones(8), rng.standard_normal(8)])
    fit = fit_otdr(Y, X, 2, 2)
    fit.offset = rng.standard_normal((6, 5))
    vm = VarianceModel(np.array([-1.0, 0.5]), np.array([0.1, 0.2]), 1.3)
    save_fit(tmp_path / "f", fit, vm, extra={"intercept": True})
    back, vm2, meta = load_fit(tmp_path / "f")
    assert np.array_equal(back.coef, fit.coef)
    assert np.array_equal(back.core, fit.core)
    assert np.array_equal(back.offset, fit.offset)
    assert np.array_equal(back.basis.U1, fit.basis.U1)
    assert back.method == "otdr" and meta["intercept"] is True
    assert np.array_equal(vm2.coef, vm.coef) and vm2.dispersion == vm.dispersion
