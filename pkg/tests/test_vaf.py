import numpy as np
import pytest

from vecadvect import fields as fl, vaf


def test_roundtrip_bytes(tmp_path, grid3, rng):
    f = fl.random_solenoidal(grid3, rng)
    vaf.write(tmp_path / "a.vaf", f)
    g = vaf.read(tmp_path / "a.vaf")
    assert np.array_equal(g.components, f.components)
    assert g.grid == f.grid
    vaf.write(tmp_path / "b.vaf", g)
    assert (tmp_path / "a.vaf").read_bytes() == (tmp_path / "b.vaf").read_bytes()


def test_scalar_roundtrip(grid2, rng):
    s = fl.random_scalar(grid2, rng)
    back = vaf.decode(vaf.encode(s))
    assert isinstance(back, fl.ScalarField)
    assert np.array_equal(back.samples, s.samples)


def test_bad_magic_and_truncation(grid2, rng):
    buf = vaf.encode(fl.random_solenoidal(grid2, rng))
    with pytest.raises(vaf.VafError):
        vaf.decode(b"XXXX" + buf[4:])
    with pytest.raises(vaf.VafError):
        vaf.decode(buf[:-8])
