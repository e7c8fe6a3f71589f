import numpy as np
import pytest

from fdmnav import recordio


def sample_tuples(rng, n=7, obs_dim=30, horizon=4):
    return (rng.uniform(0, 1, (n, obs_dim)).astype(np.float32),
            rng.uniform(-1, 1, (n, horizon, 3)).astype(np.float32),
            rng.normal(size=(n, horizon)).astype(np.float32),
            rng.normal(size=(n, horizon)).astype(np.float32),
            (rng.uniform(size=(n, horizon)) > 0.7).astype(np.float32))


@pytest.mark.parametrize("ext", ["bin", "jsonl"])
def test_fdm_tuple_roundtrip(tmp_path, ext):
    rng = np.random.default_rng(0)
    tuples = sample_tuples(rng)
    path = str(tmp_path / f"data.{ext}")
    n = recordio.write_fdm_tuples(path, tuples, beam_count=16, horizon=4)
    assert n == 7
    back = recordio.read_fdm_tuples(path)
    for a, b in zip(tuples, back):
        tol = 1e-6 if ext == "jsonl" else 0.0
        np.testing.assert_allclose(a.reshape(b.shape), b, atol=tol)


def test_header_is_self_describing(tmp_path):
    rng = np.random.default_rng(1)
    path = str(tmp_path / "data.bin")
    recordio.write_fdm_tuples(path, sample_tuples(rng), beam_count=16, horizon=4)
    header, records = recordio.read_records(path)
    assert header["meta"] == {"beam_count": 16, "horizon": 4, "obs_dim": 30}
    assert header["fields"] == {"obs": 30, "cmds": 12, "xs": 4, "ys": 4, "ps": 4}
    assert len(records) == 7


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b'{"magic": "nope"}\n')
    with pytest.raises(ValueError, match="magic"):
        recordio.read_records(str(path))


def test_writer_validates_fields(tmp_path):
    with recordio.RecordWriter(str(tmp_path / "x.bin"), {"a": 3}) as w:
        with pytest.raises(KeyError):
            w.write({"b": np.zeros(3)})
        with pytest.raises(ValueError, match="header says"):
            w.write({"a": np.zeros(4)})
        w.write({"a": np.zeros(3)})


def test_failed_write_leaves_no_partial_file(tmp_path):
    path = tmp_path / "y.bin"
    try:
        with recordio.RecordWriter(str(path), {"a": 2}) as w:
            w.write({"a": np.zeros(2)})
            raise RuntimeError("boom")
    except RuntimeError:
        pass
    assert not path.exists()
    assert not (tmp_path / "y.bin.tmp").exists()
