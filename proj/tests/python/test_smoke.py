import math

import numpy as np
import pytest

import nwc


@pytest.fixture(scope="module")
def model():
    chunks = nwc.synthetic_chunks("student-t", 2048, seed=1)
    return nwc.train_codec(chunks, steps=30, batch=64, width=16, blocks=1, lr=1e-3, seed=1)


def test_synthetic_chunks_shape():
    chunks = nwc.synthetic_chunks("gaussian", 100, seed=3)
    assert chunks.shape == (100, 16)
    assert chunks.dtype == np.float32
    assert np.array_equal(chunks, nwc.synthetic_chunks("gaussian", 100, seed=3))


def test_compress_round_trip(model, tmp_path):
    rng = np.random.default_rng(0)
    w = (0.02 * rng.standard_t(4, size=(40, 6))).astype(np.float32)
    h = nwc.estimate_hessian(rng.standard_normal((128, 6)).astype(np.float32))
    data, recon, quality = nwc.compress(w, model, hessian=h)
    assert len(quality) == 6
    assert np.array_equal(nwc.decompress(data, model), recon)
    assert nwc.rate_report(data)["total_bpp"] > 0

    path = str(tmp_path / "m.nwcm")
    model.save(path)
    assert nwc.CodecModel.load(path).model_hash == model.model_hash
    assert nwc.CodecModel.from_bytes(model.to_bytes()).model_hash == model.model_hash


def test_errors(model):
    w = np.ones((16, 2), dtype=np.float32)
    with pytest.raises(nwc.InputError):
        nwc.compress(w, model)
    data, _, _ = nwc.compress(w, model, feedback=False, uniform_quality=0)
    other = nwc.create_model(width=16, blocks=1, seed=99)
    with pytest.raises(nwc.HashMismatchError):
        nwc.decompress(data, other)
    with pytest.raises(nwc.FormatError):
        nwc.decompress(data[:10], model)


def test_quality_and_proxy():
    assert nwc.assign_quality([1, 2, 3, 4, 5, 6, 7, 8], 4) == [0, 0, 0, 0, 1, 1, 2, 3]
    w = np.arange(6, dtype=np.float32).reshape(2, 3)
    w_hat = np.zeros_like(w)
    eye = np.eye(3, dtype=np.float32)
    assert nwc.proxy_loss(w, w_hat, eye) == pytest.approx(float((w**2).sum()))


def test_companding():
    assert nwc.compand_encode(-0.1, "gaussian", 1) == 0
    assert nwc.compand_decode(1, "gaussian", 1) == pytest.approx(0.6744897502, abs=1e-9)
    assert nwc.compand_decode(1, "laplace", 1) == pytest.approx(math.log(2) / math.sqrt(2), abs=1e-12)
    mse = nwc.eval_companding("gaussian", "gaussian", 1, samples=200000, seed=1)
    assert mse == pytest.approx(0.3786, abs=5e-3)


def test_container(tmp_path):
    path = str(tmp_path / "t.nwt")
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    v = np.array([0.5, 1.5], dtype=np.float32)
    nwc.write_container(path, {"a": a, "v": v})
    back = nwc.read_container(path)
    assert list(back) == ["a", "v"]
    assert np.array_equal(back["a"], a)
    assert np.array_equal(back["v"], v)
