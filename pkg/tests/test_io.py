"""Tests for archive round-trips, IDX ingestion, and CSV output."""

import struct

import numpy as np
import pytest

from gendyna.numeric import Rng
from gendyna import dbn, envs, persist, temporal
from gendyna.linear_model import LinearExpectationModel
from gendyna.persist import (
    BadMagicError,
    KindMismatchError,
    TruncatedArchiveError,
    VersionMismatchError,
    load_archive,
    load_idx,
    load_model,
    save_archive,
    save_model,
    write_csv,
)
from gendyna.rbm import BINARY, GAUSSIAN, CdConfig, init_rbm


def test_archive_round_trip_bitwise(tmp_path):
    path = tmp_path / "a.gdyn"
    arrays = {"x": np.array([[1.0, -2.5], [np.pi, 1e-300]]),
              "y": np.arange(5, dtype=np.float64)}
    save_archive(path, "rbm", {"note": "t", "n": 3}, arrays)
    kind, header, loaded = load_archive(path)
    assert kind == "rbm"
    assert header == {"note": "t", "n": 3}
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])
        assert loaded[name].dtype == np.float64


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.gdyn"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(BadMagicError):
        load_archive(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "v.gdyn"
    path.write_bytes(b"GDYN" + struct.pack("<I", 999) + b"\x00" * 8)
    with pytest.raises(VersionMismatchError):
        load_archive(path)


def test_kind_mismatch(tmp_path):
    path = tmp_path / "k.gdyn"
    save_archive(path, "linear", {}, {})
    with pytest.raises(KindMismatchError):
        load_archive(path, expected_kind="rbm")


def test_truncated_archive(tmp_path):
    path = tmp_path / "t.gdyn"
    save_archive(path, "rbm", {}, {"w": np.ones((4, 4))})
    data = path.read_bytes()
    path.write_bytes(data[:-9])
    with pytest.raises(TruncatedArchiveError):
        load_archive(path)


def test_rbm_model_round_trip(tmp_path):
    rbm = init_rbm(5, 3, Rng(0), GAUSSIAN)
    save_model(tmp_path / "m.gdyn", rbm)
    back = load_model(tmp_path / "m.gdyn", "rbm")
    np.testing.assert_array_equal(back.weights, rbm.weights)
    np.testing.assert_array_equal(back.v_bias, rbm.v_bias)
    np.testing.assert_array_equal(back.h_bias, rbm.h_bias)
    assert back.visible_family == GAUSSIAN


def stack_fixture(fine_tune=False):
    rng = Rng(1)
    data = rng.bernoulli(0.5, size=(20, 6))
    cfg = CdConfig(k=1, learning_rate=0.1, momentum=0.0, epochs=2,
                   minibatch_size=5)
    stack = dbn.greedy_train(data, [4, 3], cfg, Rng(1))
    if fine_tune:
        stack = dbn.fine_tune(stack, data, 0.1, 3)
    return stack, data


@pytest.mark.parametrize("fine_tune", [False, True])
def test_dbn_round_trip(tmp_path, fine_tune):
    stack, data = stack_fixture(fine_tune)
    save_model(tmp_path / "s.gdyn", stack)
    back = load_model(tmp_path / "s.gdyn", "dbn")
    assert back.fine_tuned == fine_tune
    np.testing.assert_array_equal(dbn.encode(back, data),
                                  dbn.encode(stack, data))
    np.testing.assert_array_equal(
        dbn.decode(back, dbn.encode(back, data)),
        dbn.decode(stack, dbn.encode(stack, data)))


def test_temporal_set_round_trip(tmp_path):
    rng = Rng(2)
    pairs = [(rng.bernoulli(0.5, size=3), rng.bernoulli(0.5, size=3))
             for _ in range(10)]
    cfg = CdConfig(k=1, learning_rate=0.1, momentum=0.0, epochs=2,
                   minibatch_size=5)
    models = {a: temporal.train_temporal(pairs, 4, cfg, Rng(a), action=a,
                                         gibbs_steps_sampling=7)
              for a in (0, 2)}
    save_model(tmp_path / "t.gdyn", models)
    back = load_model(tmp_path / "t.gdyn", "temporal-set")
    assert sorted(back) == [0, 2]
    for a in back:
        assert back[a].action == a
        assert back[a].gibbs_steps_sampling == 7
        np.testing.assert_array_equal(back[a].rbm.weights,
                                      models[a].rbm.weights)


def test_linear_round_trip(tmp_path):
    m = LinearExpectationModel({0: np.eye(3), 1: np.full((3, 3), 0.5)},
                               {0: np.arange(3.0), 1: np.ones(3)})
    save_model(tmp_path / "l.gdyn", m)
    back = load_model(tmp_path / "l.gdyn", "linear")
    assert back.actions == [0, 1]
    np.testing.assert_array_equal(back.f[1], m.f[1])
    np.testing.assert_array_equal(back.b[0], m.b[0])


def test_classifier_round_trip(tmp_path):
    rng = Rng(3)
    head = dbn.init_classifier([4, 3, 2], rng)
    save_model(tmp_path / "c.gdyn", head)
    back = load_model(tmp_path / "c.gdyn", "classifier")
    x = rng.bernoulli(0.5, size=(5, 4))
    np.testing.assert_array_equal(dbn.classifier_forward(back, x)[-1],
                                  dbn.classifier_forward(head, x)[-1])


def test_reward_round_trip(tmp_path):
    m = envs.RewardModel(np.array([0.5, -1.0]), 0.25)
    save_model(tmp_path / "r.gdyn", m)
    back = load_model(tmp_path / "r.gdyn", "reward")
    np.testing.assert_array_equal(back.w, m.w)
    assert back.w0 == 0.25


def test_save_model_rejects_unknown_type(tmp_path):
    with pytest.raises(persist.ArchiveError):
        save_model(tmp_path / "x.gdyn", object())


def test_save_model_is_deterministic_bytes(tmp_path):
    rbm = init_rbm(4, 2, Rng(5), BINARY)
    save_model(tmp_path / "a.gdyn", rbm)
    save_model(tmp_path / "b.gdyn", rbm)
    assert (tmp_path / "a.gdyn").read_bytes() == (tmp_path / "b.gdyn").read_bytes()


# ------------------------------------------------------------------- IDX

def make_idx(path, arr):
    arr = np.asarray(arr, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, 0x08, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def test_load_idx_images(tmp_path):
    imgs = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    make_idx(tmp_path / "img.idx", imgs)
    vectors, dims = load_idx(tmp_path / "img.idx")
    assert dims == (2, 3, 4)
    assert vectors.shape == (2, 12)
    np.testing.assert_allclose(vectors[1][0], 12 / 255.0)
    assert vectors.max() <= 1.0


def test_load_idx_bad_magic(tmp_path):
    (tmp_path / "bad.idx").write_bytes(b"\x00\x00\x09\x01" + b"\x00" * 8)
    with pytest.raises(ValueError):
        load_idx(tmp_path / "bad.idx")


def test_load_idx_short_payload(tmp_path):
    with open(tmp_path / "short.idx", "wb") as fh:
        fh.write(bytes([0, 0, 0x08, 1]))
        fh.write(struct.pack(">I", 10))
        fh.write(b"\x01\x02")
    with pytest.raises(ValueError):
        load_idx(tmp_path / "short.idx")


# ------------------------------------------------------------------- CSV

def test_write_csv_full_precision(tmp_path):
    path = tmp_path / "m.csv"
    write_csv(path, ["a", "b"], [[1, 1.0 / 3.0], [2, np.float64(0.1)]])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "a,b"
    assert lines[1] == "1,0.33333333333333331"
    assert float(lines[2].split(",")[1]) == 0.1


def test_write_csv_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "r.csv", ["a", "b"], [[1]])
