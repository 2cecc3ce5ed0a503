"""Persistence: binary model archives with bitwise round-trips, IDX image
ingestion, and CSV metric emission.

Archive layout (little-endian): magic "GDYN", u32 version, length-prefixed
kind tag, length-prefixed JSON header (dimensions, config echo, seed),
u32 array count, then per array a length-prefixed name, u8 ndim, u64
shape entries, and raw float64 payload.
"""

import json
import struct

import numpy as np

MAGIC = b"GDYN"
VERSION = 1

KIND_RBM = "rbm"
KIND_DBN = "dbn"
KIND_TEMPORAL_SET = "temporal-set"
KIND_LINEAR = "linear"
KIND_CLASSIFIER = "classifier"
KIND_REWARD = "reward"
KIND_DATASET = "dataset"


class ArchiveError(Exception):
    pass


class BadMagicError(ArchiveError):
    pass


class VersionMismatchError(ArchiveError):
    pass


class KindMismatchError(ArchiveError):
    pass


class TruncatedArchiveError(ArchiveError):
    pass


def _write_bytes(fh, data: bytes):
    fh.write(struct.pack("<I", len(data)))
    fh.write(data)


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedArchiveError("archive file is truncated")
    return data


def _read_bytes(fh):
    (n,) = struct.unpack("<I", _read_exact(fh, 4))
    return _read_exact(fh, n)


def save_archive(path, kind, header: dict, arrays: dict):
    """Write a model archive; arrays are float64, stored little-endian."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        _write_bytes(fh, kind.encode())
        _write_bytes(fh, json.dumps(header, sort_keys=True).encode())
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
            _write_bytes(fh, name.encode())
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_archive(path, expected_kind=None):
    """Read (kind, header, arrays); raises distinct errors for bad magic,
    version mismatch, kind mismatch, and truncation."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise BadMagicError(f"{path} is not a model archive")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise VersionMismatchError(f"archive version {version}, expected {VERSION}")
        kind = _read_bytes(fh).decode()
        if expected_kind is not None and kind != expected_kind:
            raise KindMismatchError(f"archive holds {kind!r}, expected {expected_kind!r}")
        header = json.loads(_read_bytes(fh).decode())
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        arrays = {}
        for _ in range(count):
            name = _read_bytes(fh).decode()
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
            n_bytes = 8 * int(np.prod(shape)) if ndim else 8
            data = np.frombuffer(_read_exact(fh, n_bytes), dtype="<f8")
            if int(np.prod(shape)) != data.size:
                raise ArchiveError("dimension header inconsistent with payload")
            arrays[name] = data.reshape(shape).copy()
    return kind, header, arrays


def _rbm_arrays(rbm, prefix=""):
    return {f"{prefix}weights": rbm.weights, f"{prefix}v_bias": rbm.v_bias,
            f"{prefix}h_bias": rbm.h_bias}


def save_model(path, model, extra_header=None):
    """Serialize any supported model kind; see load_model."""
    from .dbn import ClassifierHead, DbnStack
    from .envs import RewardModel
    from .linear_model import LinearExpectationModel
    from .rbm import RbmParams
    from .temporal import TemporalModel

    header = dict(extra_header or {})
    arrays = {}
    if isinstance(model, RbmParams):
        kind = KIND_RBM
        header["visible_family"] = model.visible_family
        arrays = _rbm_arrays(model)
    elif isinstance(model, DbnStack):
        kind = KIND_DBN
        header["n_layers"] = len(model.layers)
        header["fine_tuned"] = model.fine_tuned
        header["families"] = [l.visible_family for l in model.layers]
        for i, layer in enumerate(model.layers):
            arrays.update(_rbm_arrays(layer, f"layer{i}."))
        if model.decoder is not None:
            for i, (w, b) in enumerate(model.decoder):
                arrays[f"decoder{i}.weights"] = w
                arrays[f"decoder{i}.bias"] = b
    elif isinstance(model, dict) and all(isinstance(m, TemporalModel)
                                         for m in model.values()):
        kind = KIND_TEMPORAL_SET
        header["actions"] = sorted(int(a) for a in model)
        header["gibbs_steps"] = {str(a): model[a].gibbs_steps_sampling for a in model}
        for a, tm in model.items():
            arrays.update(_rbm_arrays(tm.rbm, f"action{a}."))
    elif isinstance(model, LinearExpectationModel):
        kind = KIND_LINEAR
        header["actions"] = sorted(int(a) for a in model.f)
        for a in model.f:
            arrays[f"action{a}.f"] = model.f[a]
            arrays[f"action{a}.b"] = model.b[a]
    elif isinstance(model, ClassifierHead):
        kind = KIND_CLASSIFIER
        header["n_layers"] = len(model.weights)
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"layer{i}.weights"] = w
            arrays[f"layer{i}.bias"] = b
    elif isinstance(model, RewardModel):
        kind = KIND_REWARD
        arrays = {"w": model.w, "w0": np.array([model.w0])}
    else:
        raise ArchiveError(f"unsupported model type {type(model).__name__}")
    save_archive(path, kind, header, arrays)
    return kind


def load_model(path, expected_kind=None):
    """Deserialize a model archive back into its in-memory type."""
    from .dbn import ClassifierHead, DbnStack
    from .envs import RewardModel
    from .linear_model import LinearExpectationModel
    from .rbm import RbmParams
    from .temporal import TemporalModel

    kind, header, arrays = load_archive(path, expected_kind)
    if kind == KIND_RBM:
        return RbmParams(arrays["weights"], arrays["v_bias"], arrays["h_bias"],
                         header["visible_family"])
    if kind == KIND_DBN:
        layers = [RbmParams(arrays[f"layer{i}.weights"],
                            arrays[f"layer{i}.v_bias"],
                            arrays[f"layer{i}.h_bias"],
                            header["families"][i])
                  for i in range(header["n_layers"])]
        decoder = None
        if header["fine_tuned"]:
            decoder = [[arrays[f"decoder{i}.weights"], arrays[f"decoder{i}.bias"]]
                       for i in range(header["n_layers"])]
        return DbnStack(layers, header["fine_tuned"], decoder)
    if kind == KIND_TEMPORAL_SET:
        out = {}
        for a in header["actions"]:
            rbm = RbmParams(arrays[f"action{a}.weights"],
                            arrays[f"action{a}.v_bias"],
                            arrays[f"action{a}.h_bias"], "binary")
            out[a] = TemporalModel(a, rbm, int(header["gibbs_steps"][str(a)]))
        return out
    if kind == KIND_LINEAR:
        f = {a: arrays[f"action{a}.f"] for a in header["actions"]}
        b = {a: arrays[f"action{a}.b"] for a in header["actions"]}
        return LinearExpectationModel(f, b)
    if kind == KIND_CLASSIFIER:
        weights = [arrays[f"layer{i}.weights"] for i in range(header["n_layers"])]
        biases = [arrays[f"layer{i}.bias"] for i in range(header["n_layers"])]
        return ClassifierHead(weights, biases)
    if kind == KIND_REWARD:
        return RewardModel(arrays["w"], float(arrays["w0"][0]))
    raise ArchiveError(f"unknown archive kind {kind!r}")


def load_idx(path):
    """Parse an IDX unsigned-byte image file into [0,1]-scaled vectors.

    Returns (vectors (n, prod(dims[1:])), dims tuple).
    """
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic[0] != 0 or magic[1] != 0 or magic[2] != 0x08:
            raise ValueError("bad IDX magic")
        ndim = magic[3]
        dims = struct.unpack(f">{ndim}I", _read_exact(fh, 4 * ndim))
        payload = fh.read()
    total = int(np.prod(dims))
    if len(payload) < total:
        raise ValueError("IDX payload shorter than header dimensions")
    data = np.frombuffer(payload[:total], dtype=np.uint8).astype(np.float64) / 255.0
    n = dims[0] if ndim > 1 else 1
    return data.reshape(n, -1), dims


def write_csv(path, header, rows):
    """UTF-8 CSV with a header line; floats at 17 significant digits."""
    width = len(header)
    def fmt(x):
        if isinstance(x, float) or isinstance(x, np.floating):
            return f"{x:.17g}"
        return str(x)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != width:
                raise ValueError("ragged CSV row")
            fh.write(",".join(fmt(x) for x in row) + "\n")
