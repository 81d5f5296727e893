"""Versioned binary container for fitted models.

Layout (all little-endian): 4 magic bytes, u32 format version, a
length-prefixed model-kind string, a length-prefixed JSON metadata blob,
then named float64 arrays (name, ndim, dims, raw data). Integer-valued
arrays (counts, indices) ride along as float64, which is exact below 2^53.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import scipy.sparse as sp

from .factorization import FMModel, MFModel
from .recommenders import ItemKNNModel, MostPopModel, PureSVDModel, SLIMModel

MAGIC = b"RBM1"
FORMAT_VERSION = 1


def _pack_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _read_string(handle) -> str:
    (length,) = struct.unpack("<I", handle.read(4))
    return handle.read(length).decode("utf-8")


def _pack_array(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype="<f8")
    header = _pack_string(name) + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}q", *array.shape)
    return header + array.tobytes()


def _read_array(handle):
    name = _read_string(handle)
    (ndim,) = struct.unpack("<I", handle.read(4))
    shape = struct.unpack(f"<{ndim}q", handle.read(8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(handle.read(8 * count), dtype="<f8").reshape(shape)
    return name, data.copy()


def save_model(model, path) -> None:
    kind = model.kind
    meta, arrays = _MODEL_CODECS[kind][0](model)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", FORMAT_VERSION))
        handle.write(_pack_string(kind))
        handle.write(_pack_string(json.dumps(meta, sort_keys=True)))
        handle.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            handle.write(_pack_array(name, arrays[name]))


def load_model(path):
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a model container (bad magic {magic!r})")
        (version,) = struct.unpack("<I", handle.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported container version {version}")
        kind = _read_string(handle)
        if kind not in _MODEL_CODECS:
            raise ValueError(f"{path}: unknown model kind {kind!r}")
        meta = json.loads(_read_string(handle))
        (n_arrays,) = struct.unpack("<I", handle.read(4))
        arrays = dict(_read_array(handle) for _ in range(n_arrays))
    return _MODEL_CODECS[kind][1](meta, arrays)


def _sparse_to_triples(matrix: sp.spmatrix):
    coo = matrix.tocoo()
    return np.stack([coo.row, coo.col, coo.data]).astype(np.float64)


def _triples_to_csr(triples: np.ndarray, shape):
    rows, cols, data = triples
    return sp.csr_matrix((data, (rows.astype(np.int64), cols.astype(np.int64))),
                         shape=tuple(shape))


def _encode_mostpop(model: MostPopModel):
    return {}, {"item_counts": model.item_counts}


def _decode_mostpop(meta, arrays):
    return MostPopModel(arrays["item_counts"])


def _encode_itemknn(model: ItemKNNModel):
    meta = {
        "n_neighbors": model.n_neighbors,
        "normalize": model.normalize,
        "shape": list(model.train_matrix.shape),
    }
    return meta, {
        "similarity": _sparse_to_triples(model.similarity),
        "train": _sparse_to_triples(model.train_matrix),
    }


def _decode_itemknn(meta, arrays):
    n_items = meta["shape"][1]
    return ItemKNNModel(
        _triples_to_csr(arrays["similarity"], (n_items, n_items)),
        _triples_to_csr(arrays["train"], meta["shape"]),
        meta["n_neighbors"],
        meta["normalize"],
    )


def _encode_puresvd(model: PureSVDModel):
    return {}, {"user_factors": model.user_factors, "item_factors": model.item_factors}


def _decode_puresvd(meta, arrays):
    return PureSVDModel(arrays["user_factors"], arrays["item_factors"])


def _encode_slim(model: SLIMModel):
    meta = {"shape": list(model.train_matrix.shape)}
    return meta, {
        "weights": _sparse_to_triples(model.weights),
        "train": _sparse_to_triples(model.train_matrix),
    }


def _decode_slim(meta, arrays):
    n_items = meta["shape"][1]
    return SLIMModel(
        _triples_to_csr(arrays["weights"], (n_items, n_items)),
        _triples_to_csr(arrays["train"], meta["shape"]),
    )


def _encode_mf(model: MFModel):
    return {}, {"user_factors": model.user_factors, "item_factors": model.item_factors}


def _decode_mf(meta, arrays):
    return MFModel(arrays["user_factors"], arrays["item_factors"])


def _encode_fm(model: FMModel):
    arrays = {
        "user_factors": model.user_factors,
        "item_factors": model.item_factors,
        "user_bias": model.user_bias,
        "item_bias": model.item_bias,
        "global_bias": np.asarray([model.global_bias]),
    }
    return {}, arrays


def _decode_fm(meta, arrays):
    return FMModel(
        arrays["user_factors"], arrays["item_factors"],
        arrays["user_bias"], arrays["item_bias"], arrays["global_bias"][0],
    )


_MODEL_CODECS = {
    "mostpop": (_encode_mostpop, _decode_mostpop),
    "itemknn": (_encode_itemknn, _decode_itemknn),
    "puresvd": (_encode_puresvd, _decode_puresvd),
    "slim": (_encode_slim, _decode_slim),
    "mf": (_encode_mf, _decode_mf),
    "fm": (_encode_fm, _decode_fm),
}
