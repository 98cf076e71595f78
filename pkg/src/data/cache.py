# src/data/cache.py
"""
Caché binaria columnar de datasets.

Formato: 8 bytes de magia "FCDP0001", longitud (uint64 little-endian) de un bloque de
metadatos JSON, el JSON y luego los arreglos crudos en el orden que lista el JSON.
"""
import json
import struct
from typing import Any, Dict, List

import numpy as np

from src.common.exceptions import DataFormatError
from src.common.utils import logger, write_bytes_atomic
from src.data.dataset import Dataset

MAGIC = b"FCDP0001"
_LEN = struct.Struct("<Q")


def save_dataset(ds: Dataset, path: str) -> None:
    arrays = [("features", np.ascontiguousarray(ds.features, dtype='<f8')),
              ("labels", np.ascontiguousarray(ds.labels, dtype='<i8'))]
    arrays += [(f"group:{name}", np.ascontiguousarray(values, dtype='<i8'))
               for name, values in sorted(ds.groups.items())]
    columns: List[Dict[str, Any]] = []
    offset = 0
    for name, arr in arrays:
        columns.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset,
                        "nbytes": arr.nbytes})
        offset += arr.nbytes
    meta = json.dumps({"columns": columns, "feature_names": ds.feature_names, "provenance": ds.provenance},
                      sort_keys=True).encode('utf-8')
    payload = MAGIC + _LEN.pack(len(meta)) + meta + b"".join(arr.tobytes() for _, arr in arrays)
    write_bytes_atomic(path, payload)
    logger.info(f"Dataset guardado en caché: {path} ({len(ds)} filas)")


def load_dataset(path: str) -> Dataset:
    with open(path, 'rb') as f:
        payload = f.read()
    if payload[:8] != MAGIC:
        raise DataFormatError(f"{path} is not a dataset cache (bad magic header).")
    if len(payload) < 16:
        raise DataFormatError(f"{path} is truncated.")
    (meta_len,) = _LEN.unpack_from(payload, 8)
    body_start = 16 + meta_len
    try:
        meta = json.loads(payload[16:body_start].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: corrupt metadata block ({e}).") from e

    arrays: Dict[str, np.ndarray] = {}
    for col in meta["columns"]:
        start = body_start + col["offset"]
        chunk = payload[start:start + col["nbytes"]]
        if len(chunk) != col["nbytes"]:
            raise DataFormatError(f"{path}: column '{col['name']}' is truncated.")
        arrays[col["name"]] = np.frombuffer(chunk, dtype=np.dtype(col["dtype"])).reshape(col["shape"]).copy()

    groups = {name.split(":", 1)[1]: values for name, values in arrays.items() if name.startswith("group:")}
    return Dataset(arrays["features"], arrays["labels"], groups, meta["feature_names"], meta["provenance"])
