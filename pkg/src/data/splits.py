# src/data/splits.py
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from src.common.exceptions import StratumTooSmall
from src.data.dataset import DataSplits, Dataset
from src.numerics.random_streams import StreamKey, generator

MIN_STRATUM = 3


def _sklearn_seed(key: StreamKey) -> int:
    return key.digest() % (2 ** 32)


def stratified_split(ds: Dataset, fractions: Sequence[float] = (0.7, 0.1, 0.2),
                     key: Optional[StreamKey] = None) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Partición estratificada por etiqueta en train / validation / test.
    Primero se separa test y luego validation del resto; los índices de cada parte
    quedan en orden ascendente.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"Split fractions must be three positive values summing to 1, got {fractions}.")
    key = key or StreamKey(0, "split")
    labels, counts = np.unique(ds.labels, return_counts=True)
    small = {int(lbl): int(c) for lbl, c in zip(labels, counts) if c < MIN_STRATUM}
    if small:
        raise StratumTooSmall(f"Label strata with fewer than {MIN_STRATUM} examples: {small}")

    train_frac, val_frac, test_frac = fractions
    rows = np.arange(len(ds))
    rest, test = train_test_split(rows, test_size=test_frac, stratify=ds.labels,
                                  random_state=_sklearn_seed(key.at(index=0)))
    train, val = train_test_split(rest, test_size=val_frac / (train_frac + val_frac), stratify=ds.labels[rest],
                                  random_state=_sklearn_seed(key.at(index=1)))
    return (ds.subset(np.sort(train), "train"), ds.subset(np.sort(val), "validation"),
            ds.subset(np.sort(test), "test"))


def balance_by_group(ds: Dataset, attribute: str, key: StreamKey) -> Dataset:
    """Submuestrea sin reemplazo el grupo mayor al tamaño del menor."""
    if attribute not in ds.groups:
        raise ValueError(f"Protected attribute '{attribute}' not present in dataset ({sorted(ds.groups)}).")
    values = ds.groups[attribute]
    groups = np.unique(values)
    if len(groups) != 2:
        raise ValueError(f"Attribute '{attribute}' must have two non-empty groups, found {groups.tolist()}.")
    members = {int(g): np.flatnonzero(values == g) for g in groups}
    target = min(len(m) for m in members.values())
    rng = generator(key)
    keep = []
    for g in sorted(members):
        idx = members[g]
        keep.append(idx if len(idx) == target else rng.choice(idx, size=target, replace=False))
    rows = np.sort(np.concatenate(keep))
    return ds.subset(rows, f"balanced_by_{attribute}")


def normalize_splits(train: Dataset, validation: Dataset, test: Optional[Dataset],
                     columns: Sequence) -> Tuple[DataSplits, Dict[str, list]]:
    """
    Estandariza las columnas indicadas (índices o nombres) con media y desviación de
    train solamente; validation y test se transforman con esas mismas estadísticas.
    """
    index = [c if isinstance(c, (int, np.integer)) else train.feature_names.index(c) for c in columns]
    out = []
    scaler = StandardScaler()
    if index:
        scaler.fit(train.features[:, index])
    for ds in (train, validation, test):
        if ds is None:
            out.append(None)
            continue
        features = ds.features.copy()
        if index and len(ds):
            features[:, index] = scaler.transform(features[:, index])
        out.append(Dataset(features, ds.labels, ds.groups, ds.feature_names, ds.provenance))
    stats = {"columns": [train.feature_names[i] for i in index],
             "mean": scaler.mean_.tolist() if index else [], "scale": scaler.scale_.tolist() if index else []}
    return DataSplits(out[0], out[1], out[2]), stats
