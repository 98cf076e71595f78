# src/data/adult.py
"""
Carga y preprocesamiento del dataset Adult Income (censo UCI).

Pasos: lectura del CSV, eliminación de filas con el centinela de faltantes y de
duplicados, consolidación de categorías (mapa versionado en data/), descarte de
valores extremos de capital-gain (percentil 99.9), agrupación de horas semanales,
binarización de la edad en la mediana y codificación one-hot. La estandarización de
las columnas numéricas se hace después del split, solo con estadísticas de train.
"""
import os
import re
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from src.common.exceptions import DataFormatError, SchemaMismatch
from src.common.utils import logger
from src.data.dataset import ColumnSpec, Dataset, TabularSchema

CONSOLIDATION_MAP_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../data/adult_consolidation.tsv'))

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status", "occupation",
    "relationship", "race", "sex", "capital_gain", "capital_loss", "hours_per_week", "native_country", "income",
]

ADULT_SCHEMA = TabularSchema([
    ColumnSpec("age", "protected", attribute="age_group"),
    ColumnSpec("workclass", "categorical"),
    ColumnSpec("fnlwgt", "ignored"),
    ColumnSpec("education", "categorical"),
    ColumnSpec("education_num", "numeric"),
    ColumnSpec("marital_status", "categorical"),
    ColumnSpec("occupation", "categorical"),
    ColumnSpec("relationship", "categorical"),
    ColumnSpec("race", "categorical"),
    ColumnSpec("sex", "protected", attribute="sex"),
    ColumnSpec("capital_gain", "numeric"),
    ColumnSpec("capital_loss", "numeric"),
    ColumnSpec("hours_per_week", "categorical"),
    ColumnSpec("native_country", "categorical"),
    ColumnSpec("income", "label"),
], missing_sentinel="?")

# Bordes de horas semanales: <30, 30-40, 40-50, >50
HOURS_BINS = [-np.inf, 30, 40, 50, np.inf]
HOURS_LABELS = ["lt30", "30to40", "40to50", "gt50"]

CAPITAL_GAIN_QUANTILE = 0.999
EXPECTED_CLEAN_ROWS = 45222


def load_consolidation_map(path: str = CONSOLIDATION_MAP_PATH) -> Tuple[Dict[str, Dict[str, str]], str]:
    """Lee el mapa "[columna]" + "crudo<TAB>consolidado". Retorna (mapa por columna, versión)."""
    mapping: Dict[str, Dict[str, str]] = {}
    version = "unknown"
    column = None
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                found = re.search(r"version\s+(\S+)", line)
                if found and version == "unknown":
                    version = found.group(1)
                continue
            if line.startswith("[") and line.endswith("]"):
                column = line[1:-1].strip()
                mapping.setdefault(column, {})
                continue
            parts = line.split("\t")
            if column is None or len(parts) != 2:
                raise DataFormatError(f"Consolidation map {path}: malformed line {lineno}: '{line}'")
            mapping[column][parts[0].strip()] = parts[1].strip()
    return mapping, version


class AdultPreprocessor(BaseEstimator, TransformerMixin):
    """
    Limpieza de Adult al estilo de un transformer de scikit-learn.

    fit aprende el tope de capital-gain y la mediana de edad; transform descarta los
    valores extremos, consolida categorías y agrega `hours_group` y `age_group` sin
    borrar las columnas crudas, de modo que aplicar transform a su propia salida no
    cambia nada.
    """
    def __init__(self, consolidation: Optional[Dict[str, Dict[str, str]]] = None,
                 capital_gain_quantile: float = CAPITAL_GAIN_QUANTILE):
        self.consolidation = consolidation
        self.capital_gain_quantile = capital_gain_quantile

    def fit(self, X: pd.DataFrame, y=None) -> 'AdultPreprocessor':
        self.capital_gain_cap_ = float(np.quantile(X["capital_gain"].astype(float), self.capital_gain_quantile))
        self.age_median_ = float(np.median(X["age"].astype(float)))
        return self

    def transform(self, X: pd.DataFrame) -> pd.DataFrame:
        check_is_fitted(self, ["capital_gain_cap_", "age_median_"])
        df = X[X["capital_gain"].astype(float) <= self.capital_gain_cap_].copy()
        consolidation = self.consolidation
        if consolidation is None:
            consolidation, _ = load_consolidation_map()
        for column, mapping in consolidation.items():
            if column in df.columns:
                df[column] = df[column].replace(mapping)
        hours = df["hours_per_week"].astype(float)
        df["hours_group"] = pd.cut(hours, bins=HOURS_BINS, labels=HOURS_LABELS, right=False).astype(str)
        df["age_group"] = (df["age"].astype(float) >= self.age_median_).astype(np.int64)
        return df.reset_index(drop=True)


def _read_csv(path: str, has_header: bool) -> pd.DataFrame:
    try:
        if has_header:
            df = pd.read_csv(path, dtype=str, skipinitialspace=True, encoding='utf-8', comment=None)
        else:
            df = pd.read_csv(path, dtype=str, skipinitialspace=True, header=None, names=ADULT_COLUMNS,
                             encoding='utf-8')
    except pd.errors.ParserError as e:
        found = re.search(r"line (\d+)", str(e))
        row = int(found.group(1)) if found else None
        raise DataFormatError(f"Malformed CSV {path} at row {row}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataFormatError(f"CSV {path} is not valid UTF-8: {e}") from e
    df.columns = [c.strip().lower().replace("-", "_") for c in df.columns]
    return df


def clean_adult_frame(df: pd.DataFrame, schema: TabularSchema = ADULT_SCHEMA) -> Tuple[pd.DataFrame, Dict[str, int]]:
    """Quita espacios, normaliza la etiqueta y elimina filas con faltantes y duplicadas."""
    missing = [c for c in schema.names if c not in df.columns]
    if missing:
        raise SchemaMismatch(f"CSV is missing schema columns: {missing}")
    df = df[schema.names].copy()
    for column in df.columns:
        df[column] = df[column].astype(str).str.strip()
    # El archivo de test de Adult termina las etiquetas con '.'
    df[schema.label] = df[schema.label].str.rstrip(".")

    stages = {"read": len(df)}
    df = df[~df.isin([schema.missing_sentinel]).any(axis=1)]
    df = df[~df.isin(["nan", ""]).any(axis=1)]
    stages["after_missing"] = len(df)
    df = df.drop_duplicates()
    stages["after_duplicates"] = len(df)
    for column in ["age", "capital_gain", "capital_loss", "education_num", "hours_per_week"]:
        if column in df.columns:
            values = pd.to_numeric(df[column], errors='coerce')
            if values.isna().any():
                bad = int(values.index[values.isna()][0])
                raise DataFormatError(f"Non-numeric value in column '{column}' at row {bad + 1}.")
            df[column] = values
    return df.reset_index(drop=True), stages


def encode_adult(df: pd.DataFrame, schema: TabularSchema = ADULT_SCHEMA,
                 exclude_protected: bool = True) -> Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray], List[str]]:
    """One-hot de las categóricas (niveles ordenados) y columnas numéricas en su escala original."""
    numeric = schema.of_kind("numeric")
    categorical = ["hours_group" if c == "hours_per_week" else c for c in schema.of_kind("categorical")]
    dummies = pd.get_dummies(df[categorical].astype(str), prefix=categorical, dtype=np.float64)
    dummies = dummies[sorted(dummies.columns)]
    features = pd.concat([df[numeric].astype(np.float64), dummies], axis=1)

    groups = {
        "sex": (df["sex"] == "Female").astype(np.int64).to_numpy(),
        "age_group": df["age_group"].astype(np.int64).to_numpy(),
    }
    if not exclude_protected:
        features["sex"] = groups["sex"].astype(np.float64)
        features["age_group"] = groups["age_group"].astype(np.float64)
    labels = (df[schema.label] == ">50K").astype(np.int64).to_numpy()
    return features.to_numpy(dtype=np.float64), labels, groups, list(features.columns)


def load_adult(path: str, schema: TabularSchema = ADULT_SCHEMA, has_header: bool = True,
               exclude_protected: bool = True) -> Dataset:
    """
    Dataset Adult listo para dividir. Los atributos protegidos (sex: 1 = Female,
    age_group: 1 = edad >= mediana) quedan fuera de las features salvo que se pida lo contrario.
    """
    raw = _read_csv(path, has_header)
    df, stages = clean_adult_frame(raw, schema)
    if stages["after_missing"] != EXPECTED_CLEAN_ROWS:
        logger.info(f"Adult: {stages['after_missing']} filas tras quitar faltantes "
                    f"(el archivo canónico combinado da {EXPECTED_CLEAN_ROWS}).")

    consolidation, version = load_consolidation_map()
    pre = AdultPreprocessor(consolidation).fit(df)
    df = pre.transform(df)
    stages["after_outliers"] = len(df)

    features, labels, groups, names = encode_adult(df, schema, exclude_protected)
    provenance: Dict[str, Any] = {
        "source": os.path.abspath(path),
        "preprocessing_version": f"adult/{version}",
        "consolidation_map": "reconstruction",
        "stages": stages,
        "capital_gain_cap": pre.capital_gain_cap_,
        "age_median": pre.age_median_,
        "numeric_columns": schema.of_kind("numeric"),
        "protected_in_features": not exclude_protected,
    }
    logger.info(f"Adult cargado: {len(labels)} filas, {features.shape[1]} features, etapas={stages}")
    return Dataset(features, labels, groups, names, provenance)
