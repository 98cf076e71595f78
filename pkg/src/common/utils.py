# src/common/utils.py
import json
import logging
import os
import sys
import tempfile
from typing import Any, Dict, Iterable, List

import numpy as np

# Añadir la raíz del proyecto para poder importar config/ desde cualquier punto de entrada
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from config.setting import LOG_LEVEL

# Configuración básica de logging.
# Se configura una sola vez aquí; el resto de módulos solo importan `logger`.
logging.basicConfig(level=LOG_LEVEL, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger("fairclip")


def cosine_similarity(vec1_data: np.ndarray, vec2_data: np.ndarray) -> float:
    """
    Calcula la similitud coseno entre dos arrays de numpy.
    Retorna un valor entre -1 y 1. Se usa para comprobar que el recorte conserva la dirección.
    """
    if vec1_data.shape != vec2_data.shape:
        raise ValueError("Vectors must have the same dimension to compute cosine similarity.")
    norm_a = np.linalg.norm(vec1_data)
    norm_b = np.linalg.norm(vec2_data)

    if norm_a == 0.0 or norm_b == 0.0:
        # Si uno o ambos vectores son el vector cero, la similitud es indefinida.
        logger.warning("Uno o ambos vectores son cero en similitud coseno. Retornando 0.0.")
        return 0.0

    return float(np.dot(vec1_data, vec2_data) / (norm_a * norm_b))


def format_sig(value: Any) -> str:
    """Formatea un número con 6 cifras significativas (convención de todos los CSV)."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".6g")
    return str(value)


def write_text_atomic(path: str, text: str) -> None:
    """
    Escribe un archivo de forma atómica: primero a un temporal en el mismo directorio
    y luego `os.replace`, así nunca queda un archivo a medio escribir.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_bytes_atomic(path: str, payload: bytes) -> None:
    """Versión binaria de write_text_atomic (usada por la caché de datasets)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path: str, record: Dict[str, Any]) -> None:
    write_text_atomic(path, json.dumps(record, indent=2, sort_keys=True) + "\n")


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> None:
    """Un registro JSON por línea; cada registro ya trae su campo "schema"."""
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    write_text_atomic(path, "\n".join(lines) + ("\n" if lines else ""))


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def read_json(path: str) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


# Atajos de logging usados por los puntos de entrada
def log_info(message: str):
    logger.info(message)


def log_error(message: str):
    logger.error(message)
