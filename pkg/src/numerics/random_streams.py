# src/numerics/random_streams.py
import hashlib
from dataclasses import dataclass, replace
from typing import Any, Dict

import numpy as np

from src.common.exceptions import InvalidStdDev


@dataclass(frozen=True)
class StreamKey:
    """
    Clave de un flujo aleatorio: (seed, domain, step, index).

    Cada tupla distinta da un flujo independiente y la misma tupla da siempre la misma
    secuencia, sin importar cuántos hilos estén generando al mismo tiempo. Por eso el
    trabajo por muestra puede repartirse entre hilos sin cambiar los resultados.
    """
    seed: int
    domain: str
    step: int = 0
    index: int = 0

    def __post_init__(self):
        if not isinstance(self.domain, str) or not self.domain:
            raise ValueError("StreamKey domain must be a non-empty string.")
        if not (-(2**63) <= int(self.seed) < 2**64):
            raise ValueError("StreamKey seed must fit in 64 bits.")

    def at(self, step: int = None, index: int = None) -> 'StreamKey':
        """Retorna la misma clave con otro paso y/o índice."""
        changes = {}
        if step is not None:
            changes["step"] = int(step)
        if index is not None:
            changes["index"] = int(index)
        return replace(self, **changes)

    def for_domain(self, domain: str) -> 'StreamKey':
        return replace(self, domain=domain)

    def digest(self) -> int:
        """Clave de 128 bits para Philox, derivada con SHA-256 de la tupla completa."""
        material = f"{int(self.seed)}|{self.domain}|{int(self.step)}|{int(self.index)}".encode('utf-8')
        return int.from_bytes(hashlib.sha256(material).digest()[:16], 'little')

    def to_dict(self) -> Dict[str, Any]:
        return {"seed": int(self.seed), "domain": self.domain, "step": int(self.step), "index": int(self.index)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StreamKey':
        return cls(int(data["seed"]), data["domain"], int(data.get("step", 0)), int(data.get("index", 0)))


def generator(key: StreamKey) -> np.random.Generator:
    """
    Generador basado en contador (Philox) con la clave derivada de `key`.
    El contador arranca siempre en cero, así el flujo depende solo de la clave.
    """
    return np.random.Generator(np.random.Philox(key=key.digest()))


def gaussian(key: StreamKey, count: int, stddev: float) -> np.ndarray:
    """
    `count` muestras iid de N(0, stddev²) en float64.

    La transformación normal es la de numpy (`standard_normal`, ziggurat) sobre el
    flujo Philox de la clave; es fija, así que la secuencia es reproducible.
    """
    if stddev < 0 or not np.isfinite(stddev):
        raise InvalidStdDev(f"Standard deviation must be finite and >= 0, got {stddev}.")
    if count < 0:
        raise ValueError("count must be >= 0.")
    if stddev == 0:
        return np.zeros(count, dtype=np.float64)
    return generator(key).standard_normal(count, dtype=np.float64) * float(stddev)


def uniform(key: StreamKey, count: int) -> np.ndarray:
    """`count` uniformes en [0, 1) del flujo de `key`."""
    return generator(key).random(count, dtype=np.float64)
