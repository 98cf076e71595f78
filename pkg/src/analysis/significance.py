# src/analysis/significance.py
"""
Prueba de rangos con signo de Wilcoxon (exacta para n <= 25, también con empates) y
corrección de Bonferroni para comparar métodos sobre brechas pareadas.
"""
import itertools
import math
from typing import Any, Dict, Hashable, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.stats import norm, rankdata

from src.common.exceptions import DegeneratePairs, UnpairedData
from src.common.utils import logger

EXACT_MAX_N = 25


class PairedSample(NamedTuple):
    key: Tuple[Hashable, ...]   # (seed, dataset, attribute)
    value_a: float
    value_b: float


class WilcoxonResult(NamedTuple):
    statistic: float
    p_value: float
    n: int
    exact: bool


def _exact_p(ranks: np.ndarray, w: float) -> float:
    """
    Distribución nula exacta de T+ por programación dinámica sobre rangos duplicados
    (los rangos medios x2 son enteros). p = P(min(T, S-T) <= W).
    """
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    t = np.arange(total + 1)
    w2 = int(round(2 * w))
    extreme = np.minimum(t, total - t) <= w2
    return min(1.0, float(counts[extreme].sum() / 2.0 ** len(doubled)))


def _normal_p(ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (abs(w - mean) - 0.5) / math.sqrt(var)
    return min(1.0, float(2.0 * norm.sf(max(z, 0.0))))


def wilcoxon_signed_rank(pairs: Sequence[PairedSample]) -> WilcoxonResult:
    """
    Diferencias a - b; las diferencias cero se descartan y los empates reciben rango medio.
    W = min(W+, W-), p a dos colas.
    """
    diffs = np.array([p.value_a - p.value_b for p in pairs], dtype=np.float64)
    diffs = diffs[diffs != 0]
    if len(diffs) == 0:
        raise DegeneratePairs("All paired differences are zero.")
    ranks = rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w = min(w_plus, w_minus)
    if len(diffs) <= EXACT_MAX_N:
        return WilcoxonResult(w, _exact_p(ranks, w), len(diffs), True)
    return WilcoxonResult(w, _normal_p(ranks, w), len(diffs), False)


def bonferroni(p: float, m: int) -> float:
    if not (0.0 <= p <= 1.0):
        raise ValueError("p-value must lie in [0, 1].")
    if m < 1:
        raise ValueError("Number of comparisons must be >= 1.")
    return min(1.0, p * m)


def pair_samples(gaps_a: Mapping[Tuple, float], gaps_b: Mapping[Tuple, float]) -> List[PairedSample]:
    return [PairedSample(key, gaps_a[key], gaps_b[key]) for key in sorted(gaps_a, key=str)]


def check_coverage(results: Mapping[str, Mapping[Tuple, float]]) -> None:
    """Todos los métodos deben cubrir las mismas claves (semilla, dataset, atributo)."""
    all_keys = set().union(*(set(v) for v in results.values()))
    missing = []
    for method in sorted(results):
        for key in sorted(all_keys - set(results[method]), key=str):
            missing.append((method, key))
    if missing:
        listing = ", ".join(f"{m}:{k}" for m, k in missing[:20])
        raise UnpairedData(f"Unmatched coverage for {len(missing)} (method, key) entries: {listing}",
                           missing_keys=missing)


def compare_methods(results: Mapping[str, Mapping[Tuple, float]], alpha: float = 0.05) -> List[Dict[str, Any]]:
    """
    Compara cada par de métodos con Wilcoxon sobre sus brechas pareadas y corrige con
    Bonferroni por el número de pares. `results` es método -> {(seed, dataset, atributo): brecha}.
    """
    if len(results) < 2:
        raise ValueError("compare_methods needs at least two methods.")
    check_coverage(results)
    method_pairs = list(itertools.combinations(sorted(results), 2))
    m = len(method_pairs)

    rows = []
    for method_a, method_b in method_pairs:
        pairs = pair_samples(results[method_a], results[method_b])
        row: Dict[str, Any] = {"method_a": method_a, "method_b": method_b, "pairs": len(pairs), "comparisons": m,
                               "mean_gap_a": float(np.mean([p.value_a for p in pairs])),
                               "mean_gap_b": float(np.mean([p.value_b for p in pairs]))}
        try:
            res = wilcoxon_signed_rank(pairs)
        except DegeneratePairs:
            logger.warning(f"{method_a} y {method_b} tienen brechas idénticas: sin diferencia.")
            row.update({"n": 0, "statistic": 0.0, "p_value": 1.0, "p_corrected": 1.0, "exact": True,
                        "verdict": "no difference"})
            rows.append(row)
            continue
        corrected = bonferroni(res.p_value, m)
        row.update({"n": res.n, "statistic": res.statistic, "p_value": res.p_value, "p_corrected": corrected,
                    "exact": res.exact, "verdict": "significant" if corrected < alpha else "not significant"})
        rows.append(row)
    return rows


def gaps_by_method(records) -> Dict[str, Dict[Tuple, float]]:
    """Convierte un DataFrame largo (method, dataset, seed, attribute, gap) en el mapa de compare_methods."""
    out: Dict[str, Dict[Tuple, float]] = {}
    for rec in records.itertuples(index=False):
        out.setdefault(rec.method, {})[(str(rec.seed), rec.dataset, rec.attribute)] = float(rec.gap)
    return out
