# src/engine/grad_stats.py
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from src.engine.trainer import StepTrace

MISSING_CELL = "--"


class ClipStat(NamedTuple):
    before: float
    after: float
    diff: float
    steps: int


def subgroup_clip_stats(traces: Sequence[StepTrace],
                        subgroups: Optional[Iterable[str]] = None) -> Dict[str, Optional[ClipStat]]:
    """
    Promedio sobre pasos de la norma del gradiente acumulado de cada subgrupo antes y
    después del recorte. Solo cuentan los pasos en que el subgrupo aparece en el lote;
    un subgrupo que nunca aparece queda como None.
    """
    if not traces:
        raise ValueError("subgroup_clip_stats needs at least one StepTrace.")
    names: List[str] = sorted({name for tr in traces for name in tr.group_pre_norm})
    if subgroups is not None:
        names = list(subgroups)

    stats: Dict[str, Optional[ClipStat]] = {}
    for name in names:
        pre = [tr.group_pre_norm[name] for tr in traces if name in tr.group_pre_norm]
        post = [tr.group_post_norm[name] for tr in traces if name in tr.group_post_norm]
        if not pre:
            stats[name] = None
            continue
        before, after = float(np.mean(pre)), float(np.mean(post))
        stats[name] = ClipStat(before, after, before - after, len(pre))
    return stats


def format_clip_cell(before: Optional[float], after: Optional[float]) -> str:
    """Celda "Antes→Después (Diferencia)" con 2 decimales; "--" si falta el subgrupo."""
    if before is None or after is None:
        return MISSING_CELL
    return f"{before:.2f}→{after:.2f} ({before - after:.2f})"


def format_stat(stat: Optional[ClipStat]) -> str:
    return MISSING_CELL if stat is None else format_clip_cell(stat.before, stat.after)
