# src/analysis/fairness.py
"""
Métricas de equidad por subgrupo: pérdida total por grupo, brecha de pérdida entre los
dos grupos de un atributo, disparidad promedio sobre atributos y porcentaje de
reducción frente a un método de referencia.
"""
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from src.common.exceptions import InvalidBaseline, NoAttributes, NonBinaryAttribute
from src.model.losses import LossSpec, loss_and_dlogits, predict_labels
from src.model.metrics import classification_scores
from src.model.mlp import ModelParams, MlpSpec, forward_batch

GAP_COLUMNS = ["method", "dataset", "seed", "attribute", "gap"]


class SubgroupMetrics(NamedTuple):
    sum_loss: float
    count: int
    accuracy: float
    f1: float


class SubgroupReport:
    """Métricas por (atributo, grupo) de un split evaluado con una semilla."""
    SCHEMA = "fairclip.subgroups/1"

    def __init__(self, entries: Dict[str, Dict[int, SubgroupMetrics]], split: str = "test", seed: int = 0,
                 reduction: str = "sum"):
        self.entries = entries
        self.split = split
        self.seed = seed
        self.reduction = reduction

    @property
    def attributes(self) -> List[str]:
        return sorted(self.entries)

    def losses(self, attribute: str) -> Dict[int, float]:
        return {group: m.sum_loss for group, m in self.entries.get(attribute, {}).items()}

    def mean_reduction(self) -> 'SubgroupReport':
        """Vista con pérdida promedio por ejemplo (pérdida / conteo) en lugar de suma."""
        entries = {
            attribute: {g: m._replace(sum_loss=m.sum_loss / m.count if m.count else 0.0) for g, m in groups.items()}
            for attribute, groups in self.entries.items()
        }
        return SubgroupReport(entries, self.split, self.seed, reduction="mean")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "split": self.split,
            "seed": self.seed,
            "reduction": self.reduction,
            "entries": {
                attribute: {str(g): m._asdict() for g, m in sorted(groups.items())}
                for attribute, groups in sorted(self.entries.items())
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SubgroupReport':
        entries = {
            attribute: {int(g): SubgroupMetrics(**m) for g, m in groups.items()}
            for attribute, groups in data["entries"].items()
        }
        return cls(entries, data.get("split", "test"), data.get("seed", 0), data.get("reduction", "sum"))

    def __repr__(self) -> str:
        return f"SubgroupReport(split='{self.split}', seed={self.seed}, attributes={self.attributes})"


def build_subgroup_report(params: ModelParams, spec: MlpSpec, loss: LossSpec, split,
                          attributes: Optional[Sequence[str]] = None, seed: int = 0,
                          split_name: str = "test") -> SubgroupReport:
    """Evalúa cada rebanada (atributo, grupo) del split en modo eval."""
    logits = forward_batch(params, spec, split.features, mode="eval")
    losses, _ = loss_and_dlogits(loss, logits, split.labels)
    predictions = predict_labels(loss, logits)
    num_classes = max(2, loss.num_outputs)

    entries: Dict[str, Dict[int, SubgroupMetrics]] = {}
    for attribute in (attributes if attributes is not None else sorted(split.groups)):
        values = split.groups[attribute]
        entries[attribute] = {}
        for group in np.unique(values):
            mask = values == group
            acc, f1 = classification_scores(split.labels[mask], predictions[mask], num_classes)
            entries[attribute][int(group)] = SubgroupMetrics(float(np.sum(losses[mask])), int(mask.sum()), acc, f1)
    return SubgroupReport(entries, split_name, seed)


def loss_gap(report: SubgroupReport, attribute: str) -> float:
    """|L_A - L_B| entre los dos grupos del atributo."""
    losses = report.losses(attribute)
    if len(losses) != 2:
        raise NonBinaryAttribute(f"Attribute '{attribute}' has {len(losses)} groups; loss_gap needs exactly 2.")
    a, b = losses.values()
    return abs(a - b)


def average_disparity(gaps: Mapping[str, float]) -> float:
    if not gaps:
        raise NoAttributes("average_disparity needs at least one attribute gap.")
    return float(np.mean(list(gaps.values())))


def reduction_pct(baseline: float, ours: float) -> float:
    """(baseline - ours)/baseline × 100; negativo cuando empeora."""
    if not (baseline > 0):
        raise InvalidBaseline(f"Baseline disparity must be > 0, got {baseline}.")
    return (baseline - ours) / baseline * 100.0


class DisparityReport:
    """Brechas por atributo y su promedio para un (método, dataset, semilla)."""
    SCHEMA = "fairclip.disparity/1"

    def __init__(self, method: str, dataset: str, seed: Any, gaps: Dict[str, float]):
        if any(g < 0 for g in gaps.values()):
            raise ValueError("Loss gaps must be >= 0.")
        self.method = method
        self.dataset = dataset
        self.seed = seed
        self.gaps = dict(gaps)

    @property
    def average(self) -> float:
        return average_disparity(self.gaps)

    @classmethod
    def from_report(cls, report: SubgroupReport, method: str, dataset: str,
                    attributes: Optional[Iterable[str]] = None) -> 'DisparityReport':
        attributes = list(attributes) if attributes is not None else report.attributes
        return cls(method, dataset, report.seed, {a: loss_gap(report, a) for a in attributes})

    def records(self) -> List[Dict[str, Any]]:
        """Formato largo: una fila por atributo (columnas GAP_COLUMNS)."""
        return [{"method": self.method, "dataset": self.dataset, "seed": self.seed, "attribute": a, "gap": g}
                for a, g in sorted(self.gaps.items())]

    def to_dict(self) -> Dict[str, Any]:
        return {"schema": self.SCHEMA, "method": self.method, "dataset": self.dataset, "seed": self.seed,
                "gaps": self.gaps, "average_disparity": self.average}

    def __repr__(self) -> str:
        return f"DisparityReport(method='{self.method}', dataset='{self.dataset}', seed={self.seed})"


def read_gap_records(path: str) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"seed": str})
    missing = [c for c in GAP_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"Gap file {path} is missing columns {missing}.")
    return frame[GAP_COLUMNS]


def disparity_table(records: pd.DataFrame, reference: str = "softadaclip",
                    baselines: Optional[Sequence[str]] = None):
    """
    A partir de brechas en formato largo (method, dataset, seed, attribute, gap):
    promedia cada atributo sobre semillas y luego sobre atributos, y calcula la reducción
    del método de referencia frente a cada baseline por dataset.

    Retorna (disparidades por (dataset, método), tabla de reducciones).
    """
    if records.empty:
        raise NoAttributes("No gap records to summarise.")
    per_attribute = records.groupby(["dataset", "method", "attribute"], sort=True)["gap"].mean().reset_index()
    disparity = (per_attribute.groupby(["dataset", "method"], sort=True)["gap"]
                 .agg(average_disparity="mean", attributes="count").reset_index())

    methods = sorted(records["method"].unique())
    if baselines is None:
        baselines = [m for m in methods if m != reference]

    rows = []
    for dataset, group in disparity.groupby("dataset", sort=True):
        averages = dict(zip(group["method"], group["average_disparity"]))
        if reference not in averages:
            continue
        row: Dict[str, Any] = {"dataset": dataset, "reference": reference,
                               "reference_disparity": averages[reference]}
        for baseline in baselines:
            row[f"reduction_vs_{baseline}"] = (reduction_pct(averages[baseline], averages[reference])
                                               if baseline in averages else np.nan)
        rows.append(row)
    return disparity, pd.DataFrame(rows)
