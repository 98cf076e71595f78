# src/benchmarking/fairness_experiment.py
"""
Experimentos de escritorio sobre equidad:

- strategies: compara la brecha de pérdida por subgrupo de las cuatro estrategias de
  recorte con las mismas semillas y los mismos splits (soft-fixed aísla el efecto del
  suavizado sin umbral adaptativo).
- threshold: barre el umbral inicial C0 de una estrategia (variante de normas bajas).
- adult: verifica el conteo de filas de Adult, el balanceo por sexo y el orden de las
  brechas de género entre estrategias.

Uso: python src/benchmarking/fairness_experiment.py strategies --config config/experiments/minority_hard_softadaclip.yaml
"""
import argparse
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

# Añadir la ruta raíz del proyecto para importaciones
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.analysis.fairness import DisparityReport, build_subgroup_report
from src.cli.commands import build_model, build_splits
from src.cli.experiment_config import ExperimentConfig, load_experiment, to_train_config
from src.common.utils import logger
from src.data.adult import EXPECTED_CLEAN_ROWS, load_adult
from src.data.dataset import DataSplits
from src.data.splits import balance_by_group
from src.engine.trainer import train
from src.numerics.random_streams import StreamKey

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    logger.warning("matplotlib no está instalado. No se generarán gráficos.")
    MATPLOTLIB_AVAILABLE = False

BENCHMARK_RESULTS_DIR = os.path.join(os.path.dirname(__file__), 'benchmark_results')

DEFAULT_SEEDS = 5
# soft-fixed es la ablación solo de suavizado (sin umbral adaptativo)
STRATEGIES = ["hard", "soft-fixed", "adaptive-hard", "softadaclip"]
THRESHOLDS = [0.01, 0.1]


def with_clip(exp: ExperimentConfig, **changes) -> ExperimentConfig:
    return exp.model_copy(update={"clip": exp.clip.model_copy(update=changes)})


def run_seed(exp: ExperimentConfig, splits: DataSplits, seed: int, threads: int = 1) -> DisparityReport:
    """Entrena una semilla y mide las brechas de pérdida en el split de análisis."""
    config = to_train_config(exp, seed=seed, threads=threads)
    spec, loss = build_model(exp, splits.train.dim)
    result = train(config, splits, spec, loss)
    split = dict(splits.items())[exp.analysis.split]
    report = build_subgroup_report(result.params, spec, loss, split, exp.analysis.attributes, seed,
                                   exp.analysis.split)
    if exp.analysis.mean_reduction:
        report = report.mean_reduction()
    return DisparityReport.from_report(report, config.strategy, exp.data.label)


def _seed_rows(exp: ExperimentConfig, splits: DataSplits, seeds: Sequence[int], threads: int,
               **labels) -> List[Dict]:
    rows = []
    for seed in seeds:
        disparity = run_seed(exp, splits, seed, threads)
        row = {**labels, "seed": seed, "average_disparity": disparity.average}
        row.update({f"gap_{a}": g for a, g in disparity.gaps.items()})
        rows.append(row)
    return rows


def compare_strategies(exp: ExperimentConfig, strategies: Sequence[str] = STRATEGIES,
                       seeds: Sequence[int] = range(DEFAULT_SEEDS), threads: int = 1,
                       splits: Optional[DataSplits] = None) -> pd.DataFrame:
    """Una fila por (estrategia, semilla); todas las estrategias ven los mismos splits."""
    if splits is None:
        splits, _ = build_splits(exp)
    rows = []
    for strategy in strategies:
        print(f"\n--- Estrategia {strategy} ---")
        rows.extend(_seed_rows(with_clip(exp, strategy=strategy), splits, seeds, threads, strategy=strategy))
    return pd.DataFrame(rows)


def threshold_sensitivity(exp: ExperimentConfig, bounds: Sequence[float] = THRESHOLDS,
                          seeds: Sequence[int] = range(DEFAULT_SEEDS), threads: int = 1) -> pd.DataFrame:
    """Una fila por (C0, semilla) con la estrategia del experimento."""
    splits, _ = build_splits(exp)
    rows = []
    for bound in bounds:
        print(f"\n--- C0 = {bound} ---")
        rows.extend(_seed_rows(with_clip(exp, clip_bound=bound), splits, seeds, threads, clip_bound=bound))
    return pd.DataFrame(rows)


def seeds_where_lower(frame: pd.DataFrame, ours: str, baseline: str, column: str = "average_disparity",
                      key: str = "strategy") -> int:
    """Cuántas semillas tienen a `ours` por debajo de `baseline` en la columna dada."""
    pivot = frame.pivot(index="seed", columns=key, values=column)
    return int((pivot[ours] < pivot[baseline]).sum())


def adult_pipeline_check(exp: ExperimentConfig, csv_path: str, seeds: Sequence[int] = range(DEFAULT_SEEDS),
                         strategies: Sequence[str] = STRATEGIES, threads: int = 1) -> Dict:
    """Conteos de limpieza y balanceo de Adult, y brechas de género por estrategia y semilla."""
    ds = load_adult(csv_path, has_header=exp.data.has_header, exclude_protected=exp.data.exclude_protected)
    balanced = balance_by_group(ds, "sex", StreamKey(exp.data.split_seed, "balance"))
    sizes = np.bincount(balanced.groups["sex"]).tolist()
    logger.info(f"Adult: etapas {ds.provenance['stages']}, grupos balanceados {sizes}")

    data = exp.data.model_copy(update={"source": "adult", "path": csv_path, "balance_attribute": "sex"})
    adult_exp = exp.model_copy(update={"data": data})
    gaps = compare_strategies(adult_exp, strategies, seeds, threads)
    return {
        "after_missing": ds.provenance["stages"]["after_missing"],
        "expected_rows": EXPECTED_CLEAN_ROWS,
        "balanced_sizes": sizes,
        "gaps": gaps,
    }


def plot_gaps(frame: pd.DataFrame, key: str, filename: str, title: str) -> Optional[str]:
    """Barras de la disparidad promedio (media ± SEM sobre semillas) por valor de `key`."""
    if not MATPLOTLIB_AVAILABLE:
        return None
    summary = frame.groupby(key)["average_disparity"].agg(["mean", "sem"])
    plt.figure(figsize=(8, 5))
    plt.bar([str(k) for k in summary.index], summary["mean"], yerr=summary["sem"].fillna(0.0), capsize=4)
    plt.title(title)
    plt.xlabel(key)
    plt.ylabel("Disparidad promedio (brecha de pérdida)")
    plt.grid(True, axis="y", linestyle='--', alpha=0.7)
    os.makedirs(BENCHMARK_RESULTS_DIR, exist_ok=True)
    path = os.path.join(BENCHMARK_RESULTS_DIR, filename)
    plt.savefig(path)
    plt.close()
    print(f"Gráfico guardado en: {path}")
    return path


def main(argv: Optional[List[str]] = None) -> None:
    parser = argparse.ArgumentParser(description="Experimentos de equidad a escala de escritorio")
    parser.add_argument("experiment", choices=["strategies", "threshold", "adult"])
    parser.add_argument("--config", required=True, help="Archivo YAML del experimento")
    parser.add_argument("--seeds", type=int, default=DEFAULT_SEEDS)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--csv", default=None, help="CSV público de Adult (experimento adult)")
    args = parser.parse_args(argv)

    exp = load_experiment(args.config)
    seeds = range(exp.train.seed, exp.train.seed + args.seeds)
    start_time = time.perf_counter()

    if args.experiment == "strategies":
        frame = compare_strategies(exp, STRATEGIES, seeds, args.threads)
        print("\nDisparidad promedio por estrategia:")
        print(frame.groupby("strategy")["average_disparity"].agg(["mean", "sem"]).to_string())
        print(f"softadaclip < hard en {seeds_where_lower(frame, 'softadaclip', 'hard')} de {args.seeds} semillas")
        smoothing_only = seeds_where_lower(frame, 'softadaclip', 'soft-fixed')
        print(f"softadaclip < soft-fixed en {smoothing_only} de {args.seeds} semillas")
        plot_gaps(frame, "strategy", "fairness_strategies.png", f"Brechas por estrategia ({exp.data.label})")
    elif args.experiment == "threshold":
        frame = threshold_sensitivity(exp, THRESHOLDS, seeds, args.threads)
        print("\nDisparidad promedio por C0:")
        print(frame.groupby("clip_bound")["average_disparity"].agg(["mean", "sem"]).to_string())
        plot_gaps(frame, "clip_bound", "fairness_threshold.png", f"Sensibilidad a C0 ({exp.clip.strategy})")
    else:
        if not args.csv:
            parser.error("the adult experiment needs --csv")
        check = adult_pipeline_check(exp, args.csv, seeds, STRATEGIES, args.threads)
        print(f"\nFilas tras quitar faltantes: {check['after_missing']} (esperado {check['expected_rows']})")
        print(f"Tamaños balanceados por sexo: {check['balanced_sizes']}")
        frame = check["gaps"]
        print(frame.pivot(index="seed", columns="strategy", values="gap_sex").to_string())
        plot_gaps(frame, "strategy", "fairness_adult.png", "Brechas en Adult balanceado")

    print(f"\nExperimento completado en {time.perf_counter() - start_time:.1f} s.")


if __name__ == '__main__':
    main()
