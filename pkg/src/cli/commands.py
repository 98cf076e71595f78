# src/cli/commands.py
"""
Implementación de los subcomandos calibrate, train, sweep, analyze y gradstats.

Cada comando escribe sus archivos en un directorio de salida (de forma atómica) y
termina con un manifest.json que lista todo lo que produjo. Los CSV usan 6 cifras
significativas y los JSONL llevan un campo "schema" por registro.
"""
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analysis.fairness import (GAP_COLUMNS, DisparityReport, SubgroupReport, build_subgroup_report,
                                   disparity_table, read_gap_records)
from src.analysis.significance import compare_methods, gaps_by_method
from src.cli.experiment_config import ExperimentConfig, dump_experiment, to_train_config
from src.common.exceptions import ConfigError, DivergedStep, MissingTraces, NonFiniteLoss
from src.common.utils import (format_sig, logger, read_json, read_jsonl, write_bytes_atomic, write_json,
                              write_jsonl, write_text_atomic)
from src.data.adult import load_adult
from src.data.cache import load_dataset
from src.data.dataset import DataSplits, Dataset
from src.data.splits import balance_by_group, normalize_splits, stratified_split
from src.data.synthetic import SyntheticSpec, synth_generate, synthetic_preset
from src.engine.grad_stats import MISSING_CELL, format_stat, subgroup_clip_stats
from src.engine.trainer import StepTrace, TrainResult, resolve_sigma, train
from src.model.losses import LossSpec
from src.model.mlp import MlpSpec
from src.model.presets import preset
from src.numerics.random_streams import StreamKey
from src.privacy.rdp_accountant import AccountantState, MechanismEvent, compose, epsilon_curve
from config.setting import DEFAULTS_NOTE

TOOL_VERSION = "fairclip-dp 0.1.0"


class RunManifest:
    """
    Índice de una corrida o barrido: configuración, procedencia de los datos, semillas,
    archivos producidos (rutas relativas al directorio de salida) y tiempos.
    """
    SCHEMA = "fairclip.manifest/1"

    def __init__(self, command: str, config: Dict[str, Any], provenance: Dict[str, Any], seeds: List[int],
                 outputs: Optional[Dict[str, str]] = None, timings: Optional[Dict[str, float]] = None,
                 method: Optional[str] = None, dataset: Optional[str] = None,
                 tool_version: str = TOOL_VERSION, defaults_note: str = DEFAULTS_NOTE):
        self.command = command
        self.config = config
        self.provenance = provenance
        self.seeds = list(seeds)
        self.outputs = dict(outputs or {})
        self.timings = dict(timings or {})
        self.method = method
        self.dataset = dataset
        self.tool_version = tool_version
        self.defaults_note = defaults_note

    def missing_outputs(self, root: str) -> List[str]:
        return [name for name, rel in self.outputs.items() if not os.path.exists(os.path.join(root, rel))]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "command": self.command,
            "method": self.method,
            "dataset": self.dataset,
            "config": self.config,
            "provenance": self.provenance,
            "seeds": self.seeds,
            "outputs": self.outputs,
            "timings": self.timings,
            "tool_version": self.tool_version,
            "defaults_note": self.defaults_note,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        return cls(data["command"], data.get("config", {}), data.get("provenance", {}), data.get("seeds", []),
                   data.get("outputs"), data.get("timings"), data.get("method"), data.get("dataset"),
                   data.get("tool_version", TOOL_VERSION), data.get("defaults_note", DEFAULTS_NOTE))

    def write(self, root: str) -> str:
        missing = self.missing_outputs(root)
        if missing:
            raise RuntimeError(f"Manifest references outputs that were not written: {missing}")
        path = os.path.join(root, "manifest.json")
        write_json(path, self.to_dict())
        return path

    def __repr__(self) -> str:
        return f"RunManifest(command='{self.command}', seeds={self.seeds}, outputs={sorted(self.outputs)})"


# --- Datos y modelo ---

def build_dataset(exp: ExperimentConfig) -> Dataset:
    data = exp.data
    if data.source == "synthetic":
        syn = data.synthetic
        overrides = {k: v for k, v in syn.model_dump().items() if k != "preset" and v is not None}
        spec = synthetic_preset(syn.preset, **overrides) if syn.preset else SyntheticSpec(**overrides)
        ds = synth_generate(spec)
    elif data.source == "adult":
        if not data.path:
            raise ConfigError("data.path is required for the adult source.")
        ds = load_adult(data.path, has_header=data.has_header, exclude_protected=data.exclude_protected)
    else:
        if not data.path:
            raise ConfigError("data.path is required for the cache source.")
        ds = load_dataset(data.path)
    if data.balance_attribute:
        ds = balance_by_group(ds, data.balance_attribute, StreamKey(data.split_seed, "balance"))
    return ds


def build_splits(exp: ExperimentConfig) -> Tuple[DataSplits, Dict[str, Any]]:
    """Dataset -> split estratificado -> estandarización de las columnas numéricas con estadísticas de train."""
    ds = build_dataset(exp)
    train_set, validation, test = stratified_split(ds, exp.data.fractions, StreamKey(exp.data.split_seed, "split"))
    splits, stats = normalize_splits(train_set, validation, test, ds.provenance.get("numeric_columns", []))
    provenance = dict(ds.provenance)
    provenance["normalization"] = stats
    provenance["split_sizes"] = {name: len(part) for name, part in splits.items()}
    logger.info(f"Datos '{exp.data.label}': {splits}")
    return splits, provenance


def build_model(exp: ExperimentConfig, input_dim: int) -> Tuple[MlpSpec, LossSpec]:
    return preset(exp.model.preset, input_dim, exp.model.groups, exp.model.hidden)


def parse_orders(text: Optional[str]) -> Optional[List[int]]:
    """"2,4,8" -> [2, 4, 8]."""
    if text is None:
        return None
    try:
        orders = sorted({int(tok) for tok in text.split(",") if tok.strip()})
    except ValueError as e:
        raise ConfigError(f"--orders must be a comma-separated list of integers, got '{text}'.") from e
    if not orders or orders[0] < 2:
        raise ConfigError("--orders needs at least one integer order >= 2.")
    return orders


def _csv_text(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    frame = pd.DataFrame([{c: format_sig(row.get(c)) for c in columns} for row in rows], columns=list(columns))
    return frame.to_csv(index=False, lineterminator="\n")


def write_csv(path: str, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> None:
    write_text_atomic(path, _csv_text(rows, columns))


def _sem(values: Sequence[float]) -> Optional[float]:
    """Error estándar de la media; None con una sola observación."""
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


# --- calibrate ---

def cmd_calibrate(exp: ExperimentConfig, out_dir: str, orders: Optional[List[int]] = None) -> Tuple[float, list]:
    """Calibra σ para el objetivo (ε, δ) y escribe la config derivada y la curva ε por orden."""
    if exp.privacy is None or exp.privacy.epsilon is None:
        raise ConfigError("calibrate needs a [privacy] section with a target epsilon.")
    started = time.perf_counter()
    splits, provenance = build_splits(exp)
    N = len(splits.train)
    config = to_train_config(exp, orders=orders).model_copy(
        update={"noise_multiplier": None, "target_epsilon": exp.privacy.epsilon})
    sigma = resolve_sigma(config, N)

    q, steps = config.resolve_q(N), config.total_steps(N)
    state = compose(AccountantState(config.orders), MechanismEvent(q, sigma, steps))
    if config.accounts_fraction():
        state = compose(state, MechanismEvent(q, config.resolve_sigma_b(N), steps, label="unclipped-count"))
    curve = epsilon_curve(state, config.target_delta)

    derived = exp.model_copy(deep=True)
    derived.privacy.noise_multiplier = sigma
    if orders is not None:
        derived.privacy.orders = orders
    write_text_atomic(os.path.join(out_dir, "calibrated.yaml"), dump_experiment(derived))
    write_csv(os.path.join(out_dir, "epsilon_curve.csv"),
              [{"order": a, "epsilon": e} for a, e in curve], ["order", "epsilon"])

    manifest = RunManifest("calibrate", exp.model_dump(mode="json"), provenance, [exp.train.seed],
                           {"calibrated_config": "calibrated.yaml", "epsilon_curve": "epsilon_curve.csv"},
                           {"wall_seconds": time.perf_counter() - started},
                           method=exp.clip.strategy, dataset=exp.data.label)
    manifest.write(out_dir)

    best = min(curve, key=lambda item: item[1])
    print(f"sigma = {format_sig(sigma)}  (q = {format_sig(q)}, T = {steps}, delta = {config.target_delta})")
    print(f"epsilon = {format_sig(best[1])} at order {best[0]}")
    for order, eps in curve:
        print(f"  alpha = {order:>4}  epsilon = {format_sig(eps)}")
    logger.info(f"Calibración escrita en {out_dir}")
    return sigma, curve


# --- train ---

def _best_record(result: TrainResult) -> Dict[str, Any]:
    return result.history[result.best_epoch - 1] if result.best_epoch >= 1 else result.history[-1]


def run_single(exp: ExperimentConfig, splits: DataSplits, provenance: Dict[str, Any], out_dir: str,
               seed: Optional[int] = None, threads: int = 1) -> Tuple[TrainResult, DisparityReport]:
    """Entrena una semilla y escribe los archivos de la corrida en `out_dir`."""
    started = time.perf_counter()
    config = to_train_config(exp, seed=seed, threads=threads)
    spec, loss = build_model(exp, splits.train.dim)
    result = train(config, splits, spec, loss)

    split = dict(splits.items()).get(exp.analysis.split)
    if split is None:
        raise ConfigError(f"Analysis split '{exp.analysis.split}' is not available.")
    missing = [a for a in exp.analysis.attributes if a not in split.groups]
    if missing:
        raise ConfigError(f"Protected attributes {missing} not present in the dataset ({sorted(split.groups)}).")
    report = build_subgroup_report(result.params, spec, loss, split, exp.analysis.attributes, config.seed,
                                   exp.analysis.split)
    gap_report = report.mean_reduction() if exp.analysis.mean_reduction else report
    disparity = DisparityReport.from_report(gap_report, config.strategy, exp.data.label)

    write_jsonl(os.path.join(out_dir, "epochs.jsonl"), result.history)
    write_jsonl(os.path.join(out_dir, "steps.jsonl"), [tr.to_dict() for tr in result.traces])
    write_json(os.path.join(out_dir, "subgroups.json"), report.to_dict())
    record = result.to_dict()
    record["best_metrics"] = _best_record(result)
    record["disparity"] = disparity.to_dict()
    write_json(os.path.join(out_dir, "result.json"), record)
    write_csv(os.path.join(out_dir, "gaps.csv"), disparity.records(), GAP_COLUMNS)
    buffer = io.BytesIO()
    np.save(buffer, result.params.theta)
    write_bytes_atomic(os.path.join(out_dir, "params.npy"), buffer.getvalue())

    outputs = {name: f"{name}.{ext}" for name, ext in
               (("epochs", "jsonl"), ("steps", "jsonl"), ("subgroups", "json"), ("result", "json"),
                ("gaps", "csv"), ("params", "npy"))}
    RunManifest("train", exp.model_dump(mode="json"), provenance, [config.seed], outputs,
                {"train_seconds": result.wall_seconds, "wall_seconds": time.perf_counter() - started},
                method=config.strategy, dataset=exp.data.label).write(out_dir)
    logger.info(f"Corrida semilla {config.seed} escrita en {out_dir}: brechas {disparity.gaps}")
    return result, disparity


def cmd_train(exp: ExperimentConfig, out_dir: str, threads: int = 1,
              seed: Optional[int] = None) -> Tuple[TrainResult, DisparityReport]:
    splits, provenance = build_splits(exp)
    return run_single(exp, splits, provenance, out_dir, seed, threads)


# --- sweep ---

def _summary_rows(results: Dict[int, Tuple[TrainResult, DisparityReport]], failed: int) -> List[Dict[str, Any]]:
    metrics: Dict[str, List[float]] = {}
    for seed in sorted(results):
        result, disparity = results[seed]
        best = _best_record(result)
        values = {
            "train_loss": best["train_loss"], "validation_loss": best["validation_loss"],
            "test_loss": best.get("test_loss"), "test_accuracy": best.get("test_accuracy"),
            "test_f1": best.get("test_f1"), "validation_f1": best["validation_f1"],
            "epsilon": result.epsilon, "final_clip_bound": result.final_clip_bound,
            "steps_executed": float(result.steps_executed), "best_epoch": float(result.best_epoch),
            "average_disparity": disparity.average,
        }
        values.update({f"gap_{a}": g for a, g in disparity.gaps.items()})
        for name, value in values.items():
            if value is not None:
                metrics.setdefault(name, []).append(float(value))
    return [{"metric": name, "mean": float(np.mean(vals)), "sem": _sem(vals), "n": len(vals), "failed": failed}
            for name, vals in metrics.items()]


def cmd_sweep(exp: ExperimentConfig, out_dir: str, seeds: int = 5, base_seed: Optional[int] = None,
              threads: int = 1) -> Dict[str, Any]:
    """
    Entrena `seeds` semillas consecutivas desde `base_seed` (por defecto train.seed).
    Con varios hilos las semillas corren en paralelo, cada una con un solo hilo; el
    resultado no cambia. Una corrida que diverge queda marcada como fallida.
    """
    if seeds < 1:
        raise ConfigError("--seeds must be >= 1.")
    started = time.perf_counter()
    base = exp.train.seed if base_seed is None else base_seed
    seed_list = [base + i for i in range(seeds)]
    splits, provenance = build_splits(exp)

    def run(seed: int, inner_threads: int):
        try:
            return run_single(exp, splits, provenance, os.path.join(out_dir, f"seed_{seed}"), seed, inner_threads)
        except (DivergedStep, NonFiniteLoss) as e:
            logger.error(f"Semilla {seed} falló: {e}")
            return None

    if threads > 1 and seeds > 1:
        with ThreadPoolExecutor(max_workers=min(threads, seeds)) as pool:
            outcomes = list(pool.map(lambda s: run(s, 1), seed_list))
    else:
        outcomes = [run(s, threads) for s in seed_list]

    results = {s: out for s, out in zip(seed_list, outcomes) if out is not None}
    failed_seeds = [s for s, out in zip(seed_list, outcomes) if out is None]
    if not results:
        raise DivergedStep(f"All {seeds} sweep runs diverged (seeds {seed_list}).")

    summary_rows = _summary_rows(results, len(failed_seeds))
    write_csv(os.path.join(out_dir, "summary.csv"), summary_rows, ["metric", "mean", "sem", "n", "failed"])

    gap_records = [rec for s in sorted(results) for rec in results[s][1].records()]
    write_csv(os.path.join(out_dir, "gaps.csv"), gap_records, GAP_COLUMNS)

    gap_rows = []
    for attribute in exp.analysis.attributes:
        vals = [results[s][1].gaps[attribute] for s in sorted(results)]
        gap_rows.append({"attribute": attribute, "mean_gap": float(np.mean(vals)), "sem": _sem(vals),
                         "n": len(vals)})
    averages = [results[s][1].average for s in sorted(results)]
    gap_rows.append({"attribute": "average", "mean_gap": float(np.mean(averages)), "sem": _sem(averages),
                     "n": len(averages)})
    write_csv(os.path.join(out_dir, "loss_gaps.csv"), gap_rows, ["attribute", "mean_gap", "sem", "n"])

    loss_rows = []
    for split_name, _ in splits.items():
        vals = [_best_record(results[s][0])[f"{split_name}_loss"] for s in sorted(results)]
        loss_rows.append({"split": split_name, "mean": float(np.mean(vals)), "sem": _sem(vals), "n": len(vals)})
    write_csv(os.path.join(out_dir, "overall_loss.csv"), loss_rows, ["split", "mean", "sem", "n"])

    outputs = {"summary": "summary.csv", "gaps": "gaps.csv", "loss_gaps": "loss_gaps.csv",
               "overall_loss": "overall_loss.csv"}
    outputs.update({f"run_{s}": f"seed_{s}/manifest.json" for s in sorted(results)})
    manifest = RunManifest("sweep", exp.model_dump(mode="json"), provenance, seed_list, outputs,
                           {"wall_seconds": time.perf_counter() - started},
                           method=exp.clip.strategy, dataset=exp.data.label)
    manifest.provenance["failed_seeds"] = failed_seeds
    manifest.write(out_dir)
    logger.info(f"Barrido de {seeds} semillas escrito en {out_dir} ({len(failed_seeds)} fallidas)")
    return {"summary": summary_rows, "failed_seeds": failed_seeds, "manifest": manifest}


# --- analyze ---

def _run_dirs(path: str) -> List[str]:
    """Directorio de una corrida, o las subcarpetas seed_* de un barrido."""
    if os.path.exists(os.path.join(path, "subgroups.json")) or os.path.exists(os.path.join(path, "steps.jsonl")):
        return [path]
    if not os.path.isdir(path):
        raise ConfigError(f"Result directory not found: {path}")
    found = sorted(os.path.join(path, d) for d in os.listdir(path)
                   if d.startswith("seed_") and os.path.isdir(os.path.join(path, d)))
    if not found:
        raise ConfigError(f"{path} holds neither a run nor seed_* run directories.")
    return found


def _method_label(path: str, manifest: RunManifest, taken: Dict[str, str]) -> str:
    """Nombre del método; si dos directorios distintos declaran el mismo, se agrega el nombre de la carpeta."""
    label = manifest.method or os.path.basename(os.path.normpath(path))
    owner = taken.setdefault(label, path)
    if owner != path:
        label = f"{label}:{os.path.basename(os.path.normpath(path))}"
        taken[label] = path
    return label


def collect_gap_records(result_dirs: Sequence[str], mean_reduction: bool = False) -> pd.DataFrame:
    """Brechas en formato largo a partir de los subgroups.json de corridas o barridos."""
    records: List[Dict[str, Any]] = []
    taken: Dict[str, str] = {}
    for path in result_dirs:
        runs = _run_dirs(path)
        root_manifest = os.path.join(path, "manifest.json")
        manifest = RunManifest.from_dict(read_json(root_manifest if os.path.exists(root_manifest)
                                                   else os.path.join(runs[0], "manifest.json")))
        method = _method_label(path, manifest, taken)
        for run in runs:
            report = SubgroupReport.from_dict(read_json(os.path.join(run, "subgroups.json")))
            if mean_reduction:
                report = report.mean_reduction()
            dataset = manifest.dataset or "dataset"
            disparity = DisparityReport.from_report(report, method, dataset)
            for rec in disparity.records():
                rec["seed"] = str(rec["seed"])
                records.append(rec)
    return pd.DataFrame(records, columns=GAP_COLUMNS)


def cmd_analyze(out_dir: str, result_dirs: Sequence[str] = (), gaps_path: Optional[str] = None,
                reference: str = "softadaclip", mean_reduction: bool = False,
                alpha: float = 0.05) -> Dict[str, Any]:
    """
    Disparidad promedio por método, tabla de reducciones del método de referencia y
    pruebas de Wilcoxon con Bonferroni entre todos los pares de métodos.
    """
    frames = []
    if result_dirs:
        frames.append(collect_gap_records(result_dirs, mean_reduction))
    if gaps_path:
        if mean_reduction:
            logger.warning("--mean-reduction no aplica a un archivo de brechas ya calculado.")
        frames.append(read_gap_records(gaps_path))
    if not frames:
        raise ConfigError("analyze needs result directories or --gaps FILE.")
    records = pd.concat(frames, ignore_index=True)
    records["seed"] = records["seed"].astype(str)
    methods = sorted(records["method"].unique())
    if len(methods) < 2:
        raise ConfigError(f"analyze needs at least two methods, found {methods}.")

    outputs: Dict[str, str] = {}
    disparity, reductions = disparity_table(records, reference)
    for method in methods:
        name = f"disparity_{method.replace(':', '_')}.csv"
        rows = disparity[disparity["method"] == method].to_dict("records")
        write_csv(os.path.join(out_dir, name), rows, ["dataset", "method", "average_disparity", "attributes"])
        outputs[f"disparity_{method}"] = name

    if reductions.empty:
        logger.warning(f"El método de referencia '{reference}' no aparece en los resultados; sin tabla de reducciones.")
        reduction_columns = ["dataset", "reference", "reference_disparity"]
    else:
        reduction_columns = list(reductions.columns)
    write_csv(os.path.join(out_dir, "reductions.csv"), reductions.to_dict("records"), reduction_columns)
    outputs["reductions"] = "reductions.csv"

    significance = compare_methods(gaps_by_method(records), alpha)
    write_csv(os.path.join(out_dir, "significance.csv"), significance,
              ["method_a", "method_b", "pairs", "comparisons", "mean_gap_a", "mean_gap_b", "n", "statistic",
               "p_value", "p_corrected", "exact", "verdict"])
    outputs["significance"] = "significance.csv"

    RunManifest("analyze", {"result_dirs": list(result_dirs), "gaps": gaps_path, "reference": reference,
                            "mean_reduction": mean_reduction, "alpha": alpha},
                {"methods": methods}, [], outputs).write(out_dir)
    for row in reductions.to_dict("records"):
        cells = ", ".join(f"{k}={format_sig(v)}" for k, v in row.items() if k.startswith("reduction_vs_"))
        print(f"{row['dataset']}: {cells}")
    return {"disparity": disparity, "reductions": reductions, "significance": significance}


# --- gradstats ---

def load_traces(path: str) -> List[StepTrace]:
    traces: List[StepTrace] = []
    for run in _run_dirs(path):
        steps = os.path.join(run, "steps.jsonl")
        if os.path.exists(steps):
            traces.extend(StepTrace.from_dict(rec) for rec in read_jsonl(steps))
    return traces


def cmd_gradstats(out_dir: str, result_dirs: Sequence[str]) -> pd.DataFrame:
    """Tabla subgrupo × método con "Antes→Después (Diferencia)" de la norma acumulada por subgrupo."""
    if not result_dirs:
        raise ConfigError("gradstats needs at least one result directory.")
    stats_by_method: Dict[str, Dict[str, Any]] = {}
    taken: Dict[str, str] = {}
    for path in result_dirs:
        try:
            traces = load_traces(path)
        except ConfigError as e:
            raise MissingTraces(str(e)) from e
        if not traces:
            raise MissingTraces(f"No step traces (steps.jsonl) under {path}.")
        manifest_path = os.path.join(path, "manifest.json")
        manifest = (RunManifest.from_dict(read_json(manifest_path)) if os.path.exists(manifest_path)
                    else RunManifest("train", {}, {}, []))
        stats_by_method[_method_label(path, manifest, taken)] = subgroup_clip_stats(traces)

    methods = list(stats_by_method)
    subgroups = sorted({name for stats in stats_by_method.values() for name in stats})
    table_rows, long_rows = [], []
    for name in subgroups:
        row = {"subgroup": name}
        for method in methods:
            stat = stats_by_method[method].get(name)
            row[method] = format_stat(stat) if stat is not None else MISSING_CELL
            if stat is not None:
                long_rows.append({"method": method, "subgroup": name, "before": stat.before, "after": stat.after,
                                  "diff": stat.diff, "steps": stat.steps})
        table_rows.append(row)
    table = pd.DataFrame(table_rows, columns=["subgroup", *methods])
    write_text_atomic(os.path.join(out_dir, "gradstats.csv"), table.to_csv(index=False, lineterminator="\n"))
    write_csv(os.path.join(out_dir, "gradstats_values.csv"), long_rows,
              ["method", "subgroup", "before", "after", "diff", "steps"])
    RunManifest("gradstats", {"result_dirs": list(result_dirs)}, {"methods": methods}, [],
                {"table": "gradstats.csv", "values": "gradstats_values.csv"}).write(out_dir)
    print(table.to_string(index=False))
    return table
