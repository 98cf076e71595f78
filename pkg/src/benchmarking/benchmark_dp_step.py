# src/benchmarking/benchmark_dp_step.py
"""
Tiempo por paso DP (gradientes por muestra, recorte, ruido y actualización) para cada
estrategia de recorte, varios tamaños de lote y cantidades de hilos.
"""
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List

import numpy as np
import pandas as pd

# Añadir la ruta raíz del proyecto para importaciones
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.clip.adaptive import ClipState
from src.clip.clipping import STRATEGIES
from src.common.utils import logger
from src.data.synthetic import synth_generate, synthetic_preset
from src.engine.config import TrainConfig
from src.engine.optimizers import OptimizerState
from src.engine.trainer import dp_step
from src.model.mlp import init_params
from src.model.presets import preset
from src.numerics.random_streams import StreamKey
from src.privacy.rdp_accountant import RdpAccountant

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    MATPLOTLIB_AVAILABLE = True
except ImportError:
    logger.warning("matplotlib no está instalado. No se generarán gráficos.")
    MATPLOTLIB_AVAILABLE = False

# --- Configuración del Benchmark ---
BENCHMARK_RESULTS_DIR = os.path.join(os.path.dirname(__file__), 'benchmark_results')

BATCH_SIZES = [64, 256, 1024]
THREAD_COUNTS = [1, 4]
NUM_STEPS = 10
INPUT_DIM = 20
MODEL_PRESETS = ["income-simple", "income-complex"]


def run_benchmark(model_preset: str, batch_size: int, threads: int, num_steps: int = NUM_STEPS) -> Dict[str, float]:
    """Segundos promedio por paso para cada estrategia con un lote fijo de `batch_size` filas."""
    ds = synth_generate(synthetic_preset("minority-hard", n=batch_size, dim=INPUT_DIM, seed=0))
    batch = ds.batch(np.arange(batch_size))
    spec, loss = preset(model_preset, INPUT_DIM)
    params = init_params(spec, StreamKey(0, "init"))
    print(f"\n--- {model_preset}: lote {batch_size}, {threads} hilo(s), {len(params)} parámetros ---")

    results: Dict[str, float] = {}
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for strategy in STRATEGIES:
            config = TrainConfig(steps=num_steps, sampling_rate=0.01, strategy=strategy, noise_multiplier=1.0,
                                 threads=threads)
            clip_state = ClipState(config.clip_bound, config.target_quantile, config.eta_c,
                                   sigma_b=1.0 if config.adaptive else 0.0, adaptive=config.adaptive)
            opt_state = OptimizerState(config.optimizer, len(params))
            accountant = RdpAccountant(config.orders)
            current = params

            start_time = time.perf_counter()
            for t in range(num_steps):
                out = dp_step(current, batch, config, clip_state, opt_state, accountant, StreamKey(0, "step", t),
                              spec=spec, loss=loss, sigma=1.0, dataset_size=100 * batch_size, executor=executor)
                current, clip_state, opt_state = out.params, out.clip_state, out.opt_state
            per_step = (time.perf_counter() - start_time) / num_steps
            print(f"  {strategy:<14} {per_step:.4f} s/paso (C final {clip_state.C:.4g})")
            results[strategy] = per_step
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return results


def plot_results(frame: pd.DataFrame, model_preset: str, threads: int) -> None:
    if not MATPLOTLIB_AVAILABLE:
        return
    plt.figure(figsize=(10, 6))
    subset = frame[(frame["threads"] == threads) & (frame["preset"] == model_preset)]
    for strategy in STRATEGIES:
        rows = subset[subset["strategy"] == strategy]
        plt.plot(rows["batch_size"], rows["seconds_per_step"], label=strategy, marker='o')
    plt.title(f"Tiempo por paso DP vs. tamaño de lote ({model_preset}, {threads} hilo(s))")
    plt.xlabel('Tamaño de lote')
    plt.ylabel('Segundos por paso')
    plt.xticks(BATCH_SIZES)
    plt.legend()
    plt.grid(True, linestyle='--', alpha=0.7)
    plt.xscale('log')
    os.makedirs(BENCHMARK_RESULTS_DIR, exist_ok=True)
    plot_filename = os.path.join(BENCHMARK_RESULTS_DIR, f"benchmark_dp_step_{model_preset}_{threads}threads.png")
    plt.savefig(plot_filename)
    print(f"Gráfico guardado en: {plot_filename}")
    plt.close()


if __name__ == '__main__':
    rows: List[Dict] = []
    for model_preset in MODEL_PRESETS:
        for threads in THREAD_COUNTS:
            for size in BATCH_SIZES:
                for strategy, seconds in run_benchmark(model_preset, size, threads).items():
                    rows.append({"preset": model_preset, "threads": threads, "batch_size": size,
                                 "strategy": strategy, "seconds_per_step": seconds})

    frame = pd.DataFrame(rows)
    print("\n--- Resumen (segundos por paso) ---")
    print(frame.pivot_table(index=["preset", "threads", "batch_size"], columns="strategy",
                            values="seconds_per_step").to_string(float_format=lambda v: f"{v:.4f}"))
    for model_preset in MODEL_PRESETS:
        for threads in THREAD_COUNTS:
            plot_results(frame, model_preset, threads)
    print("\nBenchmark de pasos DP completado.")
