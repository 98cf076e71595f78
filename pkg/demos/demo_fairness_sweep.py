# demos/demo_fairness_sweep.py
import sys
import os
import tempfile

# Añadir la ruta raíz del proyecto al sys.path para importaciones
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.cli.commands import cmd_analyze, cmd_gradstats, cmd_sweep
from src.cli.experiment_config import parse_experiment
from src.common.utils import log_error, log_info
from src.common.exceptions import FairClipError


def demo_experiment(strategy: str) -> dict:
    return {
        "data": {"source": "synthetic", "name": "demo-minority",
                 "synthetic": {"preset": "minority-hard", "n": 4000, "dim": 10, "seed": 0}},
        "model": {"preset": "income-simple", "hidden": [32, 32]},
        "privacy": {"epsilon": 8.0, "delta": 1.0e-5},
        "clip": {"strategy": strategy, "clip_bound": 0.1},
        "train": {"epochs": 3, "expected_batch_size": 128, "learning_rate": 0.005},
    }


def run_fairness_sweep_demo(seeds: int = 3):
    """
    Barrido corto de hard, adaptive-hard y SoftAdaClip sobre datos sintéticos con una
    minoría difícil, seguido del análisis de disparidad y de las normas por subgrupo.
    """
    log_info("--- Iniciando demostración de barrido de equidad ---")
    out_root = tempfile.mkdtemp(prefix="fairclip_demo_")
    sweep_dirs = []
    try:
        for strategy in ("hard", "adaptive-hard", "softadaclip"):
            out_dir = os.path.join(out_root, strategy)
            log_info(f"\nBarrido de {seeds} semillas con '{strategy}' en {out_dir}")
            cmd_sweep(parse_experiment(demo_experiment(strategy)), out_dir, seeds=seeds)
            sweep_dirs.append(out_dir)

        log_info("\n--- Disparidad y pruebas de Wilcoxon ---")
        analysis = cmd_analyze(os.path.join(out_root, "analyze"), sweep_dirs)
        log_info(analysis["disparity"].to_string(index=False))
        for row in analysis["significance"]:
            log_info(f"  {row['method_a']} vs {row['method_b']}: p corregido = {row['p_corrected']:.4g} "
                     f"({row['verdict']})")

        log_info("\n--- Normas de gradiente por subgrupo antes y después del recorte ---")
        cmd_gradstats(os.path.join(out_root, "gradstats"), sweep_dirs)
    except FairClipError as e:
        log_error(f"La demostración falló: {e}")
        return

    log_info(f"\nResultados en {out_root}")
    log_info("--- Demostración de barrido completada ---")


if __name__ == '__main__':
    run_fairness_sweep_demo()
