# src/profiling/profile_training.py
import cProfile
import pstats
import os
import sys

# Añadir la ruta raíz del proyecto para importaciones
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '../../')))

from src.common.utils import logger
from src.data.dataset import DataSplits
from src.data.splits import stratified_split
from src.data.synthetic import synth_generate, synthetic_preset
from src.engine.config import TrainConfig
from src.engine.trainer import train
from src.model.presets import preset
from src.numerics.random_streams import StreamKey

# --- Configuración del Perfilado ---
PROFILE_DIR = os.path.join(os.path.dirname(__file__), 'profile_results')

NUM_EXAMPLES = 5000
INPUT_DIM = 20
STRATEGY = "softadaclip"


def run_profiled_training(strategy: str = STRATEGY):
    """
    Perfilado de una época de entrenamiento DP: gradientes por muestra, recorte,
    ruido, contabilidad y evaluación por época.
    """
    print(f"\n--- Perfilando una época con '{strategy}' sobre {NUM_EXAMPLES} ejemplos ---")
    ds = synth_generate(synthetic_preset("minority-hard", n=NUM_EXAMPLES, dim=INPUT_DIM, seed=0))
    splits = DataSplits(*stratified_split(ds, key=StreamKey(0, "split")))
    spec, loss = preset("income-simple", INPUT_DIM)
    config = TrainConfig(epochs=1, expected_batch_size=256, strategy=strategy, target_epsilon=8.0, patience=None)

    # Sin logging por época para no distorsionar el perfil
    logger.disabled = True
    os.makedirs(PROFILE_DIR, exist_ok=True)
    profile_path = os.path.join(PROFILE_DIR, f'train_{strategy}_profile.prof')
    profiler = cProfile.Profile()
    profiler.enable()
    result = train(config, splits, spec, loss)
    profiler.disable()
    logger.disabled = False

    profiler.dump_stats(profile_path)
    print(f"{result.steps_executed} pasos; perfil guardado en: {profile_path}")
    stats = pstats.Stats(profile_path)
    stats.sort_stats('cumulative').print_stats(15)
    logger.info("Perfilado de entrenamiento completado.")


if __name__ == "__main__":
    run_profiled_training(sys.argv[1] if len(sys.argv) > 1 else STRATEGY)
