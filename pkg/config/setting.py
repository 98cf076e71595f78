# config/setting.py
import os

# Directorio raíz para resultados (corridas, barridos, reportes)
OUT_DIR = os.environ.get("FAIRCLIP_OUT_DIR", "./results")

# Hilos para el cálculo por muestra (no afecta los resultados, solo el tiempo)
THREADS = int(os.environ.get("FAIRCLIP_THREADS", 1))

# Configuración del recorte de gradientes.
# eta_c y fraction_noise_std son valores por defecto propios de la herramienta.
CLIP_DEFAULTS = {
    "target_quantile": float(os.environ.get("FAIRCLIP_TARGET_QUANTILE", 0.5)),
    "eta_c": float(os.environ.get("FAIRCLIP_ETA_C", 0.2)),
    "eps_div": float(os.environ.get("FAIRCLIP_EPS_DIV", 1e-6)),
    # sigma_b = fraction_noise_std * |B| esperado
    "fraction_noise_std": float(os.environ.get("FAIRCLIP_FRACTION_NOISE_STD", 0.05)),
}

# Presupuesto de privacidad y malla de órdenes de Rényi
PRIVACY_DEFAULTS = {
    "epsilon": float(os.environ.get("FAIRCLIP_EPSILON", 8.0)),
    "delta": float(os.environ.get("FAIRCLIP_DELTA", 1e-5)),
    "orders": list(range(2, 65)) + [80, 128, 256, 512],
    "sigma_bracket": (0.3, 100.0),
    "calibration_tol": 1e-3,
}

# Entrenamiento
TRAIN_DEFAULTS = {
    "beta1": 0.9,
    "beta2": 0.999,
    "eps_adam": 1e-8,
    "patience": int(os.environ.get("FAIRCLIP_PATIENCE", 10)),
    # Tamaño fijo de los bloques de ejemplos procesados por cada hilo
    "chunk_size": int(os.environ.get("FAIRCLIP_CHUNK_SIZE", 64)),
}

# Valores por defecto sin referencia publicada; se anotan en cada manifiesto de salida
DEFAULTS_NOTE = "eta_c, sigma_b and patience are this tool's defaults; no published reference fixes them"

# Configuración general
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()
