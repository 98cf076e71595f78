# demos/demo_clipping.py
import sys
import os
import numpy as np

# Añadir la ruta raíz del proyecto al sys.path para importaciones
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.clip.adaptive import ClipState, noisy_unclipped_fraction, update_threshold
from src.clip.clipping import clip_batch, hard_clip, soft_clip
from src.common.utils import log_info
from src.numerics.random_streams import StreamKey, gaussian
from src.privacy.calibration import calibrate_sigma, composed_epsilon
from src.privacy.rdp_accountant import MechanismEvent, PrivacyParams


def run_clipping_demo():
    """
    Recorte hard contra soft sobre gradientes de norma cercana, un umbral adaptativo
    siguiendo el cuantil objetivo y la calibración de σ para (ε, δ) = (8, 1e-5).
    """
    log_info("--- Recorte de un gradiente con C = 1 ---")
    direction = np.array([1.0, 2.0, -2.0]) / 3.0
    for norm in (0.5, 1.1, 1.2, 5.0):
        g = direction * norm
        hard, soft = hard_clip(g, 1.0), soft_clip(g, 1.0)
        log_info(f"  ||g|| = {norm:<4}  hard: alpha={hard.alpha:.4f} ||g'||={hard.clipped_norm:.4f}   "
                 f"soft: alpha={soft.alpha:.4f} ||g'||={soft.clipped_norm:.4f}")
    log_info("Con hard, 1.1 y 1.2 terminan en la misma norma; con soft conservan su orden.")

    log_info("\n--- Umbral adaptativo (gamma = 0.5, eta_c = 0.2) ---")
    key = StreamKey(0, "demo")
    norms = np.abs(gaussian(key, 256, 1.0)) * 3.0
    G = norms[:, None] * np.array([[1.0, 0.0]])
    state = ClipState(0.1, target_quantile=0.5, eta_c=0.2, sigma_b=2.0, adaptive=True)
    for t in range(15):
        _, _, bits, _ = clip_batch(G, state.C, "softadaclip")
        fraction = noisy_unclipped_fraction(bits, len(bits), state.sigma_b, StreamKey(0, "quantile", t, 0))
        state = update_threshold(state, fraction)
        log_info(f"  paso {t:>2}: b~ = {fraction:.3f}  C = {state.C:.4f}")
    log_info(f"Mediana real de las normas: {np.median(norms):.4f}")

    log_info("\n--- Calibración de sigma ---")
    target = PrivacyParams(8.0, 1e-5)
    q, steps = 256 / 14000, 275
    sigma = calibrate_sigma(target, q, steps)
    log_info(f"  sin contar b~: sigma = {sigma:.4f}, epsilon = {composed_epsilon(sigma, q, steps, 1e-5):.4f}")
    extra = [MechanismEvent(q, 0.05 * 256, steps, "unclipped-count")]
    sigma_with = calibrate_sigma(target, q, steps, extra)
    log_info(f"  contando b~:   sigma = {sigma_with:.4f}, "
             f"epsilon = {composed_epsilon(sigma_with, q, steps, 1e-5, extra):.4f}")

    log_info("\n--- Demostración de recorte completada ---")


if __name__ == '__main__':
    run_clipping_demo()
