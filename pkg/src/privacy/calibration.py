# src/privacy/calibration.py
import math
from typing import Optional, Sequence, Tuple

from src.common.exceptions import CalibrationOutOfRange
from src.common.utils import logger
from src.privacy.rdp_accountant import AccountantState, MechanismEvent, PrivacyParams, compose, to_epsilon
from config.setting import PRIVACY_DEFAULTS

MAX_BISECTION_STEPS = 200


def composed_epsilon(sigma: float, q: float, steps: int, delta: float,
                     extra_events: Sequence[MechanismEvent] = (), orders: Optional[Sequence[int]] = None) -> float:
    """ε tras `steps` pasos del gaussiano de gradientes más los mecanismos extra por paso."""
    state = compose(AccountantState(orders), MechanismEvent(q, sigma, steps))
    for event in extra_events:
        state = compose(state, event)
    return to_epsilon(state, delta)[0]


def calibrate_sigma(target: PrivacyParams, q: float, steps: int,
                    extra_events: Sequence[MechanismEvent] = (), orders: Optional[Sequence[int]] = None,
                    bracket: Tuple[float, float] = None, tol: float = None) -> float:
    """
    Busca por bisección el σ del mecanismo de gradientes tal que el ε compuesto quede en
    [objetivo - tol, objetivo]. Nunca retorna un σ cuyo ε supere el objetivo.

    `extra_events` son mecanismos con σ propio que se componen igual (por ejemplo el
    conteo de gradientes no recortados de los métodos adaptativos, ya con su count = steps).
    """
    lo, hi = bracket or PRIVACY_DEFAULTS["sigma_bracket"]
    tol = PRIVACY_DEFAULTS["calibration_tol"] if tol is None else tol
    if steps < 1:
        raise ValueError("steps must be >= 1.")

    def eps_at(sigma: float) -> float:
        return composed_epsilon(sigma, q, steps, target.delta, extra_events, orders)

    eps_hi = eps_at(hi)
    if eps_hi > target.epsilon:
        raise CalibrationOutOfRange(
            f"Target epsilon {target.epsilon} is unreachable: sigma={hi} still gives epsilon={eps_hi:.6g}.")
    eps_lo = eps_at(lo)
    if eps_lo <= target.epsilon:
        if eps_lo >= target.epsilon - tol:
            return lo
        raise CalibrationOutOfRange(
            f"Target epsilon {target.epsilon} is looser than sigma={lo} allows (epsilon={eps_lo:.6g}).")

    # Invariante: eps(lo) > objetivo >= eps(hi)
    for _ in range(MAX_BISECTION_STEPS):
        if eps_hi >= target.epsilon - tol:
            break
        mid = 0.5 * (lo + hi)
        eps_mid = eps_at(mid)
        if eps_mid > target.epsilon:
            lo = mid
        else:
            hi, eps_hi = mid, eps_mid

    if not (target.epsilon - tol <= eps_hi <= target.epsilon) or not math.isfinite(eps_hi):
        raise CalibrationOutOfRange(f"Bisection did not reach epsilon within {tol} of {target.epsilon}.")
    logger.info(f"Calibración: sigma={hi:.6g} da epsilon={eps_hi:.6g} (objetivo {target.epsilon}, q={q}, T={steps})")
    return hi
