# src/privacy/rdp_accountant.py
"""
Contabilidad de privacidad de Rényi (RDP) para el mecanismo gaussiano con
submuestreo de Poisson, composición aditiva y conversión a (ε, δ).
"""
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from src.common.exceptions import AccountingOverflow, NoFiniteOrder
from src.common.utils import logger
from config.setting import PRIVACY_DEFAULTS

DEFAULT_ORDERS: List[int] = list(PRIVACY_DEFAULTS["orders"])


class MechanismEvent:
    """Mecanismo gaussiano submuestreado: tasa q, multiplicador σ y número de pasos."""
    def __init__(self, q: float, sigma: float, count: int = 1, label: str = "gradient"):
        if not (0.0 < q <= 1.0):
            raise ValueError(f"Sampling rate q must lie in (0, 1], got {q}.")
        if not (sigma > 0):
            raise ValueError(f"Noise multiplier must be > 0, got {sigma}.")
        if int(count) != count or count < 1:
            raise ValueError("Event count must be an integer >= 1.")
        self.q = float(q)
        self.sigma = float(sigma)
        self.count = int(count)
        self.label = label

    def to_dict(self) -> Dict[str, Any]:
        return {"q": self.q, "sigma": self.sigma, "count": self.count, "label": self.label}

    def __repr__(self) -> str:
        return f"MechanismEvent(q={self.q}, sigma={self.sigma}, count={self.count}, label='{self.label}')"


class PrivacyParams:
    def __init__(self, epsilon: float, delta: float):
        if not (epsilon > 0):
            raise ValueError("epsilon must be > 0.")
        if not (0.0 < delta < 1.0):
            raise ValueError("delta must lie in (0, 1).")
        self.epsilon = float(epsilon)
        self.delta = float(delta)

    def to_dict(self) -> Dict[str, Any]:
        return {"epsilon": self.epsilon, "delta": self.delta}

    def __repr__(self) -> str:
        return f"PrivacyParams(epsilon={self.epsilon}, delta={self.delta})"


class AccountantState:
    """Divergencia de Rényi acumulada por orden. Los órdenes descartados quedan en +inf."""
    def __init__(self, orders: Optional[Sequence[int]] = None, rdp: Optional[Sequence[float]] = None):
        orders = list(DEFAULT_ORDERS if orders is None else orders)
        if not orders or any(int(a) != a or a < 2 for a in orders):
            raise ValueError("Renyi orders must be integers >= 2.")
        if len(set(orders)) != len(orders):
            raise ValueError("Renyi orders must be distinct.")
        self.orders = np.array(sorted(int(a) for a in orders), dtype=np.int64)
        self.rdp = np.zeros(len(self.orders)) if rdp is None else np.asarray(rdp, dtype=np.float64).copy()
        if self.rdp.shape != self.orders.shape:
            raise ValueError("RDP ledger length must match the number of orders.")

    def to_dict(self) -> Dict[str, Any]:
        return {"orders": self.orders.tolist(), "rdp": [float(v) for v in self.rdp]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AccountantState':
        return cls(data["orders"], data["rdp"])

    def __repr__(self) -> str:
        return f"AccountantState(orders={len(self.orders)}, max_rdp={float(np.max(self.rdp)):.6g})"


def rdp_subsampled_gaussian(q: float, sigma: float, alpha: int) -> float:
    """
    RDP de orden entero α del gaussiano con submuestreo de Poisson.

    q = 1: α/(2σ²). q < 1: (1/(α-1))·log Σ_k C(α,k)(1-q)^(α-k) q^k exp(k(k-1)/(2σ²)),
    evaluado en espacio logarítmico.
    """
    if not (0.0 < q <= 1.0):
        raise ValueError(f"Sampling rate q must lie in (0, 1], got {q}.")
    if not (sigma > 0):
        raise ValueError(f"Noise multiplier must be > 0, got {sigma}.")
    if int(alpha) != alpha or alpha < 2:
        raise ValueError("Renyi order must be an integer >= 2.")
    alpha = int(alpha)

    if q == 1.0:
        value = alpha / (2.0 * sigma ** 2)
    else:
        k = np.arange(alpha + 1, dtype=np.float64)
        log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
        terms = log_binom + k * math.log(q) + (alpha - k) * math.log1p(-q) + k * (k - 1) / (2.0 * sigma ** 2)
        with np.errstate(over='ignore'):
            value = float(logsumexp(terms)) / (alpha - 1)
        # Los coeficientes binomiales suman 1: el redondeo puede dar un -0 minúsculo
        value = max(value, 0.0)

    if not math.isfinite(value):
        raise AccountingOverflow(f"RDP overflow at order {alpha} (q={q}, sigma={sigma}).")
    return value


def rdp_vector(q: float, sigma: float, orders: Sequence[int]) -> np.ndarray:
    """RDP en todos los órdenes; los que desbordan quedan en +inf."""
    values = np.empty(len(orders))
    for i, alpha in enumerate(orders):
        try:
            values[i] = rdp_subsampled_gaussian(q, sigma, int(alpha))
        except AccountingOverflow as e:
            logger.warning(f"Descartando orden {alpha}: {e}")
            values[i] = np.inf
    return values


def compose(state: AccountantState, event: MechanismEvent) -> AccountantState:
    """Cada orden suma count × rdp(q, σ, α)."""
    step = rdp_vector(event.q, event.sigma, state.orders)
    return AccountantState(state.orders, state.rdp + event.count * step)


def epsilon_curve(state: AccountantState, delta: float) -> List[Tuple[int, float]]:
    """ε por orden: rdp(α) + log(1/δ)/(α-1)."""
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1).")
    eps = state.rdp + math.log(1.0 / delta) / (state.orders - 1)
    return [(int(a), float(e)) for a, e in zip(state.orders, eps)]


def to_epsilon(state: AccountantState, delta: float) -> Tuple[float, int]:
    """ε = min sobre órdenes de la curva; retorna (ε, α*)."""
    curve = epsilon_curve(state, delta)
    finite = [(e, a) for a, e in curve if math.isfinite(e)]
    if not finite:
        raise NoFiniteOrder("Every Renyi order overflowed; epsilon is unbounded.")
    eps, best = min(finite)
    return eps, best


class RdpAccountant:
    """
    Contador de privacidad con un solo escritor (el motor compone una vez por mecanismo
    y paso). Un mecanismo con σ = 0 no es privado y deja ε = ∞.
    """
    def __init__(self, orders: Optional[Sequence[int]] = None):
        self.state = AccountantState(orders)
        self.compositions = 0
        self.non_private = False
        self._cache: Dict[Tuple[float, float], np.ndarray] = {}

    def compose(self, event: MechanismEvent) -> None:
        key = (event.q, event.sigma)
        if key not in self._cache:
            self._cache[key] = rdp_vector(event.q, event.sigma, self.state.orders)
        self.state = AccountantState(self.state.orders, self.state.rdp + event.count * self._cache[key])
        self.compositions += event.count

    def record(self, q: float, sigma: float, count: int = 1, label: str = "gradient") -> None:
        """Compone un paso; σ = 0 marca la corrida como no privada."""
        if sigma == 0:
            if not self.non_private:
                logger.warning(f"Mecanismo '{label}' sin ruido (sigma = 0): la corrida no es privada.")
            self.non_private = True
            self.compositions += count
            return
        self.compose(MechanismEvent(q, sigma, count, label))

    def get_epsilon(self, delta: float) -> float:
        return self.get_epsilon_and_order(delta)[0]

    def get_epsilon_and_order(self, delta: float) -> Tuple[float, Optional[int]]:
        if self.non_private:
            return math.inf, None
        return to_epsilon(self.state, delta)

    def __repr__(self) -> str:
        return f"RdpAccountant(compositions={self.compositions}, non_private={self.non_private})"
