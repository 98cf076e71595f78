# src/engine/trainer.py
"""
Bucle de entrenamiento con privacidad diferencial.

Un paso: gradientes por muestra -> recorte según la estrategia -> suma en orden de
índice -> ruido gaussiano con desviación σ·C (C previo a la actualización) -> división
por |B| -> actualización del optimizador -> (si es adaptativo) b̃ y nuevo C -> composición
en el contador de privacidad.

El trabajo por muestra se reparte en bloques de tamaño fijo (independiente del número
de hilos) y las sumas parciales se combinan en orden de bloque, así el resultado no
depende de cuántos hilos se usen.
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np

from src.clip.adaptive import ClipState, noisy_unclipped_fraction, update_threshold
from src.clip.clipping import clip_batch
from src.common.exceptions import (CalibrationOutOfRange, ConfigError, DivergedStep, NonFiniteInput,
                                   NonFiniteLoss)
from src.common.models import Batch
from src.common.utils import logger
from src.data.dataset import DataSplits
from src.engine.config import TrainConfig
from src.engine.optimizers import OptimizerState, apply_optimizer
from src.engine.sampling import poisson_sample
from src.model.losses import LossSpec
from src.model.metrics import evaluate
from src.model.mlp import ModelParams, MlpSpec, init_params, per_sample_grads
from src.numerics.random_streams import StreamKey
from src.privacy.calibration import calibrate_sigma
from src.privacy.noise import add_gradient_noise
from src.privacy.rdp_accountant import MechanismEvent, PrivacyParams, RdpAccountant


class StepTrace:
    """
    Registro de un paso: tamaño real del lote, C antes y después de la actualización,
    b̃, norma del gradiente promedio con ruido y, por subgrupo, la norma del gradiente
    acumulado del subgrupo antes y después del recorte.
    """
    SCHEMA = "fairclip.step/1"

    def __init__(self, step: int, batch_size: int, clip_before: float, clip_after: float, noise_std: float,
                 unclipped_count: int = 0, unclipped_fraction: Optional[float] = None,
                 noisy_grad_norm: float = 0.0, batch_loss: float = 0.0,
                 group_pre_norm: Optional[Dict[str, float]] = None, group_post_norm: Optional[Dict[str, float]] = None,
                 group_count: Optional[Dict[str, int]] = None):
        self.step = int(step)
        self.batch_size = int(batch_size)
        self.clip_before = float(clip_before)
        self.clip_after = float(clip_after)
        self.noise_std = float(noise_std)
        self.unclipped_count = int(unclipped_count)
        self.unclipped_fraction = unclipped_fraction
        self.noisy_grad_norm = float(noisy_grad_norm)
        self.batch_loss = float(batch_loss)
        self.group_pre_norm = dict(group_pre_norm or {})
        self.group_post_norm = dict(group_post_norm or {})
        self.group_count = dict(group_count or {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "step": self.step,
            "batch_size": self.batch_size,
            "clip_before": self.clip_before,
            "clip_after": self.clip_after,
            "noise_std": self.noise_std,
            "unclipped_count": self.unclipped_count,
            "unclipped_fraction": self.unclipped_fraction,
            "noisy_grad_norm": self.noisy_grad_norm,
            "batch_loss": self.batch_loss,
            "group_pre_norm": self.group_pre_norm,
            "group_post_norm": self.group_post_norm,
            "group_count": self.group_count,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StepTrace':
        return cls(data["step"], data["batch_size"], data["clip_before"], data["clip_after"], data["noise_std"],
                   data.get("unclipped_count", 0), data.get("unclipped_fraction"),
                   data.get("noisy_grad_norm", 0.0), data.get("batch_loss", 0.0),
                   data.get("group_pre_norm"), data.get("group_post_norm"), data.get("group_count"))

    def __repr__(self) -> str:
        return f"StepTrace(step={self.step}, |B|={self.batch_size}, C={self.clip_before:.6g}->{self.clip_after:.6g})"


class StepOutput(NamedTuple):
    params: ModelParams
    clip_state: ClipState
    opt_state: OptimizerState
    trace: StepTrace


class _ChunkResult(NamedTuple):
    clipped_sum: np.ndarray
    bits: np.ndarray
    loss_sum: float
    group_pre: Dict[str, np.ndarray]
    group_post: Dict[str, np.ndarray]
    group_count: Dict[str, int]


def _process_chunk(params: ModelParams, spec: MlpSpec, loss: LossSpec, batch: Batch, rows: slice,
                   C: float, strategy: str, eps_div: float, dropout_key: StreamKey) -> _ChunkResult:
    G, losses = per_sample_grads(params, spec, loss, batch.features[rows], batch.labels[rows],
                                 base_key=dropout_key, indices=batch.indices[rows])
    clipped, _, bits, _ = clip_batch(G, C, strategy, eps_div)
    group_pre, group_post, group_count = {}, {}, {}
    for attribute in sorted(batch.groups):
        values = batch.groups[attribute][rows]
        for value in np.unique(values):
            mask = values == value
            name = f"{attribute}={int(value)}"
            group_pre[name] = G[mask].sum(axis=0)
            group_post[name] = clipped[mask].sum(axis=0)
            group_count[name] = int(mask.sum())
    return _ChunkResult(clipped.sum(axis=0), bits, float(np.sum(losses)), group_pre, group_post, group_count)


def dp_step(params: ModelParams, batch: Batch, config: TrainConfig, clip_state: ClipState,
            opt_state: OptimizerState, accountant: RdpAccountant, key: StreamKey, *,
            spec: MlpSpec, loss: LossSpec, sigma: float, dataset_size: int,
            executor: Optional[ThreadPoolExecutor] = None) -> StepOutput:
    """
    Un paso de DP-SGD / DP-Adam sobre el lote `batch`. `key` identifica el paso
    (semilla y número de paso); de ella salen los flujos de dropout, ruido y cuantil.
    Un lote vacío no actualiza los parámetros pero igual se compone en el contador.
    """
    q = config.resolve_q(dataset_size)
    C = clip_state.C
    noise_key = StreamKey(key.seed, "noise", key.step, 0)
    dropout_key = StreamKey(key.seed, "dropout", key.step, 0)
    quantile_key = StreamKey(key.seed, "quantile", key.step, 0)

    def compose_step():
        accountant.record(q, sigma, label="gradient")
        if config.accounts_fraction():
            accountant.record(q, clip_state.sigma_b, label="unclipped-count")

    if len(batch) == 0:
        logger.warning(f"Paso {key.step}: lote de Poisson vacío; se omite la actualización.")
        compose_step()
        trace = StepTrace(key.step, 0, C, C, sigma * C)
        return StepOutput(params, clip_state, opt_state, trace)

    chunk = config.chunk_size
    slices = [slice(s, min(s + chunk, len(batch))) for s in range(0, len(batch), chunk)]
    try:
        if executor is not None and len(slices) > 1:
            results = list(executor.map(
                lambda sl: _process_chunk(params, spec, loss, batch, sl, C, config.strategy, config.eps_div,
                                          dropout_key), slices))
        else:
            results = [_process_chunk(params, spec, loss, batch, sl, C, config.strategy, config.eps_div, dropout_key)
                       for sl in slices]
    except (NonFiniteLoss, NonFiniteInput) as e:
        raise DivergedStep(f"Step {key.step}: non-finite per-sample gradients ({e}).") from e

    # Reducción en orden de bloque (= orden ascendente de índice)
    clipped_sum = np.zeros(len(params))
    group_pre: Dict[str, np.ndarray] = {}
    group_post: Dict[str, np.ndarray] = {}
    group_count: Dict[str, int] = {}
    for res in results:
        clipped_sum = clipped_sum + res.clipped_sum
        for name in res.group_pre:
            group_pre[name] = group_pre.get(name, 0.0) + res.group_pre[name]
            group_post[name] = group_post.get(name, 0.0) + res.group_post[name]
            group_count[name] = group_count.get(name, 0) + res.group_count[name]
    bits = np.concatenate([res.bits for res in results])

    noisy = add_gradient_noise(clipped_sum, sigma, C, noise_key)
    denominator = len(batch) if config.normalize_by == "realized" else q * dataset_size
    g_tilde = noisy / denominator

    new_opt, delta = apply_optimizer(opt_state, g_tilde, config.learning_rate)
    new_theta = params.theta + delta
    if not np.all(np.isfinite(new_theta)):
        raise DivergedStep(f"Step {key.step}: parameter update is not finite.")

    fraction = None
    new_clip = clip_state
    if clip_state.adaptive:
        fraction = noisy_unclipped_fraction(bits, len(batch), clip_state.sigma_b, quantile_key)
        new_clip = update_threshold(clip_state, fraction)
    compose_step()

    trace = StepTrace(
        key.step, len(batch), C, new_clip.C, sigma * C,
        unclipped_count=int(bits.sum()), unclipped_fraction=fraction,
        noisy_grad_norm=float(np.linalg.norm(g_tilde)), batch_loss=sum(res.loss_sum for res in results),
        group_pre_norm={k: float(np.linalg.norm(v)) for k, v in group_pre.items()},
        group_post_norm={k: float(np.linalg.norm(v)) for k, v in group_post.items()},
        group_count=group_count,
    )
    logger.debug(f"Paso {key.step}: |B|={len(batch)}, C={C:.6g}->{new_clip.C:.6g}, b~={fraction}")
    return StepOutput(params.with_theta(new_theta), new_clip, new_opt, trace)


class TrainResult:
    """Parámetros del mejor checkpoint, historial por época, trazas por paso y (ε, δ) final."""
    SCHEMA = "fairclip.result/1"

    def __init__(self, params: ModelParams, history: List[Dict[str, Any]], traces: List[StepTrace],
                 epsilon: float, delta: float, best_order: Optional[int], sigma: float, sigma_b: float,
                 q: float, steps_executed: int, compositions: int, best_epoch: int, stopping_epoch: int,
                 early_stopped: bool, final_clip_bound: float, wall_seconds: float = 0.0):
        self.params = params
        self.history = history
        self.traces = traces
        self.epsilon = epsilon
        self.delta = delta
        self.best_order = best_order
        self.sigma = sigma
        self.sigma_b = sigma_b
        self.q = q
        self.steps_executed = steps_executed
        self.compositions = compositions
        self.best_epoch = best_epoch
        self.stopping_epoch = stopping_epoch
        self.early_stopped = early_stopped
        self.final_clip_bound = final_clip_bound
        self.wall_seconds = wall_seconds

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.SCHEMA,
            "epsilon": self.epsilon if math.isfinite(self.epsilon) else None,
            "non_private": not math.isfinite(self.epsilon),
            "delta": self.delta,
            "best_order": self.best_order,
            "sigma": self.sigma,
            "sigma_b": self.sigma_b,
            "q": self.q,
            "steps_executed": self.steps_executed,
            "compositions": self.compositions,
            "best_epoch": self.best_epoch,
            "stopping_epoch": self.stopping_epoch,
            "early_stopped": self.early_stopped,
            "final_clip_bound": self.final_clip_bound,
            "wall_seconds": self.wall_seconds,
        }

    def __repr__(self) -> str:
        return (f"TrainResult(steps={self.steps_executed}, epsilon={self.epsilon:.6g}, "
                f"best_epoch={self.best_epoch}, stopping_epoch={self.stopping_epoch})")


def resolve_sigma(config: TrainConfig, N: int) -> float:
    """σ configurado o, si hay objetivo (ε, δ), el calibrado para los pasos planificados."""
    if config.noise_multiplier is not None:
        return float(config.noise_multiplier)
    if config.target_epsilon is None:
        raise ConfigError("Set either 'noise_multiplier' or a privacy target 'target_epsilon'.")
    q = config.resolve_q(N)
    steps = config.total_steps(N)
    extra = []
    if config.accounts_fraction():
        sigma_b = config.resolve_sigma_b(N)
        if sigma_b == 0:
            raise CalibrationOutOfRange("The unclipped count is released without noise (sigma_b = 0); "
                                        "no noise multiplier reaches a finite epsilon.")
        extra.append(MechanismEvent(q, sigma_b, steps, label="unclipped-count"))
    return calibrate_sigma(PrivacyParams(config.target_epsilon, config.target_delta), q, steps, extra, config.orders)


def _epoch_record(epoch: int, step: int, params: ModelParams, spec: MlpSpec, loss: LossSpec, splits: DataSplits,
                  clip_bound: float, epsilon: float) -> Dict[str, Any]:
    record: Dict[str, Any] = {"schema": "fairclip.epoch/1", "epoch": epoch, "step": step, "clip_bound": clip_bound,
                              "epsilon": epsilon if math.isfinite(epsilon) else None}
    for name, split in splits.items():
        res = evaluate(params, spec, loss, split)
        record[f"{name}_loss"] = res.sum_loss
        record[f"{name}_accuracy"] = res.accuracy
        record[f"{name}_f1"] = res.f1
    return record


def train(config: TrainConfig, splits: DataSplits, spec: MlpSpec, loss: LossSpec,
          threads: Optional[int] = None,
          on_epoch: Optional[Callable[[Dict[str, Any]], None]] = None) -> TrainResult:
    """
    Entrena T pasos (o épocas × ceil(1/q)) evaluando al final de cada época. Se detiene
    cuando el F1 de validación no mejora en `patience` épocas y retorna el checkpoint
    con mejor F1 de validación.
    """
    started = time.perf_counter()
    train_set = splits.train
    N = len(train_set)
    if N == 0:
        raise ValueError("Training split is empty.")
    if train_set.dim != spec.input_dim:
        raise ConfigError(f"Model input width {spec.input_dim} does not match dataset dimension {train_set.dim}.")
    q = config.resolve_q(N)
    total = config.total_steps(N)
    per_epoch = config.steps_per_epoch(N)
    sigma = resolve_sigma(config, N)
    sigma_b = config.resolve_sigma_b(N) if config.adaptive else 0.0
    threads = config.threads if threads is None else threads

    params = init_params(spec, StreamKey(config.seed, "init"))
    clip_state = ClipState(config.clip_bound, config.target_quantile, config.eta_c, sigma_b,
                           adaptive=config.adaptive, clamp_fraction=config.clamp_fraction)
    opt_state = OptimizerState(config.optimizer, len(params), config.beta1, config.beta2, config.eps_adam)
    accountant = RdpAccountant(config.orders)

    logger.info(f"Entrenamiento: estrategia={config.strategy}, N={N}, q={q:.6g}, T={total}, sigma={sigma:.6g}, "
                f"C0={config.clip_bound}, semilla={config.seed}, hilos={threads}")

    history: List[Dict[str, Any]] = []
    traces: List[StepTrace] = []
    best_f1, best_params, best_epoch = -math.inf, params, 0
    epochs_without_improvement = 0
    early_stopped = False
    epoch = 0
    steps_done = 0

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for t in range(total):
            rows = poisson_sample(N, q, StreamKey(config.seed, "poisson", t))
            out = dp_step(params, train_set.batch(rows), config, clip_state, opt_state, accountant,
                          StreamKey(config.seed, "step", t), spec=spec, loss=loss, sigma=sigma, dataset_size=N,
                          executor=executor)
            params, clip_state, opt_state = out.params, out.clip_state, out.opt_state
            traces.append(out.trace)
            steps_done = t + 1

            if steps_done % per_epoch != 0 and steps_done != total:
                continue
            epoch += 1
            record = _epoch_record(epoch, steps_done, params, spec, loss, splits, clip_state.C,
                                   accountant.get_epsilon(config.target_delta))
            history.append(record)
            if on_epoch is not None:
                on_epoch(record)
            logger.info(f"Época {epoch}: val_f1={record['validation_f1']:.4f}, "
                        f"train_loss={record['train_loss']:.6g}, C={clip_state.C:.6g}")

            if record["validation_f1"] > best_f1:
                best_f1, best_params, best_epoch = record["validation_f1"], params, epoch
                epochs_without_improvement = 0
            else:
                epochs_without_improvement += 1
                if epochs_without_improvement >= config.patience_or_inf:
                    early_stopped = True
                    logger.info(f"Parada temprana en la época {epoch}; mejor época {best_epoch} (F1={best_f1:.4f})")
                    break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    epsilon, best_order = accountant.get_epsilon_and_order(config.target_delta)
    result = TrainResult(best_params, history, traces, epsilon, config.target_delta, best_order, sigma, sigma_b, q,
                         steps_done, accountant.compositions, best_epoch, epoch, early_stopped, clip_state.C,
                         time.perf_counter() - started)
    logger.info(f"Fin del entrenamiento: {steps_done} pasos, epsilon={epsilon:.6g}, mejor época {best_epoch}")
    return result
