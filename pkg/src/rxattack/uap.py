"""Universal (input-agnostic) perturbation built from a training subset."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .attacks import AttackBudget, papr_clip, power, power_normalize
from .receiver import ReceiverModel, bit_loss, predict_bits
from .signal_chain import SignalDataset

log = logging.getLogger(__name__)


@dataclass
class UapConfig:
    budget: AttackBudget = field(default_factory=lambda: AttackBudget.from_db(-5.0, 2.0))
    subset_fraction: float = 0.25
    desired_ber: float = 0.3
    inner_step: float = 0.1
    max_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.subset_fraction <= 1:
            raise ValueError("subset_fraction must lie in (0, 1]")
        if not 0 < self.desired_ber < 1:
            raise ValueError("desired_ber must lie in (0, 1)")
        if self.inner_step <= 0 or self.max_epochs < 1:
            raise ValueError("inner_step and max_epochs must be positive")


@dataclass
class UapReport:
    epochs_used: int
    final_ber: float
    reached_target: bool
    updates: int
    ber_history: list[float]

    @property
    def terminated_by(self) -> str:
        return "target" if self.reached_target else "max_epochs"


def select_subset(train: SignalDataset, cfg: UapConfig) -> SignalDataset:
    return train.subset(cfg.subset_fraction, cfg.seed)


def apply_uap(signal, delta_uap, epsilon) -> np.ndarray:
    """``signal + sqrt(epsilon) * delta_uap``; ``epsilon`` may be per-sample."""
    signal = np.asarray(signal, dtype=np.float64)
    delta_uap = np.asarray(delta_uap, dtype=np.float64)
    if signal.shape[-2:] != delta_uap.shape:
        raise ValueError(f"length mismatch: signal {signal.shape} vs perturbation {delta_uap.shape}")
    eps = np.asarray(epsilon, dtype=np.float64)
    if np.any(eps < 0):
        raise ValueError("epsilon must be non-negative")
    if np.all(eps == 0):
        return signal
    if abs(power(delta_uap) - 1.0) > 1e-6:
        raise ValueError("universal perturbation must have unit power")
    return signal + np.sqrt(eps)[..., None, None] * delta_uap


def _subset_ber(model, subset, delta, eps) -> float:
    adv = apply_uap(subset.signals, delta, eps)
    return float(np.mean(predict_bits(model, adv) != subset.bits))


def build_uap(model: ReceiverModel, train_subset: SignalDataset, cfg: UapConfig) -> tuple[np.ndarray, UapReport]:
    """Grow a unit-power perturbation until the subset BER reaches ``cfg.desired_ber``.

    Samples are visited in order.  A sample whose recovery under the current
    perturbation still matches its clean recovery on every bit triggers a
    sign-gradient ascent step on the loss against that clean recovery,
    followed by PAPR clipping and power normalization.
    """
    if len(train_subset) == 0:
        raise ValueError("empty training subset")
    n = train_subset.signals.shape[-1]
    delta = np.zeros((2, n))
    eps = cfg.budget.epsilon_for(train_subset.clean)
    root_eps = np.sqrt(eps)
    signals = train_subset.signals.astype(np.float64)
    clean_bits = predict_bits(model, train_subset.signals)
    labels = torch.from_numpy(clean_bits.astype(np.int64))
    dtype = next(model.parameters()).dtype

    def ber_now():
        if not delta.any():
            return float(np.mean(clean_bits != train_subset.bits))
        return _subset_ber(model, train_subset, delta, eps)

    history = [ber_now()]
    epochs = updates = 0
    # at least one pass, so the result is a defined unit-power vector even when
    # the clean subset BER already meets the target
    while epochs == 0 or (history[-1] < cfg.desired_ber and epochs < cfg.max_epochs):
        i, chunk = 0, 1
        while i < len(train_subset):
            # Scan ahead under the current perturbation; only the first unfooled
            # sample matters because the perturbation changes after its update.
            stop = min(len(train_subset), i + chunk)
            adv = signals[i:stop] + root_eps[i:stop, None, None] * delta
            unfooled = np.all(predict_bits(model, adv) == clean_bits[i:stop], axis=1)
            if not unfooled.any():
                i, chunk = stop, min(256, chunk * 2)
                continue
            j = i + int(np.argmax(unfooled))
            chunk = max(1, chunk // 2) if j == i else chunk
            x = torch.from_numpy(adv[j - i][None]).to(dtype).requires_grad_(True)
            (g,) = torch.autograd.grad(bit_loss(model.log_probs(x), labels[j:j + 1]).sum(), x)
            step = np.sign(g[0].numpy().astype(np.float64))
            if step.any():
                delta = power_normalize(papr_clip(delta + cfg.inner_step * step, cfg.budget.beta))
                updates += 1
            i = j + 1
        epochs += 1
        history.append(ber_now())
        log.info("uap epoch %d: subset BER %.4f (%d updates)", epochs, history[-1], updates)
    if not delta.any():
        raise RuntimeError("universal perturbation never received an update")
    report = UapReport(epochs, history[-1], history[-1] >= cfg.desired_ber, updates, history)
    return delta, report
