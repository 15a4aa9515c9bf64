"""Power- and PAPR-constrained sign-gradient attacks on a neural receiver.

Perturbations live in float64 ``(..., 2, N)`` arrays so the constraint
checks hold to ~1e-12; they are cast to the model dtype only when fed in.
All functions broadcast over leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .receiver import ReceiverModel, input_gradient
from .signal_chain import LabeledSample, SignalDataset


class UndefinedInputError(ValueError):
    """Raised for inputs where the quantity is undefined (e.g. PAPR of a zero signal)."""


class DegenerateGradientError(RuntimeError):
    """The loss gradient vanished for some samples, so no sign direction exists."""

    def __init__(self, indices):
        self.indices = np.asarray(indices)
        super().__init__(f"zero input gradient for {len(self.indices)} sample(s): {self.indices[:10].tolist()}")


def power(x) -> np.ndarray | float:
    """Mean of I^2 + Q^2 over samples, per signal."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("empty signal")
    p = np.mean(np.sum(x ** 2, axis=-2), axis=-1)
    return float(p) if np.ndim(p) == 0 else p


def _modulus_sq(x: np.ndarray) -> np.ndarray:
    return np.sum(x ** 2, axis=-2)


def _papr_of(m2: np.ndarray) -> np.ndarray:
    # mean taken as min + mean(excess) so a constant-modulus signal gives exactly 1
    lo = np.min(m2, axis=-1)
    p = lo + np.mean(m2 - lo[..., None], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, np.max(m2, axis=-1) / np.where(p > 0, p, 1.0), np.nan)


def papr(x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    m2 = _modulus_sq(x)
    if np.any(np.max(m2, axis=-1) <= 0):
        raise UndefinedInputError("PAPR is undefined for a zero signal")
    r = _papr_of(m2)
    return float(r) if np.ndim(r) == 0 else r


def _clip_level_sq(m2: np.ndarray, beta: float) -> np.ndarray:
    """Squared amplitude limit A^2 at which clipping leaves PAPR exactly ``beta``.

    Solves ``A^2 = beta * mean(min(|x|^2, A^2))`` for the largest root, which is
    where repeatedly re-clipping at ``sqrt(beta * power)`` converges.  With the
    k smallest samples untouched: ``A^2 = beta * S_k / (N - beta * (N - k))``.
    """
    n = m2.shape[-1]
    s = np.sort(m2, axis=-1)
    cum = np.concatenate([np.zeros(s.shape[:-1] + (1,)), np.cumsum(s, axis=-1)], axis=-1)
    k = np.arange(n)  # number of untouched samples
    denom = n - beta * (n - k)
    with np.errstate(divide="ignore", invalid="ignore"):
        a2 = beta * cum[..., :n] / denom
    lower = np.concatenate([np.zeros(s.shape[:-1] + (1,)), s[..., :-1]], axis=-1)  # s_(k), 1-based
    valid = (denom > 0) & (a2 >= lower * (1 - 1e-12)) & (a2 <= s * (1 + 1e-12))
    # largest valid k gives the largest root
    last = n - 1 - np.argmax(valid[..., ::-1], axis=-1)
    has = valid.any(axis=-1)
    level = np.take_along_axis(a2, last[..., None], axis=-1)[..., 0]
    return np.where(has, level, 0.0)


def papr_clip(delta, beta: float) -> np.ndarray:
    """Clip sample moduli (phase preserved) so that PAPR <= ``beta``.

    Signals already within the limit are returned unchanged.  The limit is
    the fixed point of clipping at ``sqrt(beta * power)`` and re-measuring,
    computed directly rather than by iterating.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    delta = np.asarray(delta, dtype=np.float64)
    m2 = _modulus_sq(delta)
    p = np.mean(m2, axis=-1)
    if np.any(p <= 0):
        raise UndefinedInputError("cannot PAPR-clip a zero signal")
    ok = np.max(m2, axis=-1) <= beta * p
    level = _clip_level_sq(m2, beta)
    if np.any(~ok & (level <= 0)):
        raise UndefinedInputError(f"PAPR {beta} unreachable by clipping (zero-modulus samples)")
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(m2 > level[..., None], np.sqrt(level[..., None] / m2), 1.0)
    scale = np.where(ok[..., None], 1.0, scale)
    return delta * scale[..., None, :]


def power_normalize(delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64)
    p = np.asarray(power(delta))
    if np.any(p <= 0):
        raise UndefinedInputError("cannot normalize a zero perturbation")
    return delta / np.sqrt(p)[..., None, None]


def scale_to_power(delta_unit, epsilon) -> np.ndarray:
    delta_unit = np.asarray(delta_unit, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if np.any(epsilon <= 0):
        raise ValueError("epsilon must be positive")
    if np.any(np.abs(np.asarray(power(delta_unit)) - 1.0) > 1e-6):
        raise ValueError("scale_to_power expects a unit-power perturbation")
    return delta_unit * np.sqrt(epsilon)[..., None, None]


@dataclass(frozen=True)
class AttackBudget:
    """Power limit ``epsilon`` (linear), PAPR limit ``beta`` (linear) and iteration count.

    When ``psr_db`` is set the power limit is derived per sample from the
    clean signal component and ``epsilon`` is ignored.
    """

    epsilon: float | None = None
    beta: float = 10 ** 0.2
    iterations: int = 3
    psr_db: float | None = None

    def __post_init__(self):
        if self.psr_db is None and (self.epsilon is None or not self.epsilon > 0):
            raise ValueError("epsilon must be > 0 (or give psr_db)")
        if not self.beta >= 1:
            raise ValueError("beta must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @classmethod
    def from_db(cls, psr_db: float, papr_db: float, iterations: int = 3) -> "AttackBudget":
        return cls(None, 10 ** (papr_db / 10), iterations, psr_db)

    @property
    def papr_db(self) -> float:
        return 10 * math.log10(self.beta)

    def epsilon_for(self, clean) -> np.ndarray:
        """Per-sample power limit for clean signal components ``(B, 2, N)``."""
        n = len(clean)
        if self.psr_db is None:
            return np.full(n, float(self.epsilon))
        return 10 ** (self.psr_db / 10) * np.asarray(power(clean)).reshape(n)


@dataclass
class AttackResult:
    """Batch attack output; arrays are ``(B, 2, N)`` and ``(B,)``."""

    adversarial_signal: np.ndarray
    perturbation: np.ndarray
    achieved_power: np.ndarray
    achieved_papr: np.ndarray
    iterations_used: int
    degenerate: np.ndarray  # samples whose gradient vanished; their perturbation is zero

    def __len__(self):
        return len(self.perturbation)


def _unpack(samples):
    if isinstance(samples, LabeledSample):
        clean = samples.clean if samples.clean is not None else samples.signal
        return samples.signal[None], samples.info_bits[None], clean[None]
    if isinstance(samples, SignalDataset):
        return samples.signals, samples.bits, samples.clean
    signals, bits, clean = samples
    return np.asarray(signals), np.asarray(bits), np.asarray(clean)


def _finish(r, delta, iterations, degenerate) -> AttackResult:
    m2 = _modulus_sq(delta)
    return AttackResult(r + delta, delta, np.mean(m2, axis=-1), _papr_of(m2), iterations, degenerate)


def _grad(model, x, labels) -> np.ndarray:
    return input_gradient(model, x.astype(np.float32), labels).astype(np.float64)


def _degenerate(g: np.ndarray, strict: bool) -> np.ndarray:
    dead = ~np.any(g != 0, axis=(-2, -1))
    if strict and dead.any():
        raise DegenerateGradientError(np.flatnonzero(dead))
    return dead


def _project(delta: np.ndarray, beta: float, alive: np.ndarray) -> np.ndarray:
    out = np.zeros_like(delta)
    if alive.any():
        out[alive] = power_normalize(papr_clip(delta[alive], beta))
    return out


def fgsm_attack(model: ReceiverModel, samples, budget: AttackBudget, strict: bool = True) -> AttackResult:
    """One sign-gradient step, normalized to power epsilon.

    Every component of the sign vector is +-1, so each complex sample has
    modulus sqrt(2) and the PAPR is already 1; no clipping is applied.
    With ``strict=False`` samples with a vanishing gradient get a zero
    perturbation and are flagged in ``degenerate`` instead of raising.
    """
    r, labels, clean = _unpack(samples)
    r = r.astype(np.float64)
    eps = budget.epsilon_for(clean)
    g = _grad(model, r, labels)
    dead = _degenerate(g, strict)
    delta = np.zeros_like(r)
    alive = ~dead
    if alive.any():
        delta[alive] = scale_to_power(power_normalize(np.sign(g[alive])), eps[alive])
    return _finish(r, delta, 1, dead)


def _iterative(model, samples, budget, strict, momentum: bool) -> AttackResult:
    r, labels, clean = _unpack(samples)
    r = r.astype(np.float64)
    eps = budget.epsilon_for(clean)
    root_eps = np.sqrt(eps)[:, None, None]
    acc = np.zeros_like(r)
    delta = np.zeros_like(r)
    r_adv = r
    dead = np.zeros(len(r), dtype=bool)
    for _ in range(budget.iterations):
        g = _grad(model, r_adv, labels)
        dead |= _degenerate(g, strict)
        if momentum:
            l1 = np.sum(np.abs(g), axis=(-2, -1), keepdims=True)
            acc = acc + np.divide(g, l1, out=np.zeros_like(g), where=l1 > 0)
            step = np.sign(acc)
        else:
            step = np.sign(g)
        alive = ~dead
        delta = np.where(alive[:, None, None], step + delta, 0.0)
        delta = _project(delta, budget.beta, alive)
        r_adv = r + root_eps * delta
    return _finish(r, root_eps * delta, budget.iterations, dead)


def mifgsm_attack(model: ReceiverModel, samples, budget: AttackBudget, strict: bool = True) -> AttackResult:
    """Momentum iterative FGSM.

    Per iteration: accumulate the L1-normalized gradient, add its sign to the
    running perturbation, clip PAPR, normalize power, and form
    ``r + sqrt(eps) * delta``.
    """
    return _iterative(model, samples, budget, strict, momentum=True)


def pgd_attack(model: ReceiverModel, samples, budget: AttackBudget, strict: bool = True) -> AttackResult:
    """Iterated sign-gradient steps, each taken at the current adversarial point.

    Same per-iteration projection as :func:`mifgsm_attack`. At ``T=1`` this is
    exactly FGSM (a constant-modulus sign vector is left alone by the clip).
    """
    return _iterative(model, samples, budget, strict, momentum=False)


def awgn_attack(samples, budget: AttackBudget, seed: int = 0, offset: int = 0) -> AttackResult:
    """Complex Gaussian perturbation scaled to power exactly epsilon.

    Sample ``i`` draws from ``default_rng((seed, offset + i))``.
    """
    r, _, clean = _unpack(samples)
    r = r.astype(np.float64)
    eps = budget.epsilon_for(clean)
    noise = np.stack([np.random.default_rng((seed, offset + i)).standard_normal(r.shape[1:])
                      for i in range(len(r))])
    delta = scale_to_power(power_normalize(noise), eps)
    return _finish(r, delta, 1, np.zeros(len(r), dtype=bool))


ATTACKS = {"fgsm": fgsm_attack, "mifgsm": mifgsm_attack, "pgd": pgd_attack}
