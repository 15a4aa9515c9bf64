"""BER / PSR metrics and batch evaluation of attacks across Eb/N0 buckets."""

from __future__ import annotations

import csv
import fcntl
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import attacks
from .attacks import AttackBudget, UndefinedInputError, power
from .receiver import ReceiverModel, predict_bits
from .signal_chain import M_BITS, SignalDataset

log = logging.getLogger(__name__)

METHODS = ("none", "awgn", "fgsm", "mifgsm", "pgd", "uap")
CSV_HEADER = ("method", "ebn0_db", "psr_db", "papr_db", "iterations", "num_samples", "ber", "stderr")


def ber(truth, recovered) -> float:
    truth = np.asarray(truth)
    recovered = np.asarray(recovered)
    if truth.ndim == 1:
        truth, recovered = truth[None], recovered[None] if recovered.ndim == 1 else recovered
    if truth.shape != recovered.shape or truth.shape[-1] != M_BITS or truth.shape[0] == 0:
        raise ValueError(f"bit stream shapes differ or are not (K, {M_BITS}): {truth.shape} vs {recovered.shape}")
    return float(np.count_nonzero(truth != recovered)) / truth.size


def psr(perturbation, clean_signal_component) -> float | np.ndarray:
    """Perturbation power over clean-component power (linear)."""
    p_sig = np.asarray(power(clean_signal_component))
    if np.any(p_sig <= 0):
        raise UndefinedInputError("PSR undefined for a zero clean component")
    out = np.asarray(power(perturbation)) / p_sig
    return float(out) if out.ndim == 0 else out


def psr_db(perturbation, clean_signal_component) -> float | np.ndarray:
    return 10 * np.log10(psr(perturbation, clean_signal_component))


def epsilon_from_psr(psr_db_value: float, clean_signal_component) -> float | np.ndarray:
    p_sig = np.asarray(power(clean_signal_component))
    if np.any(p_sig <= 0):
        raise UndefinedInputError("PSR undefined for a zero clean component")
    out = 10 ** (psr_db_value / 10) * p_sig
    return float(out) if out.ndim == 0 else out


def standard_error(ber_value: float, num_samples: int) -> float:
    return math.sqrt(ber_value * (1 - ber_value) / (num_samples * M_BITS))


@dataclass
class BerRow:
    method: str
    ebn0_db: float
    psr_db: float | None
    papr_db: float | None
    iterations: int
    num_samples: int
    ber: float
    flip_rate: float = field(default=float("nan"), compare=False)  # vs clean recoveries, not serialized

    def __post_init__(self):
        if not 0 <= self.ber <= 1 or self.num_samples <= 0:
            raise ValueError("ber must lie in [0, 1] and num_samples must be positive")

    @property
    def stderr(self) -> float:
        return standard_error(self.ber, self.num_samples)

    def key(self) -> tuple:
        return (self.method, _fmt(self.ebn0_db), _fmt(self.psr_db), _fmt(self.papr_db), self.iterations,
                self.num_samples)

    def csv_fields(self) -> list[str]:
        return [self.method, _fmt(self.ebn0_db), _fmt(self.psr_db), _fmt(self.papr_db), str(self.iterations),
                str(self.num_samples), _fmt(self.ber), _fmt(self.stderr)]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


class BerCurve(list):
    """A list of :class:`BerRow` with CSV round-tripping and lookup helpers."""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self:
            w.writerow(row.csv_fields())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BerCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError("not a BER curve CSV (header mismatch)")
        opt = lambda s: float(s) if s else None  # noqa: E731
        return cls(BerRow(r[0], float(r[1]), opt(r[2]), opt(r[3]), int(r[4]), int(r[5]), float(r[6]))
                   for r in rows[1:])

    def get(self, method: str, ebn0_db: float) -> BerRow:
        for row in self:
            if row.method == method and math.isclose(row.ebn0_db, ebn0_db):
                return row
        raise KeyError((method, ebn0_db))


def _apply_uap_batch(signals, clean, uap, budget: AttackBudget):
    eps = budget.epsilon_for(clean)
    return signals.astype(np.float64) + np.sqrt(eps)[:, None, None] * uap[None]


def adversarial_signals(method: str, dataset: SignalDataset, budget: AttackBudget | None,
                        gradient_model: ReceiverModel | None = None, uap: np.ndarray | None = None,
                        seed: int = 0, offset: int = 0) -> tuple[np.ndarray, int]:
    """Perturbed received signals for ``dataset`` and the number of degenerate-gradient samples."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "none":
        return dataset.signals, 0
    if budget is None:
        raise ValueError(f"method {method!r} needs a budget")
    if method == "awgn":
        return attacks.awgn_attack(dataset, budget, seed=seed, offset=offset).adversarial_signal, 0
    if method == "uap":
        if uap is None:
            raise ValueError("method 'uap' needs a perturbation")
        return _apply_uap_batch(dataset.signals, dataset.clean, uap, budget), 0
    if gradient_model is None:
        raise ValueError(f"method {method!r} needs a gradient model")
    res = attacks.ATTACKS[method](gradient_model, dataset, budget, strict=False)
    return res.adversarial_signal, int(res.degenerate.sum())


def evaluate_attack(target_model: ReceiverModel, gradient_model: ReceiverModel | None, dataset: SignalDataset,
                    method: str, budget: AttackBudget | None, seed: int = 0, uap: np.ndarray | None = None,
                    label: str | None = None, batch_size: int = 500) -> BerCurve:
    """BER per Eb/N0 bucket of ``target_model`` under ``method``.

    Perturbations come from ``gradient_model`` (the target itself for
    white-box runs, a surrogate for transfer runs). BER is measured against
    the true bits; ``flip_rate`` against the target's clean recoveries.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    label = label or method
    curve = BerCurve()
    for e in dataset.ebn0_values():
        idx = np.flatnonzero(np.isclose(dataset.ebn0_db, e))
        errors = flips = degenerate = 0
        for start in range(0, len(idx), batch_size):
            part = dataset[idx[start:start + batch_size]]
            adv, n_dead = adversarial_signals(method, part, budget, gradient_model, uap, seed, int(idx[start]))
            degenerate += n_dead
            rec = predict_bits(target_model, adv)
            errors += np.count_nonzero(rec != part.bits)
            if method != "none":
                flips += np.count_nonzero(rec != predict_bits(target_model, part.signals))
        if degenerate:
            log.warning("%s @ %.1f dB: %d sample(s) with vanishing gradient left unperturbed", label, e, degenerate)
        n = len(idx)
        curve.append(BerRow(label, e, None if budget is None or method == "none" else budget.psr_db,
                            None if budget is None or method in ("none", "awgn") else budget.papr_db,
                            budget.iterations if budget is not None and method in ("mifgsm", "pgd") else 1,
                            n, errors / (n * M_BITS), flips / (n * M_BITS)))
        log.info("%s @ %.1f dB: BER %.4g (flip rate %.4g, n=%d)", label, e, curve[-1].ber, curve[-1].flip_rate, n)
    return curve


def write_csv(path, rows: Iterable[BerRow]) -> int:
    """Append rows to ``path`` (creating it with the header), skipping keys already present.

    Returns the number of rows written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a+", newline="") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        fh.seek(0)
        text = fh.read()
        existing = BerCurve.from_csv(text) if text else BerCurve()
        seen = {r.key() for r in existing}
        w = csv.writer(fh, lineterminator="\n")
        if not text:
            w.writerow(CSV_HEADER)
        n = 0
        for row in rows:
            if row.key() in seen:
                continue
            w.writerow(row.csv_fields())
            seen.add(row.key())
            n += 1
        fcntl.flock(fh, fcntl.LOCK_UN)
    return n
