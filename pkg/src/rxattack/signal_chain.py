"""Waveform generation: bits -> Hamming(7,4) -> BPSK -> raised cosine -> channel.

Signals are numpy arrays shaped ``(2, N)`` (rows are I and Q) or batches
shaped ``(B, 2, N)``.  A hard-decision classical receiver is included as a
reference for the neural receiver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

M_BITS = 32
CODED_BITS = 56
SPS = 8
N_SAMPLES = CODED_BITS * SPS
ROLLOFF = 0.5
SPAN_SYMBOLS = 8

# Systematic generator G = [I4 | P] and parity-check H = [P^T | I3].
PARITY = np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=np.uint8)
G74 = np.hstack([np.eye(4, dtype=np.uint8), PARITY])
H74 = np.hstack([PARITY.T, np.eye(3, dtype=np.uint8)])


@dataclass(frozen=True)
class ChannelConfig:
    ebn0_db: float
    freq_offset: float = 0.0
    phase_offset: float = 0.0
    impulse_response: Sequence[complex] | None = None

    def __post_init__(self):
        if not np.isfinite(self.ebn0_db):
            raise ValueError("ebn0_db must be finite")
        if self.impulse_response is not None and len(self.impulse_response) == 0:
            raise ValueError("impulse_response must be non-empty")


@dataclass(frozen=True)
class LabeledSample:
    info_bits: np.ndarray  # (32,) uint8
    signal: np.ndarray  # (2, 448) float32, received
    ebn0_db: float
    clean: np.ndarray | None = field(default=None, compare=False)  # noise-free component


def _check_bits(bits, length=None, name="bits"):
    bits = np.asarray(bits)
    if length is not None and bits.shape[-1] != length:
        raise ValueError(f"{name} must have length {length}, got {bits.shape[-1]}")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1")
    return bits.astype(np.uint8)


def generate_bits(m: int, rng: np.random.Generator) -> np.ndarray:
    if m <= 0:
        raise ValueError("m must be positive")
    return rng.integers(0, 2, size=m, dtype=np.uint8)


def hamming74_encode(info) -> np.ndarray:
    """Encode 32 information bits (or a batch ``(B, 32)``) into 56 coded bits."""
    info = _check_bits(info, M_BITS, "info")
    nibbles = info.reshape(*info.shape[:-1], M_BITS // 4, 4)
    code = (nibbles.astype(np.int64) @ G74) % 2
    return code.reshape(*info.shape[:-1], CODED_BITS).astype(np.uint8)


# syndrome (as integer s0*4 + s1*2 + s2) -> position of the flipped bit, -1 for none
_SYNDROME_POS = np.full(8, -1, dtype=np.int64)
for _pos in range(7):
    _s = H74[:, _pos]
    _SYNDROME_POS[_s[0] * 4 + _s[1] * 2 + _s[2]] = _pos


def hamming74_decode(coded) -> np.ndarray:
    """Syndrome-decode 56 coded bits (or ``(B, 56)``), correcting one error per codeword."""
    coded = _check_bits(coded, CODED_BITS, "coded")
    words = coded.reshape(*coded.shape[:-1], CODED_BITS // 7, 7).astype(np.int64)
    syn = (words @ H74.T) % 2
    pos = _SYNDROME_POS[syn[..., 0] * 4 + syn[..., 1] * 2 + syn[..., 2]]
    flip = (pos[..., None] == np.arange(7)).astype(np.int64)
    fixed = (words + flip) % 2
    return fixed[..., :4].reshape(*coded.shape[:-1], M_BITS).astype(np.uint8)


def bpsk_modulate(coded) -> np.ndarray:
    """Map bit 0 -> +1, bit 1 -> -1 (complex symbols)."""
    coded = _check_bits(coded)
    if coded.shape[-1] == 0:
        raise ValueError("cannot modulate an empty bit stream")
    return (1.0 - 2.0 * coded).astype(np.complex128)


def raised_cosine_taps(sps: int = SPS, rolloff: float = ROLLOFF, span_symbols: int = SPAN_SYMBOLS) -> np.ndarray:
    """Raised-cosine impulse response with ``span_symbols * sps + 1`` taps and unit peak."""
    if sps < 1:
        raise ValueError("sps must be >= 1")
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must lie in [0, 1]")
    if span_symbols < 2 or span_symbols % 2:
        raise ValueError("span_symbols must be even and >= 2")
    t = np.arange(-span_symbols * sps // 2, span_symbols * sps // 2 + 1) / sps
    h = np.sinc(t)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * t) ** 2
        singular = np.isclose(denom, 0.0)
        safe = np.where(singular, 1.0, denom)
        h = np.where(singular, np.pi / 4 * np.sinc(1.0 / (2 * rolloff)), h * np.cos(np.pi * rolloff * t) / safe)
    return h


def pulse_basis(n_symbols: int = CODED_BITS, sps: int = SPS, rolloff: float = ROLLOFF,
                span_symbols: int = SPAN_SYMBOLS) -> np.ndarray:
    """Matrix ``(n_symbols, n_symbols * sps)`` whose row k is the pulse for symbol k.

    Symbol k peaks at sample ``k * sps + sps // 2``; tails outside the frame are dropped.
    """
    taps = raised_cosine_taps(sps, rolloff, span_symbols)
    half = len(taps) // 2
    n = n_symbols * sps
    basis = np.zeros((n_symbols, n))
    for k in range(n_symbols):
        center = k * sps + sps // 2
        lo, hi = max(0, center - half), min(n, center + half + 1)
        basis[k, lo:hi] = taps[lo - center + half:hi - center + half]
    return basis


def pulse_shape(symbols, sps: int = SPS, rolloff: float = ROLLOFF, span_symbols: int = SPAN_SYMBOLS) -> np.ndarray:
    """Shape complex symbols ``(..., K)`` into unit-power IQ signals ``(..., 2, K * sps)``."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    basis = pulse_basis(symbols.shape[-1], sps, rolloff, span_symbols)
    x = symbols @ basis
    p = np.mean(np.abs(x) ** 2, axis=-1, keepdims=True)
    x = x / np.sqrt(p)
    return np.stack([x.real, x.imag], axis=-2)


def noise_sigma_from_ebn0(ebn0_db: float, signal_power: float = 1.0, n_samples: int = N_SAMPLES,
                          n_info_bits: int = M_BITS) -> float:
    """Per-complex-sample noise variance, with Eb = received signal energy / information bits."""
    return signal_power * n_samples / (n_info_bits * 10.0 ** (ebn0_db / 10.0))


def apply_channel(x: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator | None,
                  noise_var: float | None = None) -> np.ndarray:
    """Pass ``(2, N)`` signals through taps, frequency/phase offset and AWGN.

    ``noise_var`` overrides the Eb/N0-derived variance (0 gives a noiseless channel);
    otherwise the variance is derived from the signal's own power.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("empty signal")
    z = x[..., 0, :] + 1j * x[..., 1, :]
    n = z.shape[-1]
    if cfg.impulse_response is not None:
        taps = np.asarray(cfg.impulse_response, dtype=np.complex128)
        z = np.apply_along_axis(lambda row: np.convolve(row, taps)[:n], -1, z)
    if cfg.freq_offset or cfg.phase_offset:
        z = z * np.exp(1j * (2 * np.pi * cfg.freq_offset * np.arange(n) + cfg.phase_offset))
    if noise_var is None:
        p = float(np.mean(np.abs(x[..., 0, :] + 1j * x[..., 1, :]) ** 2))
        noise_var = noise_sigma_from_ebn0(cfg.ebn0_db, p, n, M_BITS)
    if noise_var > 0:
        if rng is None:
            raise ValueError("rng required for a noisy channel")
        w = rng.standard_normal((2,) + z.shape) * np.sqrt(noise_var / 2)
        z = z + w[0] + 1j * w[1]
    return np.stack([z.real, z.imag], axis=-2)


def symbol_centers(n_symbols: int = CODED_BITS, sps: int = SPS) -> np.ndarray:
    return np.arange(n_symbols) * sps + sps // 2


def classical_receiver(r) -> np.ndarray:
    """Sample I at symbol centers, slice, and Hamming-decode. Accepts ``(2, 448)`` or a batch."""
    r = np.asarray(r)
    if r.shape[-1] != N_SAMPLES or r.shape[-2] != 2:
        raise ValueError(f"expected signal shape (..., 2, {N_SAMPLES}), got {r.shape}")
    hard = (r[..., 0, symbol_centers()] < 0).astype(np.uint8)
    return hamming74_decode(hard)


def transmit(info_bits) -> np.ndarray:
    """Noise-free transmitted waveform for information bits ``(..., 32)``."""
    return pulse_shape(bpsk_modulate(hamming74_encode(info_bits)))


class SignalDataset:
    """Column-oriented collection of labeled samples.

    ``bits`` is ``(K, 32)`` uint8, ``signals`` is ``(K, 2, 448)`` float32 and
    ``ebn0_db`` is ``(K,)`` float32.  ``clean`` holds the noise-free component
    used as the PSR reference.
    """

    def __init__(self, bits, signals, ebn0_db, clean=None):
        self.bits = np.ascontiguousarray(bits, dtype=np.uint8)
        self.signals = np.ascontiguousarray(signals, dtype=np.float32)
        self.ebn0_db = np.ascontiguousarray(ebn0_db, dtype=np.float32)
        if clean is None:
            clean = transmit(self.bits)
        self.clean = np.ascontiguousarray(clean, dtype=np.float32)
        k = len(self.bits)
        if not (self.signals.shape == (k, 2, N_SAMPLES) and self.ebn0_db.shape == (k,)
                and self.bits.shape == (k, M_BITS) and self.clean.shape == self.signals.shape):
            raise ValueError("inconsistent dataset shapes")

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, i) -> LabeledSample | "SignalDataset":
        if isinstance(i, (int, np.integer)):
            return LabeledSample(self.bits[i], self.signals[i], float(self.ebn0_db[i]), self.clean[i])
        return SignalDataset(self.bits[i], self.signals[i], self.ebn0_db[i], self.clean[i])

    def __iter__(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self[i]

    def ebn0_values(self) -> list[float]:
        return sorted(set(float(v) for v in self.ebn0_db))

    def bucket(self, ebn0_db: float) -> "SignalDataset":
        return self[np.flatnonzero(np.isclose(self.ebn0_db, ebn0_db))]

    def subset(self, fraction: float, seed: int) -> "SignalDataset":
        if not 0 < fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        rng = np.random.default_rng(seed)
        n = max(1, int(round(fraction * len(self))))
        return self[np.sort(rng.choice(len(self), size=n, replace=False))]

    @classmethod
    def concat(cls, parts: Sequence["SignalDataset"]) -> "SignalDataset":
        return cls(np.concatenate([p.bits for p in parts]), np.concatenate([p.signals for p in parts]),
                   np.concatenate([p.ebn0_db for p in parts]), np.concatenate([p.clean for p in parts]))


def generate_dataset(ebn0_list: Sequence[float], count_per_ebn0: int, seed: int,
                     channel: ChannelConfig | None = None) -> SignalDataset:
    """Generate ``count_per_ebn0`` samples for each Eb/N0 value.

    Sample ``j`` draws its bits and noise from ``default_rng((seed, j))``, so the
    result does not depend on how generation is scheduled.
    """
    if count_per_ebn0 <= 0 or len(ebn0_list) == 0:
        raise ValueError("need at least one Eb/N0 value and a positive count")
    total = len(ebn0_list) * count_per_ebn0
    bits = np.empty((total, M_BITS), dtype=np.uint8)
    noise = np.empty((total, 2, N_SAMPLES))
    for j in range(total):
        rng = np.random.default_rng((seed, j))
        bits[j] = generate_bits(M_BITS, rng)
        noise[j] = rng.standard_normal((2, N_SAMPLES))
    ebn0 = np.repeat(np.asarray(ebn0_list, dtype=np.float64), count_per_ebn0)
    x = transmit(bits)
    if channel is not None and (channel.impulse_response is not None or channel.freq_offset
                                or channel.phase_offset):
        base = ChannelConfig(0.0, channel.freq_offset, channel.phase_offset, channel.impulse_response)
        x = np.stack([apply_channel(xi, base, None, noise_var=0.0) for xi in x])
    p = np.mean(np.sum(x ** 2, axis=-2), axis=-1)
    var = noise_sigma_from_ebn0(ebn0, p, N_SAMPLES, M_BITS)
    r = x + noise * np.sqrt(var / 2)[:, None, None]
    return SignalDataset(bits, r, ebn0, x)
