"""Binary containers for datasets (``AIRD``) and universal perturbations (``AIRU``).

Dataset layout (little-endian)::

    "AIRD" | version u32 | M u32 | N u32 | count u64
    count x ( ebn0_db f32 | M bits packed LSB-first | N x f32 I | N x f32 Q )

A universal perturbation file is a small metadata header followed by a
one-record dataset body holding the perturbation with zeroed label bits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import papr_clip, power_normalize
from .signal_chain import M_BITS, N_SAMPLES, SignalDataset

DATA_MAGIC = b"AIRD"
DATA_VERSION = 1
_DATA_HEADER = struct.Struct("<4sIIIQ")

UAP_MAGIC = b"AIRU"
UAP_VERSION = 1
_UAP_HEADER = struct.Struct("<4sIdddIIdI")


class FormatError(ValueError):
    pass


def _record_dtype(m: int, n: int) -> np.dtype:
    return np.dtype([("ebn0", "<f4"), ("bits", "u1", (m + 7) // 8), ("i", "<f4", (n,)), ("q", "<f4", (n,))])


def dataset_to_bytes(ds: SignalDataset) -> bytes:
    m, n = ds.bits.shape[1], ds.signals.shape[2]
    rec = np.zeros(len(ds), dtype=_record_dtype(m, n))
    rec["ebn0"] = ds.ebn0_db
    rec["bits"] = np.packbits(ds.bits, axis=1, bitorder="little")
    rec["i"] = ds.signals[:, 0]
    rec["q"] = ds.signals[:, 1]
    return _DATA_HEADER.pack(DATA_MAGIC, DATA_VERSION, m, n, len(ds)) + rec.tobytes()


def dataset_from_bytes(data: bytes) -> SignalDataset:
    if len(data) < _DATA_HEADER.size:
        raise FormatError("dataset file too short")
    magic, version, m, n, count = _DATA_HEADER.unpack_from(data)
    if magic != DATA_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != DATA_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if (m, n) != (M_BITS, N_SAMPLES):
        raise FormatError(f"unsupported frame shape M={m}, N={n}")
    dt = _record_dtype(m, n)
    body = data[_DATA_HEADER.size:]
    if len(body) != count * dt.itemsize:
        raise FormatError(f"expected {count} records ({count * dt.itemsize} bytes), found {len(body)} bytes")
    rec = np.frombuffer(body, dtype=dt, count=count)
    bits = np.unpackbits(rec["bits"], axis=1, count=m, bitorder="little")
    signals = np.stack([rec["i"], rec["q"]], axis=1)
    return SignalDataset(bits, signals, rec["ebn0"])


def save_dataset(ds: SignalDataset, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> SignalDataset:
    return dataset_from_bytes(Path(path).read_bytes())


@dataclass
class UapMetadata:
    subset_fraction: float
    desired_ber: float
    beta: float
    epochs_used: int
    reached_target: bool
    final_ber: float
    seed: int


def save_uap(delta: np.ndarray, meta: UapMetadata, path) -> None:
    head = _UAP_HEADER.pack(UAP_MAGIC, UAP_VERSION, meta.subset_fraction, meta.desired_ber, meta.beta,
                            meta.epochs_used, int(meta.reached_target), meta.final_ber, meta.seed)
    body = SignalDataset(np.zeros((1, M_BITS)), delta[None], np.zeros(1), clean=np.zeros((1, 2, N_SAMPLES)))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(head + dataset_to_bytes(body))


def load_uap(path) -> tuple[np.ndarray, UapMetadata]:
    """Load a universal perturbation, re-projecting it after float32 storage."""
    data = Path(path).read_bytes()
    if len(data) < _UAP_HEADER.size:
        raise FormatError("perturbation file too short")
    magic, version, frac, lam, beta, epochs, reached, final_ber, seed = _UAP_HEADER.unpack_from(data)
    if magic != UAP_MAGIC or version != UAP_VERSION:
        raise FormatError("not a universal perturbation file")
    ds = dataset_from_bytes(data[_UAP_HEADER.size:])
    if len(ds) != 1:
        raise FormatError("perturbation file must hold exactly one record")
    delta = power_normalize(papr_clip(ds.signals[0].astype(np.float64), beta))
    return delta, UapMetadata(frac, lam, beta, epochs, bool(reached), final_ber, seed)
