"""Multi-head neural receivers mapping an IQ frame to 32 bit decisions.

Every architecture takes ``(B, 2, 448)`` inputs and returns ``(B, 32, 2)``
probabilities: one softmax pair per information bit.  Smooth activations
(SiLU), batch norm and average pooling keep the input gradient well defined everywhere,
which the attacks and the finite-difference checks rely on.
"""

from __future__ import annotations

import hashlib
import io
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .signal_chain import M_BITS, N_SAMPLES, SignalDataset

log = logging.getLogger(__name__)

ARCHITECTURES = ("compact-conv", "resnet-like", "vgg16-like", "vgg19-like")
LOG_FLOOR = math.log(1e-12)


def _ch(base: int, width: float) -> int:
    return max(1, int(round(base * width)))


def _init_fan_in(module: nn.Module, gen: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv1d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=gen)


class _ConvAct(nn.Sequential):
    def __init__(self, cin, cout, k):
        super().__init__(nn.Conv1d(cin, cout, k, padding=k // 2), nn.BatchNorm1d(cout), nn.SiLU())


class _ResBlock(nn.Module):
    def __init__(self, cin, cout, k=5):
        super().__init__()
        self.conv1 = _ConvAct(cin, cout, k)
        self.conv2 = nn.Conv1d(cout, cout, k, padding=k // 2)
        self.bn2 = nn.BatchNorm1d(cout)
        self.skip = nn.Conv1d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        h = self.bn2(self.conv2(self.conv1(x)))
        return F.silu(h + self.skip(x))


def _trunk(architecture_id: str, width: float) -> tuple[nn.Sequential, int]:
    """Feature extractor reducing 448 samples to 56 positions (one per coded symbol)."""
    c = lambda n: _ch(n, width)  # noqa: E731
    pool = lambda: nn.AvgPool1d(2)  # noqa: E731
    if architecture_id == "compact-conv":
        layers = [_ConvAct(2, c(8), 9), pool(), _ConvAct(c(8), c(16), 5), pool(),
                  _ConvAct(c(16), c(16), 5), pool()]
        return nn.Sequential(*layers), c(16)
    if architecture_id == "resnet-like":
        layers = [_ConvAct(2, c(8), 7), _ResBlock(c(8), c(8)), pool(), _ResBlock(c(8), c(16)), pool(),
                  _ResBlock(c(16), c(16)), pool()]
        return nn.Sequential(*layers), c(16)
    if architecture_id in ("vgg16-like", "vgg19-like"):
        per_stage = (2, 2, 3) if architecture_id == "vgg16-like" else (2, 3, 4)
        widths = (c(8), c(16), c(16))
        layers, cin = [], 2
        for n_conv, cout in zip(per_stage, widths):
            for _ in range(n_conv):
                layers.append(_ConvAct(cin, cout, 5))
                cin = cout
            layers.append(pool())
        return nn.Sequential(*layers), cin
    raise ValueError(f"unknown architecture_id {architecture_id!r}; expected one of {ARCHITECTURES}")


class ReceiverModel(nn.Module):
    """Conv trunk, dense layer, and ``m_bits`` two-way softmax heads."""

    def __init__(self, architecture_id: str = "compact-conv", width: float = 1.0, hidden: int = 128,
                 m_bits: int = M_BITS):
        super().__init__()
        self.architecture_id = architecture_id
        self.width = float(width)
        self.hidden = int(hidden)
        self.m_bits = int(m_bits)
        self.trunk, cout = _trunk(architecture_id, width)
        n_pos = N_SAMPLES // 8
        self.dense = nn.Linear(cout * n_pos, self.hidden)
        self.heads = nn.Linear(self.hidden, 2 * self.m_bits)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2:] != (2, N_SAMPLES):
            raise ValueError(f"expected input shape (B, 2, {N_SAMPLES}), got {tuple(x.shape)}")
        h = self.trunk(x).flatten(1)
        h = F.silu(self.dense(h))
        return self.heads(h).view(-1, self.m_bits, 2)

    def log_probs(self, x: torch.Tensor) -> torch.Tensor:
        return F.log_softmax(self.logits(x), dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.logits(x), dim=-1)

    def n_layers(self) -> int:
        return sum(1 for m in self.modules() if isinstance(m, (nn.Conv1d, nn.Linear)))

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_receiver(architecture_id: str, seed: int, width: float = 1.0, hidden: int = 128) -> ReceiverModel:
    if architecture_id not in ARCHITECTURES:
        raise ValueError(f"unknown architecture_id {architecture_id!r}; expected one of {ARCHITECTURES}")
    model = ReceiverModel(architecture_id, width, hidden)
    gen = torch.Generator().manual_seed(int(seed))
    _init_fan_in(model, gen)
    return model.eval()


def _as_input(model: ReceiverModel, signal) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(np.asarray(signal), dtype=dtype)
    if x.dim() == 2:
        x = x.unsqueeze(0)
    return x


def _labels(bits) -> torch.Tensor:
    b = torch.as_tensor(np.asarray(bits, dtype=np.int64))
    return b.unsqueeze(0) if b.dim() == 1 else b


def bit_loss(log_probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-sample summed cross-entropy over heads, log clamped at log(1e-12)."""
    picked = log_probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    return -picked.clamp_min(LOG_FLOOR).sum(dim=-1)


@torch.no_grad()
def forward(model: ReceiverModel, signal) -> np.ndarray:
    """Probability pairs ``(32, 2)`` for one signal, or ``(B, 32, 2)`` for a batch."""
    single = np.ndim(signal) == 2
    out = model(_as_input(model, signal)).numpy()
    return out[0] if single else out


def loss(model: ReceiverModel, batch: SignalDataset | list) -> float:
    """Mean over the batch of the summed per-head cross-entropy."""
    if isinstance(batch, SignalDataset):
        signals, bits = batch.signals, batch.bits
    else:
        if len(batch) == 0:
            raise ValueError("empty batch")
        signals = np.stack([s.signal for s in batch])
        bits = np.stack([s.info_bits for s in batch])
    if len(signals) == 0:
        raise ValueError("empty batch")
    with torch.no_grad():
        return float(bit_loss(model.log_probs(_as_input(model, signals)), _labels(bits)).mean())


def input_gradient(model: ReceiverModel, signal, labels) -> np.ndarray:
    """Gradient of the per-sample loss w.r.t. the stacked (I, Q) input.

    Works on one signal ``(2, N)`` or a batch ``(B, 2, N)``; each sample's
    gradient is that of its own loss.
    """
    single = np.ndim(signal) == 2
    x = _as_input(model, signal).clone().requires_grad_(True)
    total = bit_loss(model.log_probs(x), _labels(labels)).sum()
    (g,) = torch.autograd.grad(total, x)
    g = g.numpy()
    return g[0] if single else g


def decide(probs) -> np.ndarray:
    """Bit decisions from ``(..., 2)`` probability pairs; a tie gives 0."""
    probs = np.asarray(probs)
    return (probs[..., 1] > probs[..., 0]).astype(np.uint8)


def predict_bits(model: ReceiverModel, signal, batch_size: int = 2048) -> np.ndarray:
    """Per-head argmax; ties resolve to bit 0."""
    signal = np.asarray(signal)
    if signal.ndim == 2:
        return predict_bits(model, signal[None], batch_size)[0]
    out = []
    with torch.no_grad():
        for i in range(0, len(signal), batch_size):
            logits = model.logits(_as_input(model, signal[i:i + batch_size]))
            out.append((logits[..., 1] > logits[..., 0]).numpy().astype(np.uint8))
    return np.concatenate(out) if out else np.zeros((0, model.m_bits), np.uint8)


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 8
    initial_lr: float = 0.001
    decay_every: int = 2
    decay_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.epochs, self.decay_every) <= 0 or self.initial_lr <= 0:
            raise ValueError("training config values must be positive")

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during (0-based) ``epoch``."""
        return self.initial_lr * self.decay_factor ** (epoch // self.decay_every)


def train(model: ReceiverModel, dataset: SignalDataset, cfg: TrainConfig | None = None,
          on_epoch=None) -> tuple[ReceiverModel, list[float]]:
    """Plain SGD on the summed per-head cross-entropy. Returns the model and per-epoch mean loss."""
    cfg = cfg or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    x_all = torch.from_numpy(dataset.signals).to(next(model.parameters()).dtype)
    y_all = torch.from_numpy(dataset.bits.astype(np.int64))
    opt = torch.optim.SGD(model.parameters(), lr=cfg.initial_lr, momentum=0.0)
    gen = torch.Generator().manual_seed(int(cfg.seed))
    history = []
    model.train()
    for epoch in range(cfg.epochs):
        for group in opt.param_groups:
            group["lr"] = cfg.lr_at(epoch)
        order = torch.randperm(len(dataset), generator=gen)
        total, count = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            batch_loss = bit_loss(model.log_probs(x_all[idx]), y_all[idx]).mean()
            opt.zero_grad()
            batch_loss.backward()
            opt.step()
            total += batch_loss.item() * len(idx)
            count += len(idx)
        history.append(total / count)
        log.info("epoch %d lr %.1e loss %.4f", epoch + 1, cfg.lr_at(epoch), history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    model.eval()
    return model, history


# Checkpoint container: header, named float32 tensors, trailing SHA-256 of everything before it.
CKPT_MAGIC = b"AIRM"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def save_checkpoint(model: ReceiverModel, path) -> str:
    """Write ``model`` to ``path``; returns the hex checksum."""
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<I", CKPT_VERSION))
    buf.write(_pack_str(model.architecture_id))
    buf.write(struct.pack("<IdI", model.m_bits, model.width, model.hidden))
    state = model.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, t in state.items():
        arr = t.detach().cpu().numpy().astype("<f4")
        buf.write(_pack_str(name))
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    body = buf.getvalue()
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)
    return digest.hex()


def load_checkpoint(path, expect_architecture: str | None = None) -> ReceiverModel:
    data = Path(path).read_bytes()
    if len(data) < 4 + 32 or data[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a receiver checkpoint")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupt)")
    view = memoryview(body)
    pos = 4

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, view, pos)
        pos += struct.calcsize(fmt)
        return vals

    def take_str():
        nonlocal pos
        (n,) = take("<I")
        s = bytes(view[pos:pos + n]).decode()
        pos += n
        return s

    try:
        (version,) = take("<I")
        if version != CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        arch = take_str()
        m_bits, width, hidden = take("<IdI")
        (n_tensors,) = take("<I")
        tensors = {}
        for _ in range(n_tensors):
            name = take_str()
            (ndim,) = take("<I")
            shape = take(f"<{ndim}I") if ndim else ()
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(shape)
            pos += 4 * count
            tensors[name] = torch.from_numpy(arr.astype(np.float32))
    except struct.error as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    if pos != len(body):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint")
    if expect_architecture is not None and arch != expect_architecture:
        raise CheckpointError(f"{path}: holds {arch!r}, expected {expect_architecture!r}")
    if m_bits != M_BITS:
        raise CheckpointError(f"{path}: m_bits={m_bits} unsupported")
    model = ReceiverModel(arch, width, hidden, m_bits)
    try:
        model.load_state_dict(tensors, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: tensor layout does not match {arch!r}: {exc}") from exc
    return model.eval()
