"""
Training a small neural receiver
================================

A compact convolutional receiver learns the 448 -> 32 bit mapping directly.
The scale here is reduced so the script finishes in a few minutes on a CPU;
the acceptance suite uses 20,000 frames per Eb/N0.
"""

from pathlib import Path

import numpy as np

from rxattack import TrainConfig, build_receiver, classical_receiver, generate_dataset, predict_bits, save_checkpoint, train

OUT = Path(__file__).parent / "out"
train_set = generate_dataset([float(e) for e in range(9)], 3000, seed=0)
test_set = generate_dataset([0.0, 4.0, 8.0], 1000, seed=1)

# plain SGD needs a larger step than 1e-3 when there are this few batches
cfg = TrainConfig(batch_size=256, epochs=8, initial_lr=0.02, decay_every=2)
model, history = train(build_receiver("compact-conv", seed=0), train_set, cfg,
                       on_epoch=lambda i, v: print(f"epoch {i + 1}: loss {v:.3f}"))
print(f"{model.n_params()} parameters")

for e in test_set.ebn0_values():
    part = test_set.bucket(e)
    nn = np.mean(predict_bits(model, part.signals) != part.bits)
    cl = np.mean(classical_receiver(part.signals) != part.bits)
    print(f"{e:3.0f} dB  neural {nn:.4f}  classical {cl:.4f}")

OUT.mkdir(exist_ok=True)
print("sha256", save_checkpoint(model, OUT / "compact-conv.airm"))
