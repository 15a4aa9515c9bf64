"""
From bits to IQ samples and back
================================

32 information bits go through Hamming(7,4), BPSK and raised-cosine shaping
to become a 448-sample complex baseband frame.  The classical receiver
reads one sample per symbol and decodes the result.
"""

import numpy as np

from rxattack import (classical_receiver, generate_dataset, hamming74_encode, noise_sigma_from_ebn0,
                      symbol_centers, transmit)

rng = np.random.default_rng(0)
bits = rng.integers(0, 2, 32).astype(np.uint8)
print("info bits :", "".join(map(str, bits)))
print("codeword  :", "".join(map(str, hamming74_encode(bits))))

x = transmit(bits)
print("frame shape", x.shape, "power", np.mean(x[0] ** 2 + x[1] ** 2))

# symbol-center amplitudes carry the coded bits; everything between them is pulse tails
centers = x[0, symbol_centers()]
print("center amplitude range", np.abs(centers).min(), np.abs(centers).max())
assert np.array_equal(classical_receiver(x), bits)

# noise variance per complex sample at a few operating points
for e in (0, 4, 8):
    print(f"Eb/N0 {e} dB -> sigma^2 = {noise_sigma_from_ebn0(e):.3f}")

# Monte-Carlo BER of the classical receiver
ds = generate_dataset([0.0, 2.0, 4.0, 6.0, 8.0], 1000, seed=1)
for e in ds.ebn0_values():
    part = ds.bucket(e)
    print(f"{e:4.1f} dB  classical BER {np.mean(classical_receiver(part.signals) != part.bits):.4f}")
