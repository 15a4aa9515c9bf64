"""
Transfer from a surrogate receiver
==================================

The attacker trains their own receiver with a different architecture and
crafts PGD perturbations on it.  The target is only queried for scoring.
Run ``02_train_receiver.py`` first.
"""

from pathlib import Path

import numpy as np

from rxattack import (AttackBudget, TrainConfig, awgn_attack, build_receiver, generate_dataset, load_checkpoint,
                      pgd_attack, predict_bits, train)

target = load_checkpoint(Path(__file__).parent / "out" / "compact-conv.airm")

# the surrogate sees data drawn independently of the target's training set
surrogate, _ = train(build_receiver("resnet-like", seed=1), generate_dataset([float(e) for e in range(9)], 3000, 7),
                     TrainConfig(initial_lr=0.02))
test_set = generate_dataset([0.0, 4.0, 8.0], 1000, seed=1)
budget = AttackBudget.from_db(-5.0, 2.0, 3)

for e in test_set.ebn0_values():
    part = test_set.bucket(e)
    white = np.mean(predict_bits(target, pgd_attack(target, part, budget).adversarial_signal) != part.bits)
    black = np.mean(predict_bits(target, pgd_attack(surrogate, part, budget).adversarial_signal) != part.bits)
    noise = np.mean(predict_bits(target, awgn_attack(part, budget).adversarial_signal) != part.bits)
    print(f"{e:3.0f} dB  awgn {noise:.4f}  transfer pgd {black:.4f}  white-box pgd {white:.4f}")
