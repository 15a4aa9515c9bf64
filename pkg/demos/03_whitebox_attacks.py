"""
White-box attacks at a fixed power budget
=========================================

Perturbations at PSR -5 dB and PAPR <= 2 dB, built from the receiver's own
gradient.  Gaussian noise of the same power is the control.  Run
``02_train_receiver.py`` first.
"""

from pathlib import Path

import numpy as np

from rxattack import (AttackBudget, awgn_attack, fgsm_attack, generate_dataset, load_checkpoint, mifgsm_attack, papr,
                      pgd_attack, predict_bits)

model = load_checkpoint(Path(__file__).parent / "out" / "compact-conv.airm")
test_set = generate_dataset([0.0, 4.0, 8.0], 1000, seed=1)
budget = AttackBudget.from_db(psr_db=-5.0, papr_db=2.0, iterations=3)

print("Eb/N0   clean    awgn    fgsm  mifgsm     pgd")
for e in test_set.ebn0_values():
    part = test_set.bucket(e)
    row = [np.mean(predict_bits(model, part.signals) != part.bits)]
    row.append(np.mean(predict_bits(model, awgn_attack(part, budget).adversarial_signal) != part.bits))
    for attack in (fgsm_attack, mifgsm_attack, pgd_attack):
        res = attack(model, part, budget)
        row.append(np.mean(predict_bits(model, res.adversarial_signal) != part.bits))
    print(f"{e:4.0f} dB " + " ".join(f"{v:7.4f}" for v in row))

# the sign perturbation has constant modulus; the iterative ones are clipped to the limit
res = pgd_attack(model, test_set[:5], budget)
print("FGSM PAPR", papr(fgsm_attack(model, test_set[:5], budget).perturbation))
print("PGD PAPR ", papr(res.perturbation), "limit", budget.beta)

# more iterations help for a while, then stop helping
part = test_set.bucket(4.0)
for t in (1, 2, 3, 5, 10):
    adv = pgd_attack(model, part, AttackBudget.from_db(-5.0, 2.0, t)).adversarial_signal
    print(f"T={t:2d}  PGD BER {np.mean(predict_bits(model, adv) != part.bits):.4f}")
