"""
One perturbation for every frame
================================

A universal perturbation is grown on a slice of training data and then added,
unchanged, to unseen frames.  No gradient is needed at attack time.
Run ``02_train_receiver.py`` first.
"""

from pathlib import Path

import numpy as np

from rxattack import (AttackBudget, UapConfig, UapMetadata, apply_uap, build_uap, generate_dataset, load_checkpoint,
                      load_uap, papr, predict_bits, save_uap, select_subset)

out = Path(__file__).parent / "out"
model = load_checkpoint(out / "compact-conv.airm")
pool = generate_dataset([float(e) for e in range(9)], 500, seed=3)
test_set = generate_dataset([0.0, 4.0, 8.0], 1000, seed=1)

for frac in (0.05, 0.25, 0.45):
    cfg = UapConfig(AttackBudget.from_db(-5.0, 2.0), subset_fraction=frac, seed=0)
    delta, report = build_uap(model, select_subset(pool, cfg), cfg)
    bers = []
    for e in test_set.ebn0_values():
        part = test_set.bucket(e)
        adv = apply_uap(part.signals, delta, cfg.budget.epsilon_for(part.clean))
        bers.append(np.mean(predict_bits(model, adv) != part.bits))
    print(f"subset {frac:.0%}: {report.updates} updates, {report.terminated_by}, "
          f"PAPR {papr(delta):.3f}, test BER " + " ".join(f"{b:.4f}" for b in bers))

save_uap(delta, UapMetadata(cfg.subset_fraction, cfg.desired_ber, cfg.budget.beta, report.epochs_used,
                            report.reached_target, report.final_ber, cfg.seed), out / "uap.airu")
print("reloaded PAPR", papr(load_uap(out / "uap.airu")[0]))
