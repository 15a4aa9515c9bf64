"""Adversarial attacks on neural baseband receivers, at desk scale.

Submodules: ``signal_chain`` (waveforms and a classical reference receiver),
``receiver`` (multi-head neural receivers), ``attacks`` (constrained FGSM /
MI-FGSM / PGD / AWGN), ``uap`` (universal perturbations), ``metrics`` (BER,
PSR and sweeps), ``storage`` (binary formats) and ``cli``.
"""

from .attacks import (AttackBudget, AttackResult, DegenerateGradientError, UndefinedInputError, awgn_attack,
                      fgsm_attack, mifgsm_attack, papr, papr_clip, pgd_attack, power, power_normalize,
                      scale_to_power)
from .metrics import BerCurve, BerRow, ber, epsilon_from_psr, evaluate_attack, psr
from .receiver import (ARCHITECTURES, ReceiverModel, TrainConfig, build_receiver, input_gradient, load_checkpoint,
                       predict_bits, save_checkpoint, train)
from .signal_chain import (ChannelConfig, LabeledSample, SignalDataset, apply_channel, bpsk_modulate,
                           classical_receiver, generate_bits, generate_dataset, hamming74_decode, hamming74_encode,
                           noise_sigma_from_ebn0, pulse_shape, symbol_centers, transmit)
from .storage import UapMetadata, load_dataset, load_uap, save_dataset, save_uap
from .uap import UapConfig, UapReport, apply_uap, build_uap, select_subset

__version__ = "0.1.0"
