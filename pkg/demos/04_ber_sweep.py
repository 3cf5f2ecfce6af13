"""
BER versus SNR
==============

Sweep the classical detectors (plus the DNN if ``dnn_4x4_bpsk.json`` from
the previous demo exists) under perfect and imperfect CSI. All detectors
at one SNR point see the same channels, bits and noise.
"""

import math
import os

from mimodet.experiments import SweepConfig, run_ber_sweep
from mimodet.neuralnet import load_model

models, detectors = {}, ["zf", "mmse", "ml"]
if os.path.exists("dnn_4x4_bpsk.json"):
    models["dnn"] = load_model("dnn_4x4_bpsk.json")
    detectors.append("dnn")

for np_ep in (math.inf, 400):
    cfg = SweepConfig(4, 4, "bpsk", [0, 4, 8, 12], bits_per_point=40_000,
                      detectors=detectors, np_ep=np_ep, seed=7)
    res = run_ber_sweep(cfg, models)
    print("perfect CSI" if math.isinf(np_ep) else f"pilot budget {np_ep}")
    for p in res.points:
        print(f"  {p.detector:>5} {p.snr_db:5.1f} dB  BER {p.ber:.5f}  "
              f"[{p.ci_low:.5f}, {p.ci_high:.5f}]")
