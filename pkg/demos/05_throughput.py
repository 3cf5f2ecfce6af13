"""
Detection throughput
====================

Time every detector on one pre-generated workload (median of three runs).
Feature construction is inside the DNN's timed path.
"""

import os

from mimodet.channel import ChannelSpec, CsiSpec
from mimodet.detectors import get_detector
from mimodet.experiments import make_workload, run_throughput_bench
from mimodet.neuralnet import build_dnn, load_model

model = (load_model("dnn_4x4_bpsk.json") if os.path.exists("dnn_4x4_bpsk.json")
         else build_dnn(4, 4, "bpsk"))
dets = {name: get_detector(name, model=model) for name in ("zf", "mmse", "ml", "dnn")}

workload = make_workload(72_000, 8.0, ChannelSpec(4, 4), CsiSpec(), "bpsk", seed=3)
result = run_throughput_bench(dets, workload, repetitions=3)
print(result.to_csv())
