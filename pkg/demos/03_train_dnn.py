"""
Training the neural detector
============================

Generate 1e5 training samples at 8 dB, train the 512-256-128-64 network
for ten epochs (about a minute) and save it. At this size the network
overfits and ends up close to MMSE in the sweep demo. With 2e5 samples
it clearly beats MMSE, and those are the settings the acceptance run uses.
"""

import logging
import sys

from mimodet.channel import ChannelSpec, CsiSpec
from mimodet.experiments import generate_dataset
from mimodet.neuralnet import TrainingConfig, build_dnn, save_model, train

logging.basicConfig(level=logging.INFO, stream=sys.stdout, format="%(message)s")

spec = ChannelSpec(4, 4)
train_set = generate_dataset(100_000, 8.0, CsiSpec(), spec, "bpsk", seed=1)
val_set = generate_dataset(10_000, 8.0, CsiSpec(), spec, "bpsk", seed=2)
print("features per sample:", train_set.features.shape[1])

model = build_dnn(4, 4, "bpsk", seed=3)
print("parameters:", model.n_parameters())

best, history = train(model, train_set, val_set, TrainingConfig(max_epochs=10, seed=4))
print("best epoch", history.best_epoch, "val loss", round(history.best_val_loss, 5))
save_model(best, "dnn_4x4_bpsk.json")
