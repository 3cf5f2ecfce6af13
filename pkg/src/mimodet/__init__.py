"""Link-level MIMO detection: Rayleigh channels, classical and neural detectors."""

__version__ = "0.1.0"

from .channel import (BlockFadingSpec, ChannelSpec, CorrelationSpec, CsiEstimate, CsiSpec,
                      NoiseSpec, noise_variance)
from .detectors import (DetectionInput, DetectionOutput, NeuralDetector, SerCounter,
                        count_errors, detect_ml, detect_mmse, detect_zf, get_detector)
from .experiments import (SweepConfig, generate_dataset, run_ber_sweep,
                          run_throughput_bench, siso_rayleigh_bpsk_ber)
from .features import build_features
from .modem import BPSK, QPSK, demodulate_hard, modulate
from .neuralnet import TrainingConfig, build_dnn, load_model, save_model, train
from .numerics import SeededRng
