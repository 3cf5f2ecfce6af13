"""Dataset generation, paired BER-vs-SNR sweeps and throughput benchmarks."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import io
import json
import math
import statistics
import time

import numpy as np

from .channel import (SNR_CONVENTION, BlockFadingSpec, ChannelSpec, CorrelationSpec,
                      CsiSpec, apply_channel, block_channels, corrupt_csi, noise_variance)
from .detectors import DetectionInput, SerCounter, count_errors, get_detector
from .errors import FormatError, ParameterError
from .features import build_features, feature_width
from .modem import get_scheme, modulate
from .numerics import SeededRng, derive_seed

CHUNK_SLOTS = 65536
WILSON_Z = statistics.NormalDist().inv_cdf(0.975)
DATASET_FORMAT = "mimodet-dataset"
DATASET_VERSION = 1
# salt for the stream that replaces bits of erased (singular) slots
_ERASURE_SALT = 0x5EED_E4A5


@dataclass
class LinkBatch:
    """One chunk of simulated slots; arrays are indexed by slot first."""

    h: np.ndarray
    csi: object
    bits: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sigma_n_sq: float
    channel_index: np.ndarray

    def __len__(self):
        return len(self.bits)


def simulate_link(rng, n_slots, snr_db, channel_spec, csi_spec, scheme, chunk_slots=CHUNK_SLOTS):
    """Yield LinkBatch chunks covering ``n_slots`` slots.

    Per chunk the stream is consumed as: channels, bits, noise, CSI error.
    The CSI error is drawn even for perfect CSI, so perfect and imperfect
    runs with one seed see identical H, bits and noise.
    """
    scheme = get_scheme(scheme)
    n_t = channel_spec.n_t
    period = channel_spec.block.period_t
    step = max(period, (chunk_slots // period) * period)
    sigma_n_sq = noise_variance(snr_db, n_t)
    sigma_e_sq = csi_spec.sigma_e_sq(n_t)
    done, block_offset = 0, 0
    while done < n_slots:
        n = min(step, n_slots - done)
        h, index = block_channels(rng, n, channel_spec)
        bits = rng.bits((n, scheme.bits_per_symbol * n_t))
        x = modulate(bits, scheme)
        y = apply_channel(h, x, sigma_n_sq, rng)
        csi = corrupt_csi(h, sigma_e_sq, rng)
        yield LinkBatch(h, csi, bits, x, y, sigma_n_sq, index + block_offset)
        done += n
        block_offset += -(-n // period)


# -- datasets -----------------------------------------------------------------

@dataclass
class Dataset:
    features: np.ndarray
    bits: np.ndarray
    snr_db: np.ndarray
    csi_error_variance: np.ndarray
    channel_index: np.ndarray
    header: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.bits)

    def record_dtype(self):
        return _record_dtype(self.features.shape[1], self.bits.shape[1])


def _record_dtype(width, n_bits):
    return np.dtype([
        ("features", "<f8", (width,)),
        ("bits", "u1", (n_bits,)),
        ("snr_db", "<f8"),
        ("csi_error_variance", "<f8"),
        ("channel_index", "<i8"),
    ])


def generate_dataset(n_samples, snr_db, csi_spec, channel_spec, scheme, seed):
    """Simulate ``n_samples`` slots and return their features and target bits."""
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    scheme = get_scheme(scheme)
    rng = SeededRng(seed)
    parts = []
    for batch in simulate_link(rng, n_samples, snr_db, channel_spec, csi_spec, scheme):
        parts.append((build_features(batch.y, batch.csi), batch.bits, batch.channel_index))
    feats = np.concatenate([p[0] for p in parts])
    bits = np.concatenate([p[1] for p in parts])
    index = np.concatenate([p[2] for p in parts])
    sigma_e_sq = csi_spec.sigma_e_sq(channel_spec.n_t)
    header = {
        "format": DATASET_FORMAT, "format_version": DATASET_VERSION,
        "n_t": channel_spec.n_t, "n_r": channel_spec.n_r, "scheme": scheme.name,
        "snr_db": float(snr_db), "snr_convention": SNR_CONVENTION,
        "np_ep": "perfect" if csi_spec.perfect else float(csi_spec.np_ep),
        "sigma_e_sq": sigma_e_sq,
        "rho": channel_spec.correlation.rho, "period_t": channel_spec.block.period_t,
        "seed": int(seed), "n_samples": int(n_samples),
        "feature_width": feats.shape[1], "n_bits": bits.shape[1],
    }
    return Dataset(feats, bits, np.full(n_samples, float(snr_db)),
                   np.full(n_samples, sigma_e_sq), index, header)


def write_dataset(dataset, path):
    """JSON header line followed by little-endian fixed-width records."""
    rec = np.empty(len(dataset), dtype=dataset.record_dtype())
    rec["features"] = dataset.features
    rec["bits"] = dataset.bits
    rec["snr_db"] = dataset.snr_db
    rec["csi_error_variance"] = dataset.csi_error_variance
    rec["channel_index"] = dataset.channel_index
    header = dict(dataset.header, record_bytes=rec.dtype.itemsize)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(rec.tobytes())


def read_dataset(path):
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
            if header.get("format") != DATASET_FORMAT:
                raise FormatError(f"{path}: not a dataset file")
            if header.get("format_version") != DATASET_VERSION:
                raise FormatError(f"{path}: unsupported dataset version")
            dtype = _record_dtype(header["feature_width"], header["n_bits"])
            count = int(header["n_samples"])
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise FormatError(f"{path}: bad dataset header ({exc})") from exc
        payload = fh.read()
    if len(payload) != count * dtype.itemsize:
        raise FormatError(f"{path}: expected {count} records, file holds {len(payload)} bytes")
    rec = np.frombuffer(payload, dtype=dtype)
    return Dataset(rec["features"].astype(np.float64), rec["bits"].copy(),
                   rec["snr_db"].copy(), rec["csi_error_variance"].copy(),
                   rec["channel_index"].copy(), header)


# -- BER sweeps ---------------------------------------------------------------

def wilson_interval(errors, n, z=WILSON_Z):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    p = errors / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass
class SweepConfig:
    n_t: int
    n_r: int
    scheme: str
    snr_db_list: list
    bits_per_point: int = 100_000
    detectors: list = field(default_factory=lambda: ["zf", "mmse", "ml"])
    np_ep: float = math.inf
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    block_fading: BlockFadingSpec = field(default_factory=BlockFadingSpec)
    seed: int = 0
    mmse_equivalent_noise: bool = False

    def __post_init__(self):
        if not self.snr_db_list:
            raise ParameterError("snr_db_list must not be empty")
        if self.bits_per_point < 10_000:
            raise ParameterError("bits_per_point must be >= 1e4")

    @property
    def channel_spec(self):
        return ChannelSpec(self.n_t, self.n_r, self.correlation, self.block_fading)

    @property
    def csi_spec(self):
        return CsiSpec(self.np_ep)


@dataclass
class BerPoint:
    detector: str
    snr_db: float
    bits: int
    bit_errors: int
    symbols: int
    symbol_errors: int
    ci_low: float
    ci_high: float
    erased_slots: int = 0

    @property
    def ber(self):
        return self.bit_errors / self.bits

    @property
    def ser(self):
        return self.symbol_errors / self.symbols


@dataclass
class BerResult:
    points: list
    snr_convention: str = SNR_CONVENTION

    def get(self, detector, snr_db):
        for p in self.points:
            if p.detector == detector and p.snr_db == snr_db:
                return p
        raise KeyError((detector, snr_db))

    def curve(self, detector):
        pts = sorted((p for p in self.points if p.detector == detector), key=lambda p: p.snr_db)
        return np.array([p.snr_db for p in pts]), np.array([p.ber for p in pts])

    def to_csv(self):
        buf = io.StringIO()
        buf.write("detector,snr_db,bits,bit_errors,ber,ci_low,ci_high\n")
        for p in self.points:
            buf.write(f"{p.detector},{p.snr_db!r},{p.bits},{p.bit_errors},"
                      f"{p.ber!r},{p.ci_low!r},{p.ci_high!r}\n")
        return buf.getvalue()


def _resolve_detectors(config, models, custom):
    models = models or {}
    dets = {}
    for name in config.detectors:
        if custom and name in custom:
            dets[name] = custom[name]
        else:
            det = get_detector(name, model=models.get(name),
                               mmse_equivalent_noise=config.mmse_equivalent_noise,
                               on_singular="erase")
            dets[name] = lambda inp, batch, det=det: det(inp)
    width = feature_width(config.n_t, config.n_r)
    for name, model in models.items():
        if name in config.detectors and model.input_width != width:
            raise ParameterError(
                f"model for {name!r} expects width {model.input_width}, features have {width}")
    return dets


def _sweep_point(config, dets, i, snr_db):
    scheme = get_scheme(config.scheme)
    point_seed = derive_seed(config.seed, i)
    rng = SeededRng(point_seed)
    guess_rng = SeededRng(derive_seed(point_seed, _ERASURE_SALT))
    n_slots = -(-config.bits_per_point // (scheme.bits_per_symbol * config.n_t))
    counters = {name: SerCounter() for name in dets}
    erased = {name: 0 for name in dets}
    for batch in simulate_link(rng, n_slots, snr_db, config.channel_spec, config.csi_spec, scheme):
        inp = DetectionInput(batch.y, batch.csi, batch.sigma_n_sq, scheme)
        for name, det in dets.items():
            out = det(inp, batch)
            b_hat, x_hat = out.b_hat, out.x_hat
            if out.erased is not None and np.any(out.erased):
                mask = out.erased
                b_hat = b_hat.copy()
                b_hat[mask] = guess_rng.bits((int(mask.sum()), b_hat.shape[-1]))
                x_hat = modulate(b_hat, scheme)
                erased[name] += int(mask.sum())
            counters[name] = count_errors(b_hat, batch.bits, x_hat, batch.x, counters[name])
    points = []
    for name, c in counters.items():
        lo, hi = wilson_interval(c.bit_errors, c.total_bits)
        points.append(BerPoint(name, float(snr_db), c.total_bits, c.bit_errors,
                               c.total_symbols, c.symbol_errors, lo, hi, erased[name]))
    return points


def run_ber_sweep(config, models=None, custom=None, threads=1):
    """Evaluate every configured detector over the SNR list.

    All detectors at one SNR point see the same realizations of H, bits,
    noise and CSI error. Point ``i`` draws from seed ``seed XOR i``, so the
    result does not depend on ``threads``.

    ``models`` maps detector names to trained networks (needed for "dnn").
    ``custom`` maps extra names to callables ``f(inp, batch)`` that get the
    LinkBatch too, which is how genie or reference detectors are plugged in.
    """
    dets = _resolve_detectors(config, models, custom)
    jobs = list(enumerate(config.snr_db_list))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            per_point = list(pool.map(lambda j: _sweep_point(config, dets, *j), jobs))
    else:
        per_point = [_sweep_point(config, dets, i, s) for i, s in jobs]
    by_name = {name: [] for name in dets}
    for pts in per_point:
        for p in pts:
            by_name[p.detector].append(p)
    return BerResult([p for name in dets for p in by_name[name]])


def snr_at_ber(snrs, bers, target):
    """SNR where a BER curve crosses ``target`` (log-linear interpolation).

    Returns nan when the target lies outside the measured range.
    """
    snrs, bers = np.asarray(snrs, float), np.asarray(bers, float)
    for k in range(len(snrs) - 1):
        b0, b1 = bers[k], bers[k + 1]
        if b0 > 0 and b1 > 0 and min(b0, b1) <= target <= max(b0, b1):
            if b0 == b1:
                return float(snrs[k])
            f = (math.log10(target) - math.log10(b0)) / (math.log10(b1) - math.log10(b0))
            return float(snrs[k] + f * (snrs[k + 1] - snrs[k]))
    return math.nan


def snr_gap_db(result, better, worse, target):
    """How many dB earlier ``better`` reaches BER ``target`` than ``worse``."""
    return snr_at_ber(*result.curve(worse), target) - snr_at_ber(*result.curve(better), target)


def siso_rayleigh_bpsk_ber(snr_linear):
    """Closed-form BPSK BER over flat Rayleigh fading: (1 - sqrt(g / (1 + g))) / 2."""
    if not snr_linear > 0:
        raise ParameterError(f"snr must be positive, got {snr_linear}")
    if math.isinf(snr_linear):
        return 0.0
    return 0.5 * (1.0 - math.sqrt(snr_linear / (1.0 + snr_linear)))


# -- throughput ---------------------------------------------------------------

@dataclass
class ThroughputRow:
    detector: str
    detected_bits: int
    wall_seconds: float
    runs: list

    @property
    def throughput_kbps(self):
        return self.detected_bits / self.wall_seconds / 1000.0


@dataclass
class ThroughputResult:
    rows: list

    def get(self, detector):
        return next(r for r in self.rows if r.detector == detector)

    def to_csv(self):
        lines = ["detector,bits,median_seconds,kbps"]
        for r in self.rows:
            lines.append(f"{r.detector},{r.detected_bits},{r.wall_seconds!r},{r.throughput_kbps!r}")
        return "\n".join(lines) + "\n"


def make_workload(n_symbols, snr_db, channel_spec, csi_spec, scheme, seed,
                  chunk_slots=CHUNK_SLOTS):
    """Pre-generate the detection inputs (and truth) for a benchmark."""
    rng = SeededRng(seed)
    scheme = get_scheme(scheme)
    return [(DetectionInput(b.y, b.csi, b.sigma_n_sq, scheme), b)
            for b in simulate_link(rng, n_symbols, snr_db, channel_spec, csi_spec, scheme,
                                   chunk_slots)]


def run_throughput_bench(detectors, workload, repetitions=3, warmup=True):
    """Median wall-clock time of each detector over the same workload.

    ``detectors`` maps names to ``det(inp)`` callables; only the detection
    calls are timed.
    """
    rows = []
    for name, det in detectors.items():
        if warmup:
            inp, _ = workload[0]
            det(DetectionInput(inp.y[:64], type(inp.csi)(inp.csi.h_hat[:64], inp.csi.sigma_e_sq),
                               inp.sigma_n_sq, inp.scheme))
        runs = []
        for _ in range(repetitions):
            start = time.perf_counter()
            for inp, _ in workload:
                det(inp)
            runs.append(time.perf_counter() - start)
        n_bits = sum(b.bits.size for _, b in workload)
        rows.append(ThroughputRow(name, n_bits, statistics.median(runs), runs))
    return ThroughputResult(rows)
