import json
import time

import pytest

from mimodet.cli import CONFIG_SCHEMA, DEFAULT_CONFIG, load_config, main, validate_config
from mimodet.errors import ConfigError
from mimodet.experiments import read_dataset

SMALL = {
    "system": {"n_t": 2, "n_r": 2, "scheme": "qpsk"},
    "data": {"n_train": 1000, "n_val": 300},
    "training": {"max_epochs": 2, "batch_size": 64},
    "sweep": {"bits_per_point": 10000},
    "bench": {"n_symbols": 2000, "repetitions": 1},
}


def _config(tmp_path, doc=SMALL, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_defaults_validate():
    validate_config(DEFAULT_CONFIG)
    assert DEFAULT_CONFIG["data"]["n_train"] == 540_000
    assert CONFIG_SCHEMA["additionalProperties"] is False


@pytest.mark.parametrize("doc,key", [
    ({"system": {"n_t": 4, "bogus": 1}}, "system"),
    ({"extra": 1}, "<root>"),
    ({"training": {"lr": -1}}, "training.lr"),
    ({"channel": {"np_ep": "sometimes"}}, "channel.np_ep"),
    ({"sweep": {"detectors": ["zf", "sphere"]}}, "sweep.detectors.1"),
])
def test_validation_names_key(doc, key):
    with pytest.raises(ConfigError, match=f"at {key}:"):
        validate_config(doc)


def test_exit_code_config_error(tmp_path, capsys):
    cfg = _config(tmp_path, {"system": {"n_t": 0}})
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "system.n_t" in capsys.readouterr().err
    assert not (tmp_path / "o" / "train.bin").exists()


def test_exit_code_io_error(tmp_path):
    assert main(["gen-data", "--config", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["gen-data", "--config", str(bad)]) == 2


def test_gen_data_sample_override_and_determinism(tmp_path):
    cfg = _config(tmp_path)
    for name in ("a", "b"):
        assert main(["gen-data", "--config", cfg, "--out", str(tmp_path), "--samples", "100",
                     "--output", str(tmp_path / f"{name}.bin")]) == 0
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    ds = read_dataset(tmp_path / "a.bin")
    assert len(ds) == 100 and ds.header["n_samples"] == 100
    for key in ("n_t", "n_r", "scheme", "snr_db", "np_ep", "seed"):
        assert key in ds.header
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path), "--samples", "100",
                 "--seed", "7", "--output", str(tmp_path / "c.bin")]) == 0
    assert (tmp_path / "c.bin").read_bytes() != (tmp_path / "a.bin").read_bytes()


def test_train_smoke_and_rerun(tmp_path, capsys):
    cfg = _config(tmp_path)
    start = time.perf_counter()
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r1")]) == 0
    assert time.perf_counter() - start < 30
    assert "best validation loss" in capsys.readouterr().out
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r2")]) == 0
    h1 = (tmp_path / "r1" / "history.csv").read_text()
    assert h1 == (tmp_path / "r2" / "history.csv").read_text()
    assert len(h1.splitlines()) == 3
    model = json.loads((tmp_path / "r1" / "model.json").read_text())
    assert model["input_width"] == 20 and model["output_width"] == 4
    manifest = json.loads((tmp_path / "r1" / "train_manifest.json").read_text())
    assert len(manifest["model_hash"]) == 40


def test_train_rejects_width_mismatch(tmp_path):
    cfg = _config(tmp_path)
    other = _config(tmp_path, dict(SMALL, system={"n_t": 4, "n_r": 4, "scheme": "qpsk"}), "o.json")
    data = str(tmp_path / "d.bin")
    assert main(["gen-data", "--config", other, "--out", str(tmp_path), "--samples", "50",
                 "--output", data]) == 0
    assert main(["train", "--config", cfg, "--out", str(tmp_path), "--train-data", data]) == 2


def test_sweep_rows_and_manifest(tmp_path):
    cfg = _config(tmp_path)
    out = str(tmp_path / "s")
    assert main(["train", "--config", cfg, "--out", out]) == 0
    assert main(["sweep", "--config", cfg, "--out", out]) == 0
    rows = (tmp_path / "s" / "ber.csv").read_text().splitlines()
    assert rows[0] == "detector,snr_db,bits,bit_errors,ber,ci_low,ci_high"
    assert len(rows) - 1 == 28
    manifest = json.loads((tmp_path / "s" / "sweep_manifest.json").read_text())
    assert manifest["sigma_e_sq"] == 0.0
    assert "sigma_n^2" in manifest["snr_convention"]
    assert manifest["seeds"]["run"] == DEFAULT_CONFIG["seed"]


def test_sweep_imperfect_csi_manifest(tmp_path):
    cfg = _config(tmp_path, dict(SMALL, channel={"np_ep": 400}))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--detectors", "zf,mmse"]) == 0
    manifest = json.loads((tmp_path / "sweep_manifest.json").read_text())
    assert manifest["sigma_e_sq"] == 0.005


def test_sweep_missing_model_and_bad_detector(tmp_path):
    cfg = _config(tmp_path)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--detectors", "zf,qr"]) == 2


def test_bench_table(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["bench", "--config", cfg, "--out", str(tmp_path), "--detectors", "zf,ml"]) == 0
    lines = (tmp_path / "throughput.csv").read_text().splitlines()
    assert lines[0] == "detector,bits,median_seconds,kbps" and len(lines) == 3
    assert all(line.split(",")[1] == "8000" for line in lines[1:])
    assert "Kbps" in capsys.readouterr().out


def test_load_config_scalar_snr(tmp_path):
    cfg = load_config(_config(tmp_path, {"snr": {"sweep_db": 8}}))
    assert cfg["snr"]["sweep_db"] == [8]
