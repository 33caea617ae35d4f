import os
import subprocess
import sys

import numpy as np
import pytest

from kgalign.network import init_params
from kgalign.pipeline import (RunConfig, baseline_report, check_compatible,
                              load_checkpoint, parse_config_file,
                              prepare_dataset, resolve_config,
                              save_checkpoint, ablate)


def test_parse_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment line\n"
                   "dim = 12\n"
                   "variant = rd   # trailing comment\n"
                   "\n"
                   "betas = 0.2,0.4\n")
    values = parse_config_file(str(cfg))
    assert values == {"dim": "12", "variant": "rd", "betas": "0.2,0.4"}


def test_parse_config_file_rejects_bad_line(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("dim 12\n")
    with pytest.raises(ValueError, match=r"run\.cfg:1"):
        parse_config_file(str(cfg))


def test_resolve_config_coerces_types():
    cfg = resolve_config({"dim": "12", "betas": "0.2,0.4", "early_stop": "true",
                          "ks": "1,5,10", "learning_rate": "0.01"},
                         {"epochs": 7})
    assert cfg.dim == 12
    assert cfg.betas == (0.2, 0.4)
    assert cfg.early_stop is True
    assert cfg.ks == (1, 5, 10)
    assert cfg.learning_rate == 0.01
    assert cfg.epochs == 7


def test_resolve_config_overrides_beat_file_values():
    cfg = resolve_config({"epochs": "100"}, {"epochs": 3})
    assert cfg.epochs == 3
    # None overrides are ignored
    cfg = resolve_config({"epochs": "100"}, {"epochs": None})
    assert cfg.epochs == 100


def test_resolve_config_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        resolve_config({"not_a_key": "1"}, {})


def test_fingerprint_tracks_content():
    a = RunConfig(dataset="x", epochs=10)
    b = RunConfig(dataset="x", epochs=10)
    c = RunConfig(dataset="x", epochs=11)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()
    assert len(a.fingerprint()) == 16


def test_checkpoint_round_trip(tmp_path, small_dataset):
    dataset, name_vecs, result = small_dataset
    params = init_params(name_vecs, betas=(0.1, 0.3), rng_seed=2)
    config = RunConfig(dataset=result.directory, dim=6)
    path = str(tmp_path / "ckpt.npz")
    g = dataset.graph
    save_checkpoint(path, params, config, g.entity_count, g.relation_count)
    loaded, header = load_checkpoint(path)
    for name in params.TRAINABLE:
        np.testing.assert_array_equal(getattr(loaded, name),
                                      getattr(params, name))
    assert loaded.betas == params.betas
    assert header["config_fingerprint"] == config.fingerprint()
    check_compatible(header, dataset, 6)  # must not raise
    with pytest.raises(ValueError, match="dim"):
        check_compatible(header, dataset, 7)


def test_prepare_dataset_defaults_to_bundled_vectors(small_dataset):
    _, name_vecs, result = small_dataset
    config = RunConfig(dataset=result.directory, dim=6)
    dataset, vecs = prepare_dataset(config)
    np.testing.assert_array_equal(vecs, name_vecs)
    with pytest.raises(ValueError, match="no dataset"):
        prepare_dataset(RunConfig())


def test_baseline_report_uses_untrained_vectors(small_dataset):
    dataset, name_vecs, result = small_dataset
    config = RunConfig(dataset=result.directory, dim=6, ks=(1,))
    from kgalign.evaluation import evaluate
    want = evaluate(name_vecs, dataset.seeds.test, ks=(1,))
    assert baseline_report(config).hits[1] == want.hits[1]


def test_candidate_pool_all_widens_ranking(small_dataset):
    _, _, result = small_dataset
    config = RunConfig(dataset=result.directory, dim=6, ks=(1,),
                       candidate_pool="all")
    narrow = baseline_report(RunConfig(dataset=result.directory, dim=6, ks=(1,)))
    wide = baseline_report(config)
    assert wide.hits[1] <= narrow.hits[1]


def test_ablate_isolates_per_cell_failures(small_dataset):
    _, _, result = small_dataset
    config = RunConfig(dataset=result.directory, dim=6, epochs=1,
                       negatives_per_side=2, negative_refresh_epochs=1)
    rows = ablate(config, ["gcn-s", "rd"])
    assert [name for name, _, _ in rows] == ["gcn-s", "rd"]
    assert all(err is None for _, _, err in rows)
    with pytest.raises(ValueError):
        ablate(config, ["not-a-variant"])


def test_force_fallback_env_pins_backend():
    code = ("import kgalign; "
            "print(kgalign.kernel_backend())")
    out = subprocess.run([sys.executable, "-c", code],
                         env={**os.environ, "KGALIGN_FORCE_FALLBACK": "1"},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "fallback"
