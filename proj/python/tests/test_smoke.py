import json

import numpy as np
import pytest

import illumreid as ir


def rng_images(seed, n=2, c=3, h=4, w=4):
    return np.random.default_rng(seed).uniform(-1, 1, size=(n, c, h, w)).astype(np.float32)


def test_l1_terms_match_numpy():
    gs, s = rng_images(0), rng_images(1)
    assert ir.ref_loss(gs, s) == pytest.approx(np.abs(gs.astype(np.float64) - s).mean(), rel=1e-9)
    fgs, x, gfx = rng_images(2), rng_images(3), rng_images(4)
    expected = np.abs(fgs.astype(np.float64) - s).mean() + np.abs(gfx.astype(np.float64) - x).mean()
    assert ir.cycle_loss(s, fgs, x, gfx) == pytest.approx(expected, rel=1e-9)


def test_masked_loss_uses_matte():
    gs, s = rng_images(5, h=8, w=8), rng_images(6, h=8, w=8)
    m = ir.soft_matte(8, 8)
    expected = (np.abs(gs.astype(np.float64) - s) * m[None, None]).mean()
    assert ir.masked_reg_loss(gs, s) == pytest.approx(expected, rel=1e-9)


def test_full_objective_unit_components():
    assert ir.full_objective(1, 1, 1, 1, 1) == pytest.approx(27.0)


def test_adversarial_loss():
    real, fake = [0.9, 0.8], [0.2, 0.1]
    expected = np.mean(np.log(real)) + np.mean(np.log(1 - np.array(fake)))
    assert ir.adversarial_loss(real, fake) == pytest.approx(expected, rel=1e-9)


def test_select_domain_is_mode():
    k, votes = ir.select_domain([2, 0, 2, 1, 0], 3)
    assert (k, votes) == (0, [2, 1, 2])
    with pytest.raises(ValueError):
        ir.select_domain([], 3)


def test_cmc_perfect_and_monotone():
    feats = np.eye(5, dtype=np.float32)
    ids = list(range(5))
    assert ir.cmc(feats, ids, feats, ids) == [1.0] * 5
    curve = ir.cmc(np.random.default_rng(0).normal(size=(5, 3)), ids,
                   np.random.default_rng(1).normal(size=(5, 3)), ids)
    assert all(a <= b for a, b in zip(curve, curve[1:])) and curve[-1] == 1.0


def test_config_validation():
    cfg = ir.validate_config('{"schema_version": 1, "seed": 3}')
    assert cfg["translation"]["lambdas"] == [10.0, 10.0, 5.0]
    with pytest.raises(ValueError, match="did you mean 'data'"):
        ir.validate_config('{"schema_version": 1, "seed": 3, "dta": {}}')


def test_tiny_pipeline(tmp_path):
    config = {
        "schema_version": 1, "seed": 7,
        "data": {"synthetic_identities": 4, "illuminations": 3, "samples_per_identity": 2,
                 "real_source_domains": 1, "real_identities": 4, "real_samples_per_identity": 2,
                 "target_identities": 3, "target_samples_per_identity": 2, "test_identities": 5},
        "reid": {"train": {"epochs": 1}}, "illum": {"train": {"epochs": 1}},
        "finetune": {"epochs": 1}, "translation": {"train": {"epochs": 1}},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    manifest = ir.run_pipeline(path, tmp_path / "run")
    assert 0.0 <= manifest["metrics"]["rank1"] <= 1.0
    data = ir.read_dataset(tmp_path / "run" / "01_gen_data" / "target")
    assert len(data["images"]) == 6 and data["images"][0].shape == (64, 32, 3)
