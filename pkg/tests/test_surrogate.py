import copy
import time

import numpy as np
import pytest
import torch
from torch import nn
from torch.nn import functional as F

from heatstress.raster import Grid, LandCoverGrid
from heatstress.surrogate import (
    FORMAT_VERSION, GeometricEncoder, MetEncoder, SemanticEncoder, SurrogateConfig,
    TileNormalizer, TileSample, TrainHyper, TrainingDiverged, UTCINet, UTCISurrogate,
    count_parameters, film_modulate, gradient_check, load_params, physics_tiles, save_params,
    split_indices, tiles_from_grids, train)

TINY = dict(tile=16, patch=4, geo_width=8, geo_depth=1, heads=2, sem_width=4, film_hidden=16)


def _inputs(cfg, b=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    t = cfg.tile
    return (torch.randn(b, 1, t, t, generator=g),
            torch.randint(0, 7, (b, 1, t, t), generator=g).float() / 6.0,
            torch.randn(b, cfg.n_hours, cfg.n_met, generator=g))


@pytest.fixture(scope="module")
def tiles16():
    return physics_tiles(1, size=32, tile=16, seed=0)


@pytest.fixture(scope="module")
def tiles32():
    return physics_tiles(1, size=64, tile=32, seed=0)


# -- shapes -----------------------------------------------------------------

@pytest.mark.parametrize("tile,patch", [(64, 16), (16, 4), (16, 16)])
def test_shape_chain(tile, patch):
    cfg = SurrogateConfig(tile=tile, patch=patch)
    s = UTCINet(cfg).shape_chain(*_inputs(cfg))
    H = W = tile
    w = cfg.sem_width
    assert s["geo_in"] == (1, H, W)
    assert s["geo_stem"] == (3, H, W)
    assert s["geo_backbone"] == (cfg.geo_width, H // patch, W // patch)
    assert s["geo_proj"] == (16, H // patch, W // patch)
    assert s["geo_out"] == (16, H, W)
    assert s["sem_stem"] == (3, H, W)
    assert s["sem_branches"] == [(w, H, W), (2 * w, H // 2, W // 2), (4 * w, H // 4, W // 4)]
    assert s["sem_concat"] == (7 * w, H // 4, W // 4)
    assert s["sem_proj"] == (16, H // 4, W // 4)
    assert s["sem_out"] == (16, H, W)
    assert s["met_out"] == (12, 64)
    assert s["met_pooled"] == (64,)
    assert s["fused"] == (32, H, W)
    assert s["out"] == (1, H, W)


def test_conv_stack_backbone_shapes():
    cfg = SurrogateConfig(tile=64, patch=16, geo_backbone="conv_stack")
    s = UTCINet(cfg).shape_chain(*_inputs(cfg))
    assert s["geo_proj"] == (16, 4, 4) and s["out"] == (1, 64, 64)


def test_patch_divisibility_enforced():
    with pytest.raises(ValueError):
        SurrogateConfig(tile=64, patch=24)
    enc = GeometricEncoder(SurrogateConfig(tile=64, patch=16))
    with pytest.raises(ValueError):
        enc(torch.zeros(1, 1, 40, 40))


def test_config_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        SurrogateConfig(include_geo=False, include_sem=False)
    with pytest.raises(ValueError):
        SurrogateConfig(channels=8)
    assert SurrogateConfig(channels=8, reference_widths=False).channels == 8
    with pytest.raises(ValueError):
        SurrogateConfig.variant("A9")
    cfg = SurrogateConfig.variant("A3", tile=32, patch=8)
    import json
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_json()))
    assert SurrogateConfig.load(tmp_path / "c.json") == cfg


# -- geometric encoder ------------------------------------------------------

def test_geo_zero_input_constant_per_channel():
    cfg = SurrogateConfig(tile=32, patch=8)
    enc = UTCINet(cfg).geo
    with torch.no_grad():
        out = enc(torch.zeros(1, 1, 32, 32))
    flat = out.reshape(16, -1)
    assert (flat.max(dim=1).values - flat.min(dim=1).values).max() < 1e-6


def test_geo_single_cell_change_visible():
    cfg = SurrogateConfig(tile=32, patch=8)
    enc = UTCINet(cfg).geo
    x = torch.randn(1, 1, 32, 32, generator=torch.Generator().manual_seed(1))
    y = x.clone()
    y[0, 0, 5, 7] += 1.0
    with torch.no_grad():
        assert not torch.equal(enc(x), enc(y))


# -- semantic encoder -------------------------------------------------------

def test_sem_uniform_tile_constant_interior():
    cfg = SurrogateConfig(tile=32, patch=8)
    enc = UTCINet(cfg).sem
    with torch.no_grad():
        out = enc(torch.full((1, 1, 32, 32), 2 / 6))
    q = out[0, :, 8:24, 8:24].reshape(16, -1)
    assert (q.max(dim=1).values - q.min(dim=1).values).max() < 1e-5


def test_sem_checkerboard_differs_from_uniform():
    cfg = SurrogateConfig(tile=32, patch=8)
    enc = UTCINet(cfg).sem
    yy, xx = torch.meshgrid(torch.arange(32), torch.arange(32), indexing="ij")
    board = torch.where((yy + xx) % 2 == 0, 1 / 6, 6 / 6)[None, None].float()
    with torch.no_grad():
        assert not torch.allclose(enc(board), enc(torch.full_like(board, 1 / 6)))


def test_sem_single_branch_is_plain_conv_encoder():
    cfg = SurrogateConfig(tile=32, patch=8, sem_branches=1)
    enc = SemanticEncoder(cfg)
    assert len(enc.exchange) == 0 and len(enc.down) == 1
    plain = nn.Sequential(enc.stem, enc.down[0], nn.SiLU(), enc.post[0], nn.SiLU())
    x = torch.rand(2, 1, 32, 32)
    with torch.no_grad():
        ref = F.interpolate(enc.proj(F.interpolate(plain(x), size=(8, 8), mode="bilinear",
                                                   align_corners=False)),
                            size=(32, 32), mode="bilinear", align_corners=False)
        assert torch.allclose(enc(x), ref, atol=1e-6)


# -- met encoder ------------------------------------------------------------

def test_met_shape():
    enc = MetEncoder(SurrogateConfig())
    assert enc(torch.randn(3, 12, 18)).shape == (3, 12, 64)
    with pytest.raises(ValueError):
        enc(torch.randn(3, 11, 18))


def test_met_recurrent_weights_orthogonal():
    enc = MetEncoder(SurrogateConfig())
    w = enc.lstm.weight_hh_l0.detach()
    for gate in w.chunk(4, 0):
        assert torch.allclose(gate @ gate.T, torch.eye(gate.shape[0]), atol=1e-5)


def test_met_bidirectional_symmetry():
    enc = MetEncoder(SurrogateConfig()).double()
    swapped = copy.deepcopy(enc)
    sd = enc.lstm.state_dict()
    swapped.lstm.load_state_dict({k: sd[k[:-8] if k.endswith("_reverse") else k + "_reverse"]
                                  for k in sd})
    x = torch.randn(2, 12, 18, dtype=torch.float64)
    with torch.no_grad():
        a = enc(x)
        b = swapped(x.flip(1))
    h = 32
    assert torch.allclose(b[:, :, :h], a.flip(1)[:, :, h:], atol=1e-12)
    assert torch.allclose(b[:, :, h:], a.flip(1)[:, :, :h], atol=1e-12)


def test_met_backward_path_carries_future():
    enc = MetEncoder(SurrogateConfig())
    x = torch.randn(1, 12, 18)
    y = x.clone()
    y[0, 11] += 1.0  # 19:00 only
    with torch.no_grad():
        a, b = enc(x), enc(y)
    assert not torch.allclose(a[0, 0], b[0, 0])
    assert torch.equal(a[0, 0, :32], b[0, 0, :32])  # forward half cannot see the future


# -- FiLM -------------------------------------------------------------------

def test_film_identity_and_constant():
    z = torch.randn(16, 8, 8)
    assert torch.equal(film_modulate(z, torch.ones(16), torch.zeros(16)), z)
    c = torch.arange(16.0)
    out = film_modulate(z, torch.zeros(16), c)
    assert torch.equal(out, c[:, None, None].expand_as(z))
    with pytest.raises(ValueError):
        film_modulate(z, torch.ones(15), torch.zeros(16))


def test_film_loop_oracle_and_linearity():
    g = torch.Generator().manual_seed(0)
    z = torch.randn(2, 4, 3, 5, generator=g)
    gamma, beta = torch.randn(2, 4, generator=g), torch.randn(2, 4, generator=g)
    out = film_modulate(z, gamma, beta)
    for b in range(2):
        for c in range(4):
            for i in range(3):
                for j in range(5):
                    assert out[b, c, i, j] == gamma[b, c] * z[b, c, i, j] + beta[b, c]
    z2 = torch.randn(2, 4, 3, 5, generator=g)
    lhs = film_modulate(2 * z + z2, gamma, beta) - beta[..., None, None]
    rhs = 2 * (film_modulate(z, gamma, beta) - beta[..., None, None]) + \
        (film_modulate(z2, gamma, beta) - beta[..., None, None])
    assert torch.allclose(lhs, rhs, atol=1e-5)


def test_film_gamma_gradient_closed_form():
    g = torch.Generator().manual_seed(3)
    z = torch.randn(2, 4, 6, 6, generator=g, dtype=torch.float64)
    up = torch.randn(2, 4, 6, 6, generator=g, dtype=torch.float64)
    gamma = torch.randn(2, 4, generator=g, dtype=torch.float64, requires_grad=True)
    beta = torch.randn(2, 4, generator=g, dtype=torch.float64, requires_grad=True)
    (film_modulate(z, gamma, beta) * up).sum().backward()
    assert torch.allclose(gamma.grad, (up * z).sum(dim=(-2, -1)), atol=1e-12)
    assert torch.allclose(beta.grad, up.sum(dim=(-2, -1)), atol=1e-12)


def test_film_generators_start_at_identity():
    net = UTCINet(SurrogateConfig(tile=32, patch=8))
    cond = torch.randn(3, 64)
    for gen in (net.film_geo, net.film_sem):
        gamma, beta = gen(cond)
        assert torch.equal(gamma, torch.ones_like(gamma)) and torch.equal(beta, torch.zeros_like(beta))


def test_film_identity_equals_concat_forward():
    full = UTCINet(SurrogateConfig(tile=32, patch=8))
    cat = UTCINet(SurrogateConfig.variant("A3", tile=32, patch=8, seed=99))
    # force the generators to the identity and share every common weight
    for gen in (full.film_geo, full.film_sem):
        nn.init.zeros_(gen.out.weight)
        nn.init.zeros_(gen.out.bias)
    shared = {k: v for k, v in full.state_dict().items() if k in cat.state_dict()}
    cat.load_state_dict(shared, strict=True)
    x = _inputs(full.cfg, b=3)
    with torch.no_grad():
        assert torch.equal(full(*x), cat(*x))


# -- forward / ablations ----------------------------------------------------

def test_ablation_modules_absent():
    a1 = UTCINet(SurrogateConfig.variant("A1", tile=32, patch=8))
    a2 = UTCINet(SurrogateConfig.variant("A2", tile=32, patch=8))
    a3 = UTCINet(SurrogateConfig.variant("A3", tile=32, patch=8))
    assert a1.sem is None and a1.film_sem is None and a1.geo is not None
    assert a2.geo is None and a2.film_geo is None and a2.sem is not None
    assert a3.met is None and a3.film_geo is None and a3.film_sem is None
    for net in (a1, a2, a3):
        assert net(*_inputs(net.cfg)).shape == (2, 1, 32, 32)


def test_parameter_count_ordering_reference_widths():
    counts = {v: count_parameters(UTCINet(SurrogateConfig.variant(v))) for v in
              ("A1", "A2", "A3", "full")}
    assert counts["A1"] < counts["A2"] < counts["A3"] <= counts["full"]


def test_same_seed_same_weights():
    a = UTCINet(SurrogateConfig(tile=32, patch=8, seed=5))
    b = UTCINet(SurrogateConfig(tile=32, patch=8, seed=5))
    c = UTCINet(SurrogateConfig(tile=32, patch=8, seed=6))
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(torch.equal(sa[k], sb[k]) for k in sa)
    assert not all(torch.equal(sa[k], sc[k]) for k in sa)


# -- data -------------------------------------------------------------------

def test_normalizer_ranges_and_mask(tiles16):
    norm = TileNormalizer().fit(tiles16[:3])
    d = norm.transform(tiles16)
    assert d["landcover"].min() >= 0 and d["landcover"].max() <= 1
    assert d["ndsm"].shape == (4, 1, 16, 16) and d["met"].shape == (4, 12, 18)
    z = d["target"][d["mask"] > 0]
    back = norm.inverse_target(z.double().numpy())
    ref = np.stack([s.utci for s in tiles16])[:, None][d["mask"].numpy() > 0]
    np.testing.assert_allclose(back, ref, rtol=0, atol=1e-3)
    # statistics come only from the samples passed to fit
    train_t = np.concatenate([s.utci.ravel() for s in tiles16[:3]])
    assert norm.target_mean_ == pytest.approx(train_t.mean())
    assert TileNormalizer.from_json(norm.to_json()).to_json() == norm.to_json()


def test_tile_sample_validation():
    good = physics_tiles(1, size=16, tile=16)[0]
    with pytest.raises(ValueError):
        TileSample(good.ndsm, good.landcover[:8], good.met)
    with pytest.raises(ValueError):
        TileSample(good.ndsm, good.landcover + 7, good.met)
    with pytest.raises(ValueError):
        TileSample(good.ndsm, good.landcover, good.met[:11])


def test_tiles_from_grids_full_tiles_only(met_day):
    dsm = Grid(np.zeros((40, 70), np.float32))
    lc = LandCoverGrid(np.full((40, 70), 2, np.int16))
    assert len(tiles_from_grids(dsm, lc, met_day, tile=16)) == 2 * 4


@pytest.mark.parametrize("n", [2, 4, 7, 10, 33])
def test_split_seventy_thirty(n):
    tr, te = split_indices(n, 0.7, seed=1)
    assert abs(len(tr) - 0.7 * n) <= 1 and abs(len(te) - 0.3 * n) <= 1
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(n))


# -- training ---------------------------------------------------------------

def _data(tiles, dtype=torch.float32):
    return TileNormalizer().fit(tiles).transform(tiles, dtype)


def test_zero_epochs_leave_weights(tiles16):
    net = UTCINet(SurrogateConfig(**TINY))
    before = copy.deepcopy(net.state_dict())
    assert train(net, _data(tiles16), TrainHyper(epochs=0)) == []
    assert all(torch.equal(before[k], v) for k, v in net.state_dict().items())


def test_training_deterministic(tiles16):
    runs = []
    for _ in range(2):
        net = UTCINet(SurrogateConfig(**TINY))
        hist = train(net, _data(tiles16), TrainHyper(epochs=3, batch_size=2, seed=4))
        runs.append((hist, {k: v.clone() for k, v in net.state_dict().items()}))
    assert runs[0][0] == runs[1][0]
    assert all(torch.equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])


def test_nan_loss_names_batch(tiles16):
    data = _data(tiles16)
    data["target"][2, 0, 3, 3] = float("nan")
    order = torch.randperm(4, generator=torch.Generator().manual_seed(7))
    expected = int((order == 2).nonzero())
    with pytest.raises(TrainingDiverged, match=f"batch index {expected}") as e:
        train(UTCINet(SurrogateConfig(**TINY)), data, TrainHyper(epochs=2, batch_size=1, seed=7))
    assert e.value.batch == expected and e.value.epoch == 1


def test_gradient_check_tiny_double(tiles16):
    net = UTCINet(SurrogateConfig(**TINY))
    t = time.perf_counter()
    worst, groups = gradient_check(net, _data(tiles16[:2], torch.float64), epsilon=1e-4,
                                   n_params=200)
    assert time.perf_counter() - t < 60
    assert worst < 1e-4
    assert set(groups) == set(net.parameter_groups())
    assert sum(g["checked"] for g in groups.values()) >= 200


def test_zero_head_blocks_upstream_gradients(tiles16):
    net = UTCINet(SurrogateConfig(**TINY)).double()
    nn.init.zeros_(net.head.weight)
    net.head.weight.requires_grad_(False)
    d = _data(tiles16, torch.float64)
    loss = F.mse_loss(net(d["ndsm"], d["landcover"], d["met"]), d["target"])
    loss.backward()
    assert net.head.weight.grad is None
    assert net.head.bias.grad is not None and net.head.bias.grad.abs().sum() > 0
    for name, p in net.named_parameters():
        if not name.startswith("head"):
            assert p.grad is None or torch.count_nonzero(p.grad) == 0, name


# -- estimator and serialization --------------------------------------------

def test_estimator_fit_predict_score(tiles16, met_day):
    est = UTCISurrogate(SurrogateConfig(**TINY), epochs=2, batch_size=2)
    assert est.get_params()["epochs"] == 2
    est.fit(tiles16)
    pred = est.predict(tiles16)
    assert pred.shape == (4, 16, 16) and np.isfinite(pred).all()
    assert len(est.history_) == 2 and np.isfinite(est.score(tiles16))
    dsm = Grid(np.zeros((21, 37), np.float32), origin_x=5.0)
    lc = LandCoverGrid(np.full((21, 37), 2, np.int16), origin_x=5.0)
    g = est.predict_grid(dsm, lc, met_day)
    assert g.shape == (21, 37) and g.origin_x == 5.0 and g.units == "degC"


def test_params_round_trip_bit_exact(tmp_path, tiles16):
    est = UTCISurrogate(SurrogateConfig(**TINY), epochs=1).fit(tiles16)
    man = est.save(tmp_path / "p.bin")
    assert man["format_version"] == FORMAT_VERSION
    back = UTCISurrogate.load(tmp_path / "p.bin")
    a, b = est.model_.state_dict(), back.model_.state_dict()
    assert a.keys() == b.keys()
    assert all(a[k].numpy().tobytes() == b[k].numpy().tobytes() for k in a)
    assert np.array_equal(est.predict(tiles16), back.predict(tiles16))
    model, manifest = load_params(tmp_path / "p.bin")
    assert manifest["config"] == est.config_.to_json()


def test_params_tamper_and_version(tmp_path):
    net = UTCINet(SurrogateConfig(**TINY))
    save_params(tmp_path / "p.bin", net)
    raw = bytearray((tmp_path / "p.bin").read_bytes())
    raw[10] ^= 0xFF
    (tmp_path / "q.bin").write_bytes(bytes(raw))
    (tmp_path / "q.bin.json").write_text((tmp_path / "p.bin.json").read_text())
    with pytest.raises(ValueError, match="digest"):
        load_params(tmp_path / "q.bin")
    import json
    m = json.loads((tmp_path / "p.bin.json").read_text())
    m["format_version"] = 99
    (tmp_path / "p.bin.json").write_text(json.dumps(m))
    with pytest.raises(ValueError, match="version"):
        load_params(tmp_path / "p.bin")


def test_learning_smoke(tiles32):
    cfg = SurrogateConfig(tile=32, patch=4)
    est = UTCISurrogate(cfg, batch_size=1, epochs=200, seed=0).fit(tiles32)
    assert est.history_[-1] <= 0.10 * est.history_[0]
