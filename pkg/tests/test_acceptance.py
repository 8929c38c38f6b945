"""Acceptance suite: one test per release criterion, each printed as a
PASS/FAIL line in the terminal summary (see conftest).

Criterion 5 trains three small models end-to-end through the CLI and takes
the bulk of the runtime (roughly 15 minutes on two CPU cores).
"""

import datetime
import json
import time
from pathlib import Path

import numpy as np
import pytest
import torch
import yaml

from aquacast.baselines import Task
from aquacast.cli import main as cli_main
from aquacast.data.storage import dataset_digest
from aquacast.losses import RegressionLossConfig, multiscale_loss, total_regression_loss, wavelet_loss
from aquacast.metrics import (
    ConfusionAccumulator,
    MetricReport,
    mae,
    mae_at_top,
    paired_ttest,
    pearson,
    thresholded_metrics,
)
from aquacast.model import ClimateGatedUNet, ModelConfig, encode_images
from aquacast.raster import (
    ChangeDirection,
    Grid2D,
    GridStack,
    build_target,
    change_mask,
    compute_mndwi,
    denormalize_target,
    direction_mask,
    normalize_target,
)
from aquacast.wavelets import dwt2, idwt2
from aquacast.xai import ClimateItem, channel_saliency, divergence, enumerate_subgroups, shapley_items

from oracles import (
    brute_confusion,
    brute_frequent_itemsets,
    brute_mae_at_top,
    brute_pearson,
    shapley_by_permutations,
    ttest_paired_pvalue,
)


def _grid(values, valid=None):
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.ones_like(values, dtype=bool)
    return Grid2D(values, valid)


def _stack(frames, start=2000):
    return GridStack(frames, [datetime.date(start + i, 7, 1) for i in range(len(frames))])


# ---------------------------------------------------------------------------


def test_criterion_1_formula_unit_suite():
    start = time.time()
    rng = np.random.default_rng(0)

    # Water-index values and bounds.
    out = compute_mndwi(_grid([[0.6]]), _grid([[0.2]]))
    assert abs(out.values[0, 0] - 0.5) <= 1e-12
    assert compute_mndwi(_grid([[0.3]]), _grid([[0.3]])).values[0, 0] == 0.0
    assert not compute_mndwi(_grid([[0.0]]), _grid([[0.0]])).valid[0, 0]
    for _ in range(200):
        g = rng.random((8, 8))
        s = rng.random((8, 8))
        idx = compute_mndwi(_grid(g), _grid(s))
        assert np.all(np.abs(idx.values[idx.valid]) <= 1.0 + 1e-15)

    # Target range and self-difference identity.
    for _ in range(100):
        vals = rng.uniform(-1, 1, (3, 8, 8))
        past = _stack([_grid(v) for v in vals])
        future = _stack([_grid(v[::-1]) for v in vals], start=2010)
        t = build_target(past, future)
        assert np.all(np.abs(t.values[t.valid]) <= 2.0)
        same = build_target(past, _stack([_grid(v) for v in vals], start=2010))
        assert np.all(same.values == 0.0)

    # Mask consistency: change == (direction != NONE), exact.
    for _ in range(100):
        t = _grid(rng.uniform(-2, 2, (8, 8)))
        cm = change_mask(t, 0.1)
        dm = direction_mask(t, 0.1)
        assert np.array_equal(cm == 1, dm != ChangeDirection.NONE)

    # Normalization round trip <= 1e-12 relative.
    for _ in range(100):
        t = _grid(rng.uniform(-2, 2, (8, 8)))
        back = denormalize_target(normalize_target(t))
        np.testing.assert_allclose(back.values, t.values, rtol=1e-12, atol=0)

    assert time.time() - start < 10.0


def test_criterion_2_loss_suite():
    start = time.time()
    rng = np.random.default_rng(1)
    cfg = RegressionLossConfig()

    # Zero iff equal on valid support.
    for _ in range(10):
        x = torch.from_numpy(rng.normal(size=(8, 8)))
        for fn in (multiscale_loss, wavelet_loss, total_regression_loss):
            assert fn(x, x, cfg).item() == 0.0
            assert fn(x + 0.05, x, cfg).item() > 0.0

    # DWT perfect reconstruction and energy conservation <= 1e-6 relative.
    for _ in range(25):
        x = torch.from_numpy(rng.normal(size=(16, 16)))
        for levels in (1, 2, 3):
            dec = dwt2(x, levels)
            back = idwt2(dec)
            assert torch.allclose(back, x, rtol=1e-6, atol=1e-12)
            e_in = float((x ** 2).sum())
            assert abs(dec.energy().item() - e_in) <= 1e-6 * e_in

    # Constant-offset analytic values <= 1e-9.
    c = 0.3
    tgt = torch.zeros(8, 8, dtype=torch.float64)
    got = multiscale_loss(tgt + c, tgt, RegressionLossConfig(scales=(2,))).item()
    assert abs(got - c * c) <= 1e-9
    got = multiscale_loss(tgt + c, tgt, RegressionLossConfig(scales=(2, 4))).item()
    assert abs(got - 1.5 * (0.5 * c * c)) <= 1e-9
    c = 0.1
    got = wavelet_loss(tgt + c, tgt, cfg).item()
    assert abs(got - 0.5 * (c * 2 ** cfg.wavelet_levels) ** 2) <= 1e-9
    got = total_regression_loss(tgt + c, tgt, cfg).item()
    expected = 0.5 * (0.5 * c * c * 1.5) + 0.5 * (0.5 * (c * 4) ** 2)
    assert abs(got - expected) <= 1e-9

    # Finite-difference gradient of the combined loss on 8x8 grids.
    tgt = torch.from_numpy(rng.normal(size=(8, 8)) * 0.3)
    pred0 = rng.normal(size=(8, 8)) * 0.3
    valid = torch.from_numpy(rng.random((8, 8)) > 0.15)
    pred = torch.tensor(pred0, dtype=torch.float64, requires_grad=True)
    total_regression_loss(pred, tgt, cfg, valid).backward()
    analytic = pred.grad.numpy()
    eps = 1e-6
    for i in range(8):
        for j in range(8):
            up, down = pred0.copy(), pred0.copy()
            up[i, j] += eps
            down[i, j] -= eps
            fd = (
                total_regression_loss(torch.from_numpy(up), tgt, cfg, valid).item()
                - total_regression_loss(torch.from_numpy(down), tgt, cfg, valid).item()
            ) / (2 * eps)
            assert abs(fd - analytic[i, j]) / max(abs(fd), abs(analytic[i, j]), 1e-8) <= 1e-3

    assert time.time() - start < 60.0


def test_criterion_3_metric_oracle_equivalence():
    rng = np.random.default_rng(2)
    n_instances = 200
    for k in range(n_instances):
        h, w = rng.integers(2, 17, 2)
        n_classes = int(rng.integers(2, 4))
        gt = rng.integers(-1, n_classes, (h, w))
        pred = rng.integers(0, n_classes, (h, w))
        acc = ConfusionAccumulator(n_classes)
        acc.update(pred, gt)
        slow = brute_confusion(pred, gt, n_classes)
        fast = acc.scores()
        for f, (p, r, f1) in zip(fast, slow):
            assert abs(f.precision - p) <= 1e-9
            assert abs(f.recall - r) <= 1e-9
            assert abs(f.f1 - f1) <= 1e-9

        reg_gt = np.round(rng.normal(size=h * w), 1)
        reg_pred = rng.normal(size=h * w)
        frac = float(rng.uniform(0.05, 1.0))
        assert abs(mae(reg_pred, reg_gt) - brute_mae_at_top(reg_pred, reg_gt, 1.0)) <= 1e-9
        assert abs(
            mae_at_top(reg_pred, reg_gt, frac) - brute_mae_at_top(reg_pred, reg_gt, frac)
        ) <= 1e-9
        if h * w >= 2:
            ours = pearson(reg_pred, reg_gt)
            ref = brute_pearson(reg_pred, reg_gt)
            if not (np.isnan(ours) or np.isnan(ref)):
                assert abs(ours - ref) <= 1e-9
        for t in (0.1, 0.2):
            s = thresholded_metrics(np.abs(reg_pred), np.abs(reg_gt), t)
            ref_cls = brute_confusion(
                (np.abs(reg_pred) > t).astype(int), (np.abs(reg_gt) > t).astype(int), 2
            )[1]
            assert abs(s.f1 - ref_cls[2]) <= 1e-9

    for _ in range(25):
        n = int(rng.integers(3, 40))
        a = rng.normal(size=n)
        b = a + rng.normal(0.2, 0.4, size=n)
        assert abs(paired_ttest(a, b) - ttest_paired_pvalue(a, b)) <= 1e-9


def test_criterion_4_model_invariants():
    start = time.time()
    torch.manual_seed(123)
    cfg = ModelConfig(
        task=Task.MAGNITUDE, use_dem=True, use_climate=True, levels=2,
        widths=(4, 8), depths=(1, 1), input_height=16, input_width=16,
        series_length=2, window_months=3, climate_vars=5, climate_hidden=6,
        head_channels=6,
    )
    model = ClimateGatedUNet(cfg).double()
    g = torch.Generator().manual_seed(7)
    images = torch.randn(1, 2, 6, 16, 16, generator=g, dtype=torch.float64)
    dem = torch.randn(1, 1, 16, 16, generator=g, dtype=torch.float64)
    climate = torch.randn(1, 2, 3, 5, generator=g, dtype=torch.float64)

    # Gates strictly inside (0, 1); fused features inside the elementwise
    # [min, max] envelope of their inputs.
    out, gates = model(images, dem, climate, return_gates=True)
    assert out.shape == (1, 1, 16, 16)
    for alpha in gates:
        assert alpha.min() > 0.0 and alpha.max() < 1.0
    feats = encode_images(model.encoder, torch.cat([images, dem.unsqueeze(1).expand(-1, 2, -1, -1, -1)], dim=2))
    climate_maps = model.climate_encoder(climate)
    for fusion, img_f, clim_f in zip(model.fusions, feats, climate_maps):
        b, t = img_f.shape[:2]
        fused, _ = fusion(img_f.reshape(b * t, *img_f.shape[2:]), clim_f.reshape(b * t, *clim_f.shape[2:]))
        lo = torch.minimum(img_f.reshape_as(fused), clim_f.reshape_as(fused))
        hi = torch.maximum(img_f.reshape_as(fused), clim_f.reshape_as(fused))
        assert bool(((fused >= lo - 1e-12) & (fused <= hi + 1e-12)).all())

    # Weight sharing: identical frames => identical per-timestep pyramids.
    frame = torch.randn(1, 1, 7, 16, 16, generator=g, dtype=torch.float64)
    repeated = frame.expand(1, 2, 7, 16, 16).contiguous()
    for f in encode_images(model.encoder, repeated):
        assert torch.equal(f[:, 0], f[:, 1])

    # Output spatial dims equal input dims for every task.
    for task in Task:
        torch.manual_seed(5)
        m = ClimateGatedUNet(ModelConfig(
            task=task, levels=2, widths=(4, 8), depths=(1, 1),
            input_height=16, input_width=16, series_length=2,
            window_months=3, climate_hidden=6, head_channels=6,
        )).eval()
        y = m(torch.randn(1, 2, 6, 16, 16))
        assert y.shape[-2:] == (16, 16)

    # Full-model gradient check against central differences.
    tgt = torch.rand(1, 16, 16, generator=g, dtype=torch.float64) * 0.5
    valid = torch.rand(1, 16, 16, generator=g) > 0.1
    loss_cfg = RegressionLossConfig()

    def forward_loss():
        return total_regression_loss(model(images, dem, climate)[:, 0], tgt, loss_cfg, valid)

    model.zero_grad()
    forward_loss().backward()
    rng = np.random.default_rng(0)
    eps = 1e-5
    for name, p in model.named_parameters():
        flat = p.detach().reshape(-1)
        gflat = p.grad.reshape(-1)
        for idx in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + eps
            up = forward_loss().item()
            with torch.no_grad():
                flat[idx] = orig - eps
            down = forward_loss().item()
            with torch.no_grad():
                flat[idx] = orig
            fd = (up - down) / (2 * eps)
            an = gflat[idx].item()
            rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-6)
            assert rel <= 1e-3, f"{name}[{idx}]: analytic {an} vs fd {fd}"

    assert time.time() - start < 300.0


# ---------------------------------------------------------------------------


BENCHMARK_DATA = {
    "n_pretrain": 256,
    "n_finetune": 0,
    "n_test": 64,
    "height": 64,
    "width": 64,
    "series_length": 5,
    "window_months": 12,
    "dynamics": ["shrinking_lake", "growing_lake"],
    "noise": 0.015,
    "trend_gain": 1.8,
    "cloud_fraction": 0.05,
    "artifact_prob": 0.3,
}

BENCHMARK_MODEL = {
    "backbone": "tiny_conv_pyramid",
    "use_dem": True,
    "use_climate": True,
    "levels": 4,
}

BENCHMARK_SCHEDULE = {
    "pretrain_epochs": 20,
    "finetune_epochs": 0,
    "pretrain_lr": 1e-3,
    "batch_size": 8,
}


@pytest.fixture(scope="module")
def benchmark_results(tmp_path_factory):
    """Generate the 256/64-sample benchmark once and train all three tasks
    (<= 20 epochs each) through the CLI."""
    root = tmp_path_factory.mktemp("benchmark")
    started = time.time()
    manifest = None
    eval_dirs = {}
    for task in ("change", "direction", "magnitude"):
        cfg = {
            "task": task,
            "seed": 11,
            "threshold": 0.1,
            "name": f"bench_{task}",
            "output_dir": str(root / "results"),
            "data": BENCHMARK_DATA,
            "model": BENCHMARK_MODEL,
            "schedule": BENCHMARK_SCHEDULE,
        }
        cfg_path = root / f"{task}.yaml"
        cfg_path.write_text(yaml.safe_dump(cfg))
        if manifest is None:
            assert cli_main(["gen-data", "--config", str(cfg_path)]) == 0
            manifest = root / "results" / f"bench_{task}" / "dataset" / "manifest.json"
        assert cli_main(["train", "--config", str(cfg_path), "--manifest", str(manifest)]) == 0
        assert cli_main(["evaluate", "--config", str(cfg_path), "--manifest", str(manifest)]) == 0
        eval_dirs[task] = root / "results" / f"bench_{task}" / "eval"
    return {"eval_dirs": eval_dirs, "elapsed": time.time() - started}


def _report(eval_dir: Path, model: str) -> MetricReport:
    return MetricReport.load_json(eval_dir / f"report_{model}.json")


def test_criterion_5_scaled_relative_performance(benchmark_results):
    eval_dirs = benchmark_results["eval_dirs"]

    chg_model = _report(eval_dirs["change"], "model").values["chg_f1"]
    chg_pers = _report(eval_dirs["change"], "persistence").values["chg_f1"]
    assert chg_model >= chg_pers + 10.0, f"CHG F1 {chg_model:.2f} vs persistence {chg_pers:.2f}"

    dir_model = _report(eval_dirs["direction"], "model").values["direction_mean_f1"]
    dir_pers = _report(eval_dirs["direction"], "persistence").values["direction_mean_f1"]
    assert dir_model >= dir_pers + 5.0, f"NEG+POS F1 {dir_model:.2f} vs persistence {dir_pers:.2f}"

    mae_model = _report(eval_dirs["magnitude"], "model").values["mae"]
    mae_pers = _report(eval_dirs["magnitude"], "persistence").values["mae"]
    assert mae_model <= 0.5 * mae_pers, f"MAE {mae_model:.4f} vs persistence {mae_pers:.4f}"

    for task, column in (("change", "chg_f1"), ("direction", "direction_mean_f1"), ("magnitude", "mae")):
        ttests = json.loads((eval_dirs[task] / "ttests.json").read_text())
        assert ttests[column]["p_value"] < 0.05, f"{task}:{column} not significant"

    assert benchmark_results["elapsed"] < 7200.0  # 2 h CPU bound


# ---------------------------------------------------------------------------


def test_criterion_6_xai_suite():
    start = time.time()
    rng = np.random.default_rng(3)

    # Shapley efficiency and symmetry to 1e-9.
    for _ in range(10):
        items = frozenset(ClimateItem(v, "L") for v in "abcd")
        cache = {}

        def value(s):
            key = frozenset(s)
            if key not in cache:
                cache[key] = 0.0 if not key else float(rng.normal())
            return cache[key]

        phi = shapley_items(items, value)
        assert abs(sum(phi.values()) - value(items)) <= 1e-9
        slow = shapley_by_permutations(items, value)
        for item in items:
            assert abs(phi[item] - slow[item]) <= 1e-9

    a, b, c = ClimateItem("a", "L"), ClimateItem("b", "L"), ClimateItem("c", "H")

    def sym_value(s):
        k = (len(s), c in s)
        return {(0, False): 0.0, (1, False): 1.0, (1, True): 0.5,
                (2, True): 1.5, (2, False): 2.0, (3, True): 2.5}[k]

    phi = shapley_items(frozenset({a, b, c}), sym_value)
    assert abs(phi[a] - phi[b]) <= 1e-9

    # Divergence of the full dataset is exactly zero.
    stats = {i: float(rng.normal()) for i in range(7)}
    assert divergence(list(stats), stats, lambda xs: float(np.mean(xs))) == 0.0

    # Apriori closure against the brute-force lattice on a 2-variable toy set.
    itemsets = {
        i: frozenset({ClimateItem("a", ab), ClimateItem("b", bb)})
        for i, (ab, bb) in enumerate(
            [("L", "L"), ("L", "H"), ("M", "L"), ("M", "H"), ("H", "L"), ("H", "H")]
        )
    }
    for theta in (0.16, 0.34, 0.5):
        fast = {s.items for s in enumerate_subgroups(itemsets, theta)}
        slow = {cand for cand, _ in brute_frequent_itemsets(itemsets, theta)}
        assert fast == slow
        for s in fast:
            for item in s:
                assert s - {item} in fast

    # Channel saliency on a real (tiny) network: zeroing the stem weights of
    # a channel makes its ablation delta exactly zero; a single-channel
    # oracle concentrates >= 90% of the row mass.
    torch.manual_seed(9)
    cfg = ModelConfig(
        task=Task.MAGNITUDE, levels=2, widths=(4, 8), depths=(1, 1),
        input_height=16, input_width=16, series_length=2, window_months=3,
        climate_hidden=6, head_channels=6,
    )
    model = ClimateGatedUNet(cfg).eval()
    ignored = 2
    green = 1
    with torch.no_grad():
        stem = model.encoder.stem[0]
        stem.weight[:, ignored] = 0.0

    def predict(sample, images):
        with torch.no_grad():
            out = model(torch.from_numpy(images.astype(np.float32)))
        return out[0].numpy()

    def metric(pred, sample):
        return -float(np.mean(np.abs(pred - sample["gt"])))

    samples = [
        {"images": rng.normal(size=(2, 6, 16, 16)), "gt": rng.normal(size=(16, 16))}
        for _ in range(4)
    ]
    assert channel_saliency(predict, samples, metric, ignored) == 0.0

    with torch.no_grad():
        keep = stem.weight[:, green].clone()
        stem.weight.zero_()
        stem.weight[:, green] = keep
    deltas = np.array([channel_saliency(predict, samples, metric, ch) for ch in range(6)])
    mass = np.abs(deltas)
    assert mass.sum() > 0
    assert mass[green] / mass.sum() >= 0.9

    assert time.time() - start < 300.0


def test_criterion_7_pipeline_determinism(tmp_path):
    data = {
        "n_pretrain": 8,
        "n_finetune": 0,
        "n_test": 4,
        "height": 16,
        "width": 16,
        "window_months": 4,
    }
    model = {"levels": 2, "widths": [8, 16], "depths": [1, 1], "climate_hidden": 8, "head_channels": 8,
             "use_dem": True, "use_climate": True}
    schedule = {"pretrain_epochs": 1, "finetune_epochs": 0, "batch_size": 4}

    def write_cfg(name):
        cfg = {
            "task": "change", "seed": 21, "name": name,
            "output_dir": str(tmp_path / "results"),
            "data": data, "model": model, "schedule": schedule,
        }
        path = tmp_path / f"{name}.yaml"
        path.write_text(yaml.safe_dump(cfg))
        return path

    cfg_a = write_cfg("det_a")
    cfg_b = write_cfg("det_b")
    assert cli_main(["gen-data", "--config", str(cfg_a)]) == 0
    assert cli_main(["gen-data", "--config", str(cfg_b)]) == 0
    manifest_a = tmp_path / "results" / "det_a" / "dataset" / "manifest.json"
    manifest_b = tmp_path / "results" / "det_b" / "dataset" / "manifest.json"
    assert dataset_digest(manifest_a) == dataset_digest(manifest_b)

    assert cli_main(["train", "--config", str(cfg_a)]) == 0
    ckpt = tmp_path / "results" / "det_a" / "train" / "best.pt"
    assert cli_main([
        "evaluate", "--config", str(cfg_a), "--checkpoint", str(ckpt),
        "--manifest", str(manifest_a), "--out", str(tmp_path / "eval_a"),
    ]) == 0
    assert cli_main([
        "evaluate", "--config", str(cfg_b), "--checkpoint", str(ckpt),
        "--manifest", str(manifest_b), "--out", str(tmp_path / "eval_b"),
    ]) == 0
    for name in ("model", "constant", "persistence"):
        rep_a = MetricReport.load_json(tmp_path / "eval_a" / f"report_{name}.json")
        rep_b = MetricReport.load_json(tmp_path / "eval_b" / f"report_{name}.json")
        assert rep_a.values.keys() == rep_b.values.keys()
        for key in rep_a.values:
            assert abs(rep_a.values[key] - rep_b.values[key]) <= 1e-4, (name, key)
