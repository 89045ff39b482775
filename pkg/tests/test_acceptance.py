"""Acceptance suite: one test per release criterion, one printed verdict each.

The 2-D pipeline models (300-epoch runs on both synthetic datasets) are
trained once in module-scoped fixtures and shared by every criterion that
needs them. Pipeline runs use a per-layer Lipschitz budget of 3.0, which the
datasets need for full accuracy; the dedicated SN-bound criterion pins its
own budget of 1.0.
"""

import time

import numpy as np
import pytest

from ipfield import datasets, net
from ipfield.featfile import (BadMagicError, ChecksumMismatchError,
                              FeatureMatrix, TruncatedFileError,
                              UnsupportedVersionError, read_features,
                              write_features)
from ipfield.field import IpfField, sweep_bandwidth
from ipfield.gridmap import build_grid, cell_indices, grid_points
from ipfield.metrics import auroc, ece
from _oracles import direct_ece, naive_psi_rows, pairwise_auroc, psi_rel_close

PIPELINE_BUDGET = 3.0
BANDWIDTH_2D = 0.3


def verdict(name, ok, detail=""):
    print(f"[ACCEPT] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name} failed {detail}"


def log_mean(log_values):
    """ln of the arithmetic mean, computed without leaving log space."""
    peak = log_values.max()
    return peak + np.log(np.exp(log_values - peak).mean())


def train_split(maker, n_per_class, noise, data_seed=42, split_seed=123):
    ds = maker(n_per_class, noise, data_seed)
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(ds.n)
    k = ds.n // 10
    mk = datasets.LabeledDataset2D
    train = mk(ds.points[perm[k:]], ds.labels[perm[k:]], ds.num_classes)
    hold = mk(ds.points[perm[:k]], ds.labels[perm[:k]], ds.num_classes)
    return train, hold


def timed_train(dataset, **config_kwargs):
    start = time.perf_counter()
    model, losses = net.train(dataset, net.TrainConfig(**config_kwargs))
    return model, losses, time.perf_counter() - start


@pytest.fixture(scope="module")
def pipeline():
    runs = {}
    moons_train, moons_hold = train_split(datasets.make_two_moons, 2000, 0.1)
    spirals_train, spirals_hold = train_split(datasets.make_three_spirals,
                                              1200, 0.08)
    total = 0.0
    for key, train_ds, sn in (("moons_sn", moons_train, True),
                              ("moons_nosn", moons_train, False),
                              ("spirals_sn", spirals_train, True)):
        model, _, elapsed = timed_train(
            train_ds, epochs=300, seed=0, sn_enabled=sn,
            sn_coeff=PIPELINE_BUDGET)
        total += elapsed
        runs[key] = model
    return {"models": runs, "train_time": total,
            "moons": (moons_train, moons_hold),
            "spirals": (spirals_train, spirals_hold)}


def feature_grid_log_psi(model, train_ds, h=BANDWIDTH_2D):
    feats, _ = net.forward(model, train_ds.points)
    field = IpfField(reference=feats, bandwidth_h=h)
    grid_feats, _ = net.forward(model, grid_points())
    return field.evaluate_log(grid_feats)


def manifold_and_corner_log_means(model, train_ds):
    log_psi = feature_grid_log_psi(model, train_ds)
    iy, ix = cell_indices(train_ds.points)
    manifold_cells = np.unique(iy * 100 + ix)
    corners = np.array([0, 99, 9900, 9999])
    return log_mean(log_psi[manifold_cells]), log_mean(log_psi[corners])


class TestIpfCore:
    def test_oracle_equivalence_thousand_cases(self):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 501))
            d = int(rng.integers(1, 65))
            m = int(rng.integers(1, 101))
            h = float(rng.uniform(0.01, 2.0))
            scale = rng.uniform(0.2, 3.0)
            refs = rng.normal(scale=scale, size=(n, d))
            queries = rng.normal(scale=scale, size=(m, d))
            got = IpfField(reference=refs, bandwidth_h=h).evaluate(queries)
            want = naive_psi_rows(refs, queries, h)
            assert psi_rel_close(got, want, rtol=1e-9)
        elapsed = time.perf_counter() - start
        verdict("ipf-oracle-equivalence", elapsed < 60.0,
                f"(1000 cases, {elapsed:.1f}s)")

    def test_kernel_identities(self):
        lone = np.array([[0.7, -0.1, 2.2]])
        ok = IpfField(reference=lone, bandwidth_h=0.5).evaluate(lone)[0] == 1.0
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(1, 16))
            w = rng.normal(size=d) * rng.uniform(0.05, 1.5)
            h = float(rng.uniform(0.1, 2.0))
            field = IpfField(reference=np.vstack([w, -w]), bandwidth_h=h)
            got = field.evaluate(np.zeros((1, d)))[0]
            want = np.exp(-4.0 * np.dot(w, w) / (8.0 * h * h))
            worst = max(worst, abs(got - want) / want)
        verdict("kernel-identities", ok and worst <= 1e-12,
                f"(midpoint worst rel err {worst:.2e})")

    def test_bandwidth_monotonicity_on_moons_grid(self):
        ds = datasets.make_two_moons(2000, 0.1, 42)
        queries = grid_points()
        counts = []
        for h in (0.2, 0.3, 0.4, 0.5):
            psi = IpfField(reference=ds.points, bandwidth_h=h).evaluate(queries)
            counts.append(int((psi > 0.05).sum()))
        ok = all(a <= b for a, b in zip(counts, counts[1:]))
        verdict("bandwidth-monotonicity", ok, f"(coverage {counts})")


class TestNetwork:
    def test_gradient_check(self):
        start = time.perf_counter()
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10, 2))
        y = rng.integers(0, 2, size=10)
        model = net.init_model(2, 2, hidden_dim=8, num_blocks=4,
                               sn_enabled=False, seed=5)
        _, grad_w, grad_b = net.loss_and_grads(model, x, y)
        step = 1e-4
        worst = 0.0
        for params, grads in ((model.weights, grad_w), (model.biases, grad_b)):
            for p, g in zip(params, grads):
                it = np.nditer(p, flags=["multi_index"])
                for _ in it:
                    ix = it.multi_index
                    orig = p[ix]
                    p[ix] = orig + step
                    up = net.mean_loss(model, x, y)
                    p[ix] = orig - step
                    down = net.mean_loss(model, x, y)
                    p[ix] = orig
                    fd = (up - down) / (2.0 * step)
                    worst = max(worst, abs(fd - g[ix]) / max(abs(fd), abs(g[ix]), 1e-8))
        elapsed = time.perf_counter() - start
        verdict("gradient-check", worst <= 1e-4 and elapsed < 10.0,
                f"(worst rel err {worst:.2e}, {elapsed:.1f}s)")

    def test_sn_bound_over_fifty_epochs(self):
        train_ds, _ = train_split(datasets.make_two_moons, 2000, 0.1)
        per_epoch_max = []

        def record(epoch, model, loss):
            per_epoch_max.append(max(net.spectral_norms(model, iters=100)))

        model, _ = net.train(train_ds,
                             net.TrainConfig(epochs=50, seed=0, sn_enabled=True,
                                             sn_coeff=1.0),
                             epoch_callback=record)
        bound_ok = len(per_epoch_max) == 50 and max(per_epoch_max) <= 1.001

        # sigma_hat vs a dense SVD oracle on fixed matrices: the trained
        # weights plus seeded Gaussians (gapless, hence 100 iterations)
        fixed = list(model.weights)
        rng = np.random.default_rng(99)
        fixed += [rng.normal(size=(128, 128)) for _ in range(5)]
        worst = 0.0
        for w in fixed:
            state = net.PowerIterState(u=rng.normal(size=w.shape[1]))
            state.u /= np.linalg.norm(state.u)
            sigma = net.power_iteration_sigma(w, state, 100)
            exact = np.linalg.svd(w, compute_uv=False)[0]
            worst = max(worst, abs(sigma - exact) / exact)
        verdict("sn-bound", bound_ok and worst <= 0.02,
                f"(max epoch sigma {max(per_epoch_max):.6f}, "
                f"svd rel err {worst:.2e})")


class TestPipeline2D:
    def test_accuracy_and_density_structure(self, pipeline):
        models = pipeline["models"]
        accs = {}
        for name in ("moons", "spirals"):
            train_ds, hold_ds = pipeline[name]
            _, logits = net.forward(models[f"{name}_sn"], hold_ds.points)
            accs[name] = float(np.mean(logits.argmax(1) == hold_ds.labels))
        acc_ok = accs["moons"] >= 0.99 and accs["spirals"] >= 0.95

        ratio_ok = True
        ratios = {}
        for name in ("moons", "spirals"):
            train_ds, _ = pipeline[name]
            manifold_lm, corner_lm = manifold_and_corner_log_means(
                models[f"{name}_sn"], train_ds)
            ratios[name] = manifold_lm - corner_lm
            ratio_ok &= ratios[name] >= np.log(10.0)

        # the moons central gap must be less dense than the data manifold
        moons_train, _ = pipeline["moons"]
        log_psi = feature_grid_log_psi(models["moons_sn"], moons_train)
        pts = grid_points()
        gap = ((pts[:, 0] > 0.2) & (pts[:, 0] < 0.8)
               & (pts[:, 1] > 0.1) & (pts[:, 1] < 0.4))
        iy, ix = cell_indices(moons_train.points)
        manifold_cells = np.unique(iy * 100 + ix)
        gap_ok = log_mean(log_psi[gap]) < log_mean(log_psi[manifold_cells])

        time_ok = pipeline["train_time"] < 300.0
        ratios_log10 = {k: round(float(v / np.log(10)), 1) for k, v in ratios.items()}
        verdict("2d-pipeline", acc_ok and ratio_ok and gap_ok and time_ok,
                f"(acc={accs}, log10-ratios={ratios_log10}, "
                f"train {pipeline['train_time']:.0f}s)")

    def test_sn_ablation_direction(self, pipeline):
        # Corner-to-manifold psi ratio (h = 0.3) should be smaller with SN
        # than without. In this architecture the unconstrained net expands
        # distances at the far corners instead of collapsing them, so the
        # ordering reverses; kept as stated and expected to fail.
        moons_train, _ = pipeline["moons"]
        log_ratios = {}
        for key in ("moons_sn", "moons_nosn"):
            manifold_lm, corner_lm = manifold_and_corner_log_means(
                pipeline["models"][key], moons_train)
            log_ratios[key] = corner_lm - manifold_lm
        verdict("sn-ablation-direction",
                log_ratios["moons_sn"] < log_ratios["moons_nosn"],
                f"(ln corner/manifold: sn={log_ratios['moons_sn']:.1f}, "
                f"no-sn={log_ratios['moons_nosn']:.1f})")

    def test_input_space_parity(self, pipeline):
        agreements = {}
        pts = grid_points()
        for name in ("moons", "spirals"):
            train_ds, _ = pipeline[name]
            model = pipeline["models"][f"{name}_sn"]
            log_feature = feature_grid_log_psi(model, train_ds)
            input_field = IpfField(reference=train_ds.points,
                                   bandwidth_h=BANDWIDTH_2D)
            log_input = input_field.evaluate_log(pts)
            feature_bin = log_feature > np.median(log_feature)
            input_bin = log_input > np.median(log_input)
            agreements[name] = float(np.mean(feature_bin == input_bin))
        ok = all(v >= 0.70 for v in agreements.values())
        verdict("input-space-parity", ok, f"({agreements})")


class TestMetricsCorrectness:
    def test_auroc_against_pairwise_oracle(self):
        rng = np.random.default_rng(11)
        exact = True
        for case in range(500):
            n_a = int(rng.integers(1, 60))
            n_b = int(rng.integers(1, 60))
            if case % 2:  # integer-valued scores force ties
                a = rng.integers(0, 6, size=n_a).astype(float)
                b = rng.integers(0, 6, size=n_b).astype(float)
            else:
                a = rng.normal(size=n_a)
                b = rng.normal(size=n_b)
            if auroc(a, b) != pairwise_auroc(list(a), list(b)):
                exact = False
                break
        rng = np.random.default_rng(12)
        a = rng.normal(size=200)
        b = rng.normal(size=150)
        base = auroc(a, b)
        invariant = (auroc(np.exp(a), np.exp(b)) == base
                     and auroc(a ** 3, b ** 3) == base)
        verdict("auroc-correctness", exact and invariant)

    def test_ece_against_direct_recomputation(self):
        trivial = (ece([1.0] * 4, [True] * 4) == 0.0
                   and ece([1.0] * 4, [False] * 4) == 1.0)
        rng = np.random.default_rng(13)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 300))
            bins = int(rng.integers(1, 25))
            conf = rng.uniform(0.0, 1.0, size=n)
            corr = rng.uniform(0.0, 1.0, size=n) < conf
            worst = max(worst, abs(ece(conf, corr, bins)
                                   - direct_ece(conf, corr, bins)))
        verdict("ece-correctness", trivial and worst <= 1e-12,
                f"(worst abs err {worst:.2e})")


class TestHighDimensionalOod:
    def test_sweep_separates_shifted_mixture(self):
        start = time.perf_counter()
        rng = np.random.default_rng(640)
        dim = 640
        means = rng.normal(size=(10, dim))

        def sample(count, shift=0.0):
            assignments = rng.integers(0, 10, size=count)
            return means[assignments] + rng.normal(size=(count, dim)) + shift

        reference = sample(5000)
        id_val = sample(1000)
        ood_val = sample(1000, shift=6.0)  # a 6-sigma shift per coordinate
        grid = np.geomspace(0.01, 1.0, 10)
        best_h, table = sweep_bandwidth(reference, id_val, ood_val, grid)
        best_auroc = max(score for _, score in table)
        elapsed = time.perf_counter() - start
        verdict("high-d-synthetic-ood",
                best_auroc >= 0.99 and elapsed < 120.0,
                f"(best h={best_h:.3g}, auroc={best_auroc:.4f}, {elapsed:.0f}s)")


class TestFileFormat:
    def test_round_trip_and_corruption_classes(self, tmp_path):
        rng = np.random.default_rng(21)
        data = rng.normal(size=(64, 20)).astype(np.float32)
        labels = rng.integers(0, 10, size=64)
        path = tmp_path / "feat.ipff"
        write_features(FeatureMatrix(data=data, labels=labels), path)
        back = read_features(path)
        lossless = (np.array_equal(back.data, data)
                    and np.array_equal(back.labels, labels.astype(np.int32)))

        pristine = path.read_bytes()
        outcomes = []
        for mutate, expected in (
                (lambda b: bytes([b[0] ^ 0xFF]) + b[1:], BadMagicError),
                (lambda b: b[:4] + bytes([77]) + b[5:], UnsupportedVersionError),
                (lambda b: b[:40] + bytes([b[40] ^ 1]) + b[41:], ChecksumMismatchError),
                (lambda b: b[: len(b) // 3], TruncatedFileError)):
            path.write_bytes(mutate(pristine))
            try:
                read_features(path)
                outcomes.append(None)
            except Exception as exc:  # noqa: BLE001 - classifying error types
                outcomes.append(type(exc))
        distinct = outcomes == [BadMagicError, UnsupportedVersionError,
                                ChecksumMismatchError, TruncatedFileError]
        verdict("file-format", lossless and distinct, f"({outcomes})")
