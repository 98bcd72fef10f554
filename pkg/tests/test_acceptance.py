"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also printed to the terminal when output is captured.
"""
import math
import time

import numpy as np
import pytest

from ricens import dataio
from ricens.config import PipelineConfig
from ricens.ensemble import compute_weights
from ricens.evaluation import adjusted_r2, compute_metrics
from ricens.nn import HUBER, MAE, MSE, gradient_check
from ricens.pipeline import ENSEMBLE, run_pipeline
from ricens.regressors import MEMBER_IDS, build_member
from ricens.selection import paper_selected_features, selection_pipeline
from ricens.spectral import BandReflectances, IndexId, SarBackscatter, compute_optical_index, compute_rvi
from ricens.synthetic import SyntheticSpec

from test_selection import planted_table
from test_spectral import BANDS, NORMALIZED_PAIRS, oracle


@pytest.fixture
def verdict(capsys):
    def record(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return record


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def end_to_end(tmp_path_factory):
    """Default configuration on 557 synthetic rows with sigma = 300 kg/ha, run twice."""
    root = tmp_path_factory.mktemp("acceptance")
    config = PipelineConfig()
    spec = SyntheticSpec(n_records=557, noise_sd=300.0)
    first, seconds = timed(lambda: run_pipeline(config, root / "a", synthetic=spec))
    second = run_pipeline(config, root / "b", synthetic=spec)
    return config, first, second, seconds


def test_criterion_1_adjusted_r2(verdict):
    value = adjusted_r2(0.633, 139, 15)
    verdict(1, 0.587 <= value <= 0.590, f"adjusted R2(r2=0.633, n=139, k=15) = {value:.5f} in [0.587, 0.590]")


def test_criterion_2_weight_algebra(verdict):
    def check():
        rng = np.random.default_rng(2)
        for _ in range(1000):
            e = rng.uniform(1e-3, 1e3, size=int(rng.integers(1, 9)))
            w = compute_weights(e)
            if abs(w.sum() - 1.0) > 1e-12 or np.any(w <= 0):
                return False
            order = np.argsort(e, kind="stable")
            if np.any(np.diff(w[order]) > 1e-15):
                return False
            if not np.allclose(compute_weights(e * rng.uniform(1e-6, 1e6)), w, rtol=1e-12, atol=0):
                return False
        return True
    ok, seconds = timed(check)
    verdict(2, ok and seconds < 1.0, f"1000 error vectors: sum=1, monotone in 1/e, scale invariant ({seconds:.3f}s)")


def test_criterion_3_ensemble_error_bound(end_to_end, verdict):
    config, first, second, _ = end_to_end
    checks = []
    for run in (first, second):
        s = run.summary.set_index("Model")
        w = dict(zip(MEMBER_IDS, run.train.ensemble.weights))
        rmse_mix = sum(w[m] * s.loc[m, "RMSE"] for m in MEMBER_IDS)
        mae_mix = sum(w[m] * s.loc[m, "MAE"] for m in MEMBER_IDS)
        checks.append(s.loc[ENSEMBLE, "RMSE"] <= rmse_mix <= max(s.loc[m, "RMSE"] for m in MEMBER_IDS))
        checks.append(s.loc[ENSEMBLE, "MAE"] <= mae_mix)
    s = first.summary.set_index("Model")
    verdict(3, all(checks), f"RMSE(ens) {s.loc[ENSEMBLE, 'RMSE']:.1f} <= weighted {rmse_mix:.1f} <= max member; "
                            f"MAE(ens) {s.loc[ENSEMBLE, 'MAE']:.1f} <= weighted {mae_mix:.1f}")


def test_criterion_4_gradient_fidelity(verdict):
    def check():
        rng = np.random.default_rng(4)
        x = rng.uniform(size=(10, 15))
        y = rng.normal(size=10)
        worst = {}
        for member in MEMBER_IDS:
            for loss in (MSE, MAE, HUBER):
                net = build_member(member, 15, seed=3)
                worst[(member, loss.name)] = gradient_check(net, loss, x, y)
        return worst
    worst, seconds = timed(check)
    top = max(worst.values())
    verdict(4, top < 1e-4 and seconds < 30.0,
            f"4 members x (mse, mae, huber): max relative error {top:.2e} < 1e-4 ({seconds:.1f}s)")


def test_criterion_5_index_oracles(verdict):
    def check():
        rng = np.random.default_rng(5)
        worst, props = 0.0, True
        for _ in range(50):
            values = dict(zip(BANDS, rng.uniform(0.01, 1.2, size=len(BANDS))))
            bands = BandReflectances(**values)
            scaled = BandReflectances(**{k: 3.7 * v for k, v in values.items()})
            for index in IndexId:
                got = compute_optical_index(index, bands)
                try:
                    want = oracle(index.value, values)
                except ValueError:
                    want = math.nan
                if math.isnan(want) or math.isnan(got):
                    props &= math.isnan(want) and math.isnan(got)
                    continue
                worst = max(worst, abs(got - want) / max(1.0, abs(want)))
            for index, (a, b) in NORMALIZED_PAIRS.items():
                v = compute_optical_index(index, bands)
                swapped = BandReflectances(**{**values, a: values[b], b: values[a]})
                props &= -1.0 <= v <= 1.0
                props &= abs(compute_optical_index(index, swapped) + v) <= 1e-12
                props &= abs(compute_optical_index(index, scaled) - v) <= 1e-12
            for index in (IndexId.SR, IndexId.GCC, IndexId.RGVI, IndexId.kNDVI):
                props &= abs(compute_optical_index(index, scaled) - compute_optical_index(index, bands)) <= 1e-12
            props &= 0.0 <= compute_optical_index(IndexId.kNDVI, bands) < 1.0
            vv, vh = rng.uniform(1e-3, 1.0, size=2)
            rvi = compute_rvi(SarBackscatter(vv, vh))
            worst = max(worst, abs(rvi - vv / (vv + vh)))
            props &= 0.0 < rvi < 1.0
            props &= abs(compute_rvi(SarBackscatter(5 * vv, 5 * vh)) - rvi) <= 1e-12
        return worst, props
    (worst, props), seconds = timed(check)
    verdict(5, worst <= 1e-10 and props and seconds < 1.0,
            f"20 indices + RVI on 50 vectors: max error {worst:.1e}, properties hold={props} ({seconds:.2f}s)")


def brute_metrics(pred, actual, k):
    n = len(actual)
    mean = sum(actual) / n
    abs_sum = sq_sum = tot = 0.0
    for p, a in zip(pred, actual):
        abs_sum += abs(p - a)
        sq_sum += (p - a) ** 2
        tot += (a - mean) ** 2
    r2 = 1 - sq_sum / tot
    return abs_sum / n, math.sqrt(sq_sum / n), r2, 1 - (1 - r2) * (n - 1) / (n - k - 1)


def test_criterion_6_metric_oracle(verdict):
    def check():
        rng = np.random.default_rng(6)
        worst, ordered = 0.0, True
        for _ in range(1000):
            n = int(rng.integers(20, 60))
            actual = rng.normal(5000, 800, size=n)
            pred = actual + rng.normal(0, 300, size=n)
            m = compute_metrics(pred, actual, 5)
            ref = brute_metrics(pred.tolist(), actual.tolist(), 5)
            got = (m.mae, m.rmse, m.r2, m.adjusted_r2)
            worst = max(worst, max(abs(g - r) / max(1.0, abs(r)) for g, r in zip(got, ref)))
            ordered &= m.rmse >= m.mae
        return worst, ordered
    (worst, ordered), seconds = timed(check)
    verdict(6, worst <= 1e-12 and ordered and seconds < 1.0,
            f"1000 pairs: max deviation {worst:.1e}, rmse >= mae on all={ordered} ({seconds:.2f}s)")


FIXED_SUBSET = ["Season_Enc", "Dist_ChauPhu", "Dist_ChauThanh", "Dist_ThoaiSon", "Yield_kg", "Rainfall_growth_max",
           "Rainfall_growth_sum", "Rainfall_maturity_max", "VV_mean", "B08_max", "RGVI_mean", "kNDVI_mean",
           "GCC_mean", "LST_mean", "MET_solrad_mean"]


def test_criterion_7_selection_sanity(verdict):
    def check():
        ok = True
        for seed in range(3):
            frame, y = planted_table(seed=seed)
            report = selection_pipeline(frame, y)
            ok &= {"sig_a", "sig_b", "sig_c", "Season_Enc"} <= set(report.surviving)
            ok &= not {"dup_a", "const", "noise_1", "noise_2", "season_copy"} & set(report.surviving)
        return ok
    ok, seconds = timed(check)
    names = paper_selected_features()
    fixed = sorted(names) == sorted(FIXED_SUBSET) and len(names) == 15
    verdict(7, ok and fixed and seconds < 5.0,
            f"planted nuisances dropped and signal kept={ok}; fixed list is the 15 names={fixed} ({seconds:.2f}s)")


def test_criterion_8_end_to_end_recovery(end_to_end, verdict):
    _, first, _, seconds = end_to_end
    s = first.summary.set_index("Model")
    floor = 300.0 * math.sqrt(2 / math.pi)
    r2, mae = s.loc[ENSEMBLE, "Test R2"], s.loc[ENSEMBLE, "MAE"]
    verdict(8, r2 >= 0.6 and mae <= 1.15 * floor and seconds < 300,
            f"557 rows, sigma=300: test R2 {r2:.3f} >= 0.6, MAE {mae:.1f} <= {1.15 * floor:.1f} ({seconds:.1f}s)")


def test_criterion_9_protocol(end_to_end, verdict):
    config, first, second, _ = end_to_end
    split = dataio.read_frame(first.out_dir / "split.csv")
    n_train = int((split["role"] == "train").sum())
    folds = dataio.read_frame(first.out_dir / "cv_folds.csv")
    partition = len(folds) == 10 and int(folds["size"].sum()) == n_train
    once = first.test_accesses == 1 and second.test_accesses == 1
    files = sorted(p.relative_to(first.out_dir) for p in first.out_dir.rglob("*") if p.is_file())
    same = files == sorted(p.relative_to(second.out_dir) for p in second.out_dir.rglob("*") if p.is_file())
    same &= all((first.out_dir / f).read_bytes() == (second.out_dir / f).read_bytes() for f in files)
    verdict(9, once and partition and same,
            f"test split read once={once}; 10 folds partition {n_train} train rows={partition}; "
            f"{len(files)} artifacts byte-identical={same}")
