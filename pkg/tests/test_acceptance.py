"""End-to-end acceptance checks, one test per criterion, at their stated tolerances."""

import time

import numpy as np
import pytest

from ecgfit.annotate import annotate
from ecgfit.dataset import to_window_set
from ecgfit.extract import duty_cycle_fit
from ecgfit.ingest import split_by_subject
from ecgfit.metrics import accuracy, bland_altman, r_squared, rmse
from ecgfit.nn import (
    ArchConfig,
    StreamingPredictor,
    TrainConfig,
    finetune,
    forward_batch,
    init_model,
    loss_and_grads,
    mtl_forward,
    mtl_loss,
    save_model,
    train,
)
from ecgfit.pipeline import evaluate_windows
from ecgfit.signals import Window, resample
from ecgfit.synth import SynthSpec, gen_dataset, gen_respiratory, spec_bank
from ecgfit.validate import Reason, validate_window

FS = 25.0
SEED = 0
EPOCHS = 300


# -- shared desk-scale training runs ------------------------------------------

def subject_split(specs, n_test, seed):
    m = split_by_subject([(s.subject_id, s.subject_id) for s in specs], n_test=n_test, seed=seed)
    by_id = {s.subject_id: s for s in specs}
    return {name: [by_id[i] for i in m.subjects(name)] for name in ("train", "val", "test")}


@pytest.fixture(scope="module")
def desk_data():
    specs = spec_bank(20, seed=SEED, noise_sd=0.05)
    split = subject_split(specs, n_test=5, seed=SEED)
    return {
        "split": split,
        "train": to_window_set(gen_dataset(split["train"], 25.0)),
        "val": to_window_set(gen_dataset(split["val"], 25.0)),
        "test": gen_dataset(split["test"], 60.0),
    }


@pytest.fixture(scope="module")
def mtl_run(desk_data):
    cfg = TrainConfig(max_epochs=EPOCHS, patience=EPOCHS, seed=SEED, w_reg=1.0)
    started = time.perf_counter()
    model, hist = train(desk_data["train"], desk_data["val"], cfg)
    return model, hist, time.perf_counter() - started


# -- criteria -------------------------------------------------------------------

def relative_error(analytic, numeric):
    return np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-8)


def test_1_gradient_correctness(acceptance):
    arch = ArchConfig(input_dim=2, shared_hidden=(4,), branch_hidden=4, dropout=0.0)
    step = 1e-5
    worst = 0.0
    started = time.perf_counter()
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(10, 3, 2))
        y = (rng.random((10, 3)) < 0.5).astype(float)
        z = rng.uniform(size=(10, 3))
        model = init_model(arch, seed)
        _, grads = loss_and_grads(model, X, y, z)
        for name, base in model.params.items():
            numeric = np.zeros_like(base)
            for i in np.ndindex(base.shape):
                vals = []
                for sign in (1.0, -1.0):
                    params = {k: v.copy() for k, v in model.params.items()}
                    params[name][i] += sign * step
                    fp = forward_batch(model.with_params(params), X)
                    vals.append(mtl_loss(fp.logits, fp.resp, y, z))
                numeric[i] = (vals[0] - vals[1]) / (2 * step)
            worst = max(worst, relative_error(grads[name], numeric))
    elapsed = time.perf_counter() - started
    acceptance(1, "BPTT gradients vs central differences", worst <= 1e-4 and elapsed < 30,
               f"worst relative error {worst:.2e} (<= 1e-4) over 5 seeds, {elapsed:.1f} s (< 30 s)")


def test_2_duty_cycle_oracle(acceptance):
    rng = np.random.default_rng(2)
    mismatches = 0
    complement_failures = 0
    for _ in range(1000):
        n = int(rng.integers(1, 10_001))
        y = rng.integers(0, 2, n)
        brute = sum(1 for v in y.tolist() if v == 1) / n
        mismatches += duty_cycle_fit(y) != brute
        complement_failures += duty_cycle_fit(y) + duty_cycle_fit(1 - y) != 1.0
    acceptance(2, "duty-cycle FIT vs brute-force count", mismatches == 0 and complement_failures == 0,
               f"{mismatches} mismatches, {complement_failures} complement failures in 1000 sequences")


def test_3_annotation_fidelity(acceptance):
    started = time.perf_counter()
    worst_fit = worst_rr = 0.0
    failures = []
    for fit in (0.2, 0.3, 0.4, 0.5, 0.6):
        for rr in (8, 12, 20, 28):
            spec = SynthSpec(fit=fit, rr_bpm=rr, duration_s=60.0, noise_sd=0.0)
            resp, _ = gen_respiratory(spec)
            a = annotate(resample(Window.of(resp.samples, spec.fs), FS))
            d_fit = abs(a.fit - fit)
            d_rr = abs(a.rr_bpm - rr) if a.rr_bpm is not None else np.inf
            worst_fit, worst_rr = max(worst_fit, d_fit), max(worst_rr, d_rr)
            if d_fit > 0.02 or d_rr > 0.5:
                failures.append((fit, rr))
    elapsed = time.perf_counter() - started
    acceptance(3, "annotation on the noise-free FIT x RR grid", not failures and elapsed < 60,
               f"worst |dFIT| {worst_fit:.4f} (<= 0.02), worst |dRR| {worst_rr:.3f} bpm (<= 0.5), "
               f"{len(failures)} failing cells, {elapsed:.1f} s")


def test_4_validation_rules(acceptance):
    t = np.arange(int(25 * FS)) / FS
    rng = np.random.default_rng(4)
    cases = {
        "flat": Window.of(np.zeros_like(t), FS),
        "90 bpm sine": Window.of(np.sin(2 * np.pi * 1.5 * t), FS),
        "white noise": Window.of(rng.standard_normal(len(t)), FS),
        "15 bpm sine": Window.of(np.sin(2 * np.pi * 0.25 * t), FS),
    }
    v = {name: validate_window(w) for name, w in cases.items()}
    reasons = [x.reason for x in v.values() if x.reason is not None]
    ok = (
        v["flat"].reason is Reason.NO_PEAKS
        and v["90 bpm sine"].reason is Reason.RR_TOO_HIGH
        and v["white noise"].reason in (Reason.LOW_SPECTRAL_PURITY, Reason.RR_DISAGREEMENT)
        and v["15 bpm sine"].accepted
        and len(reasons) == len(set(reasons)) == 3
    )
    detail = ", ".join(f"{k} -> {x.reason.value if x.reason else 'accepted'}" for k, x in v.items())
    acceptance(4, "each rejection reason triggered once", ok, detail)


def test_5_desk_scale_training(acceptance, desk_data, mtl_run):
    model, hist, seconds = mtl_run
    s = evaluate_windows(model, desk_data["test"]).summary()
    n_subjects = sum(len(v) for v in desk_data["split"].values())
    ok = (s["accuracy"] >= 0.90 and s["rmse_fit"] <= 0.05 and s["rmse_rr"] <= 1.0
          and hist.epochs <= 300 and seconds <= 600 and n_subjects >= 20)
    acceptance(5, "desk-scale MTL training on held-out subjects", ok,
               f"accuracy {s['accuracy']:.4f} (>= 0.90), FIT RMSE {s['rmse_fit']:.4f} (<= 0.05), "
               f"RR RMSE {s['rmse_rr']:.3f} bpm (<= 1.0), {hist.epochs} epochs, {seconds:.0f} s, "
               f"{n_subjects} subjects")


def test_6_mtl_vs_single_task(acceptance, desk_data, mtl_run):
    _, mtl_hist, _ = mtl_run
    cfg = TrainConfig(max_epochs=EPOCHS, patience=EPOCHS, seed=SEED, w_reg=0.0)
    _, single_hist = train(desk_data["train"], desk_data["val"], cfg)
    acceptance(6, "MTL reaches its best validation accuracy no later than single-task",
               mtl_hist.best_epoch <= single_hist.best_epoch,
               f"MTL best epoch {mtl_hist.best_epoch} (acc {mtl_hist.best_val_accuracy:.4f}), "
               f"single-task best epoch {single_hist.best_epoch} "
               f"(acc {single_hist.best_val_accuracy:.4f})")


def test_7_parameter_budget(acceptance, tmp_path, capsys):
    count = save_model(init_model(ArchConfig(), 0), tmp_path / "m.bin")
    printed = f"trainable parameters: {count}" in capsys.readouterr().out
    ok = count == 1702 and abs(count - 1656) <= 0.25 * 1656 and printed
    acceptance(7, "default parameter count", ok,
               f"{count} parameters, {100 * (count - 1656) / 1656:+.1f}% vs 1656 (within +/-25%), "
               f"printed on save: {printed}")


def test_8_streaming_equivalence(acceptance):
    rng = np.random.default_rng(8)
    mismatched = 0
    for k in range(100):
        model = init_model(ArchConfig(), seed=k % 10)
        F = rng.uniform(size=(3, int(rng.integers(20, 200))))
        p, r = mtl_forward(F, model)
        stream = StreamingPredictor(model)
        ps = np.empty_like(p)
        rs = np.empty_like(r)
        for t in range(F.shape[1]):
            ps[t], rs[t] = stream.step(F[:, t])
        mismatched += not (np.array_equal(p, ps) and np.array_equal(r, rs))
    acceptance(8, "sample-by-sample inference equals whole-window inference", mismatched == 0,
               f"{mismatched} of 100 random windows differ (bit-exact comparison)")


def test_9_transfer_learning(acceptance):
    fam_a = spec_bank(10, seed=100, fit_range=(0.4, 0.6), noise_sd=0.05)
    fam_b = [SynthSpec.from_dict({**s.to_dict(), "subject_id": f"b{i:02d}"})
             for i, s in enumerate(spec_bank(10, seed=200, fit_range=(0.2, 0.4), noise_sd=0.05))]
    a = subject_split(fam_a, n_test=1, seed=1)
    b = subject_split(fam_b, n_test=3, seed=2)
    pre_cfg = TrainConfig(max_epochs=150, patience=50, seed=1)
    pretrained, _ = train(to_window_set(gen_dataset(a["train"], 25.0)),
                          to_window_set(gen_dataset(a["val"], 25.0)), pre_cfg)
    b_test = gen_dataset(b["test"], 60.0)
    before = evaluate_windows(pretrained, b_test).summary()["rmse_fit"]
    ft_cfg = TrainConfig(max_epochs=100, patience=50, seed=2)
    tuned, _ = finetune(pretrained, to_window_set(gen_dataset(b["train"], 25.0)),
                        to_window_set(gen_dataset(b["val"], 25.0)), ft_cfg)
    after = evaluate_windows(tuned, b_test).summary()["rmse_fit"]
    acceptance(9, "fine-tuning on family B improves FIT RMSE on B", after < before,
               f"FIT RMSE on B: pretrained {before:.4f} -> fine-tuned {after:.4f}")


def test_10_metrics_hand_values(acceptance):
    checks = {
        "accuracy (50,20,15,15) = 0.70": accuracy(50, 20, 15, 15) == pytest.approx(0.70),
        "accuracy (10,10,0,0) = 1": accuracy(10, 10, 0, 0) == 1.0,
        "accuracy (0,0,5,5) = 0": accuracy(0, 0, 5, 5) == 0.0,
        "rmse {(0.4,0.39)} = 0.01": rmse([(0.4, 0.39)]) == pytest.approx(0.01, abs=1e-12),
        "rmse identical = 0": rmse([(1.0, 1.0), (3.0, 3.0)]) == 0.0,
        "rmse {(0,2),(0,-2)} = 2": rmse([(0, 2), (0, -2)]) == 2.0,
        "r2 perfect = 1": r_squared([(1, 1), (2, 2), (3, 3)]) == 1.0,
        "r2 mean predictor = 0": r_squared([(1, 2), (2, 2), (3, 2)]) == 0.0,
        "r2 worse than mean < 0": r_squared([(1, 3), (2, 2), (3, 1)]) < 0,
        "BA identical = (0,0,0)": tuple(bland_altman([(1, 1), (2, 2)])) == (0.0, 0.0, 0.0),
        "BA bias +1 = (1,1,1)": bland_altman([(0, 1), (2, 3), (5, 6)]) == pytest.approx((1, 1, 1)),
        "BA {-1,+1} = (0,-1.96,1.96)": bland_altman([(0, -1), (0, 1)]) == pytest.approx((0, -1.96, 1.96)),
    }
    failed = [k for k, ok in checks.items() if not ok]
    acceptance(10, "metrics against hand-computed values", not failed,
               f"{len(checks) - len(failed)}/{len(checks)} hand values reproduced"
               + (f"; failed: {failed}" if failed else ""))
