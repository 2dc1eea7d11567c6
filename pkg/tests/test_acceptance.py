"""Acceptance suite: nine go/no-go checks for the full testbed.

Each test prints one PASS/FAIL line on the terminal (bypassing capture) and
then asserts, so a plain pytest run shows the per-criterion verdicts.
"""

import hashlib

import numpy as np
import pytest

from smoothdef.attacks import PgdSpec, generate_attack_set
from smoothdef.classifier import (
    TrainConfig,
    accuracy,
    build_model,
    loss_and_input_gradient,
    train,
)
from smoothdef.dataset import make_synthetic_dataset
from smoothdef.filters import (
    SmootherMethod,
    anisotropic_diffusion,
    apply_smoother,
    bilateral_filter,
    default_spec,
    gaussian_filter,
    gaussian_kernel_1d,
    modified_curvature_motion,
    nlm_patch_kernel,
    non_local_means,
)
from smoothdef.harness import (
    AttackSet,
    adaptive_upper_bound_accuracy,
    cross_evaluate_subsets,
    defendability_matrix,
    defense_strength_sweep,
    emit_report,
    evaluate_records,
    min_defense_iterations,
)
from smoothdef.image import Image, laplacian

EPSILON = 0.1
PGD_STEP = 0.02
PGD_ITERS = 20
SWEEP_DEFENSE = default_spec(SmootherMethod.ANISOTROPIC_DIFFUSION, edge_scale=1.0)


def say(capsys, text):
    with capsys.disabled():
        print(text)


def verdict(capsys, num, ok, detail):
    say(capsys, f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def train_pipeline(seed, out_dir):
    """Train on the digit corpus and attack the 500-sample test split."""
    train_set = make_synthetic_dataset(2000, seed)
    test_set = make_synthetic_dataset(500, 10_000 + seed, "test")
    model = train(train_set, TrainConfig(seed=seed))
    clean = accuracy(model, test_set)
    spec = PgdSpec(epsilon=EPSILON, iterations=PGD_ITERS, step_size=PGD_STEP, seed=seed)
    manifest = generate_attack_set(model, test_set, spec, out_dir)
    adv_correct = sum(not s["success"] for s in manifest["samples"])
    return model, test_set, clean, adv_correct / len(test_set)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    model, test_set, clean, adv = train_pipeline(0, out)
    return {
        "model": model,
        "test_set": test_set,
        "clean": clean,
        "adv": adv,
        "attack_dir": out,
        "attack_set": AttackSet.load(out),
    }


@pytest.fixture(scope="module")
def sweep5(desk):
    result, _ = defense_strength_sweep(
        desk["model"], desk["attack_set"], SWEEP_DEFENSE, list(range(1, 31))
    )
    return result


def test_criterion_1_filter_oracles(capsys, rng):
    failures = []

    const = Image(np.full((12, 12, 1), 0.42))
    for method in SmootherMethod:
        spec = default_spec(method) if method is not SmootherMethod.NON_LOCAL_MEANS \
            else default_spec(method, search_radius=4)
        err = np.abs(apply_smoother(spec, const).data - 0.42).max()
        if err > 1e-12:
            failures.append(f"{method.value} constant fixed point err {err:.2e}")

    arr = np.zeros((21, 21))
    arr[10, 10] = 1.0
    g = gaussian_kernel_1d(1.5, 4)
    want = np.zeros((21, 21))
    want[6:15, 6:15] = np.outer(g, g)
    err = np.abs(gaussian_filter(Image(arr), 1.5, 4).data[:, :, 0] - want).max()
    if err > 1e-12:
        failures.append(f"gaussian impulse err {err:.2e}")

    img = Image(rng.uniform(size=(15, 15, 1)))
    bil = bilateral_filter(img, 9, 2.0, 1e6)
    gau = gaussian_filter(img, 2.0, 4)
    err = np.abs(bil.data - gau.data).max()
    if err > 1e-6:
        failures.append(f"bilateral gaussian limit err {err:.2e}")

    kern = nlm_patch_kernel(3, 2.0)
    if abs(kern.sum() - 1.0) > 1e-12:
        failures.append("nlm patch kernel not normalized")
    out = non_local_means(img, 2, 3, 0.2)
    lo, hi = img.data.min(), img.data.max()
    if out.data.min() < lo - 1e-12 or out.data.max() > hi + 1e-12:
        failures.append("nlm output escapes the convex hull of inputs")

    noisy = Image(rng.uniform(size=(16, 16, 1)))
    diffused = anisotropic_diffusion(noisy, 30, "exponential", 0.1, 0.25)
    rel = abs(diffused.data.mean() - noisy.data.mean()) / abs(noisy.data.mean())
    if rel > 1e-10:
        failures.append(f"diffusion mean drift {rel:.2e}")
    step_in = noisy
    for _ in range(10):
        step_out = anisotropic_diffusion(step_in, 1, "exponential", 0.2, 0.25)
        if step_out.data.max() > step_in.data.max() + 1e-12 or \
                step_out.data.min() < step_in.data.min() - 1e-12:
            failures.append("diffusion violates the maximum principle")
            break
        step_in = step_out

    k, dt = 1e-3, 0.1
    mcm = modified_curvature_motion(noisy, 1, k, dt)
    heat = noisy.data + dt * k * k * laplacian(noisy).data
    err = np.abs(mcm.data - heat).max()
    if err > 1e-6:
        failures.append(f"mcm heat limit err {err:.2e}")

    verdict(capsys, 1, not failures,
            "; ".join(failures) if failures else "all filter oracles within tolerance")


def test_criterion_2_gradient_check(capsys):
    delta = 1e-5
    check_rng = np.random.default_rng(202)
    worst = 0.0
    for trial in range(10):
        model = build_model((12, 12, 1), num_classes=4, seed=trial)
        arr = check_rng.uniform(0.1, 0.9, (12, 12, 1))
        label = int(check_rng.integers(0, 4))
        _, grad = loss_and_input_gradient(model, Image(arr), label)
        for _ in range(8):
            i, j = check_rng.integers(0, 12, 2)
            hi, lo = arr.copy(), arr.copy()
            hi[i, j, 0] += delta
            lo[i, j, 0] -= delta
            l_hi, _ = loss_and_input_gradient(model, Image(hi), label)
            l_lo, _ = loss_and_input_gradient(model, Image(lo), label)
            fd = (l_hi - l_lo) / (2 * delta)
            denom = max(abs(fd), abs(grad.data[i, j, 0]), 1e-8)
            worst = max(worst, abs(fd - grad.data[i, j, 0]) / denom)
    verdict(capsys, 2, worst < 1e-4,
            f"max relative gradient error {worst:.2e} over 10 triples")


def test_criterion_3_attack_contract(capsys):
    from smoothdef.attacks import pgd_init, pgd_run

    rng = np.random.default_rng(303)
    model = build_model((12, 12, 1), num_classes=4, seed=3)
    spec = PgdSpec(epsilon=0.1, iterations=10)
    batch = rng.uniform(size=(4, 12, 12, 1))
    labels = rng.integers(0, 4, 4)
    state = pgd_init(batch, labels, spec)
    ok = True
    for _ in range(10):
        pgd_run(model, state, spec, 1)
        if np.abs(state.iterate - state.originals).max() > spec.epsilon + 1e-12:
            ok = False
        if state.iterate.min() < 0.0 or state.iterate.max() > 1.0:
            ok = False
    whole = pgd_init(batch, labels, spec)
    pgd_run(model, whole, spec, 10)
    streamed = np.array_equal(whole.iterate, state.iterate)
    verdict(capsys, 3, ok and streamed,
            f"ball/range held: {ok}, streamed 4+6 == 10 bit-exact: {streamed}")


def test_criterion_4_desk_pipeline(capsys, desk, tmp_path):
    results = [(0, desk["clean"], desk["adv"])]
    for seed in (1, 2):
        _, _, clean, adv = train_pipeline(seed, tmp_path / f"seed{seed}")
        results.append((seed, clean, adv))
    ok = all(clean >= 0.97 and adv < 0.05 for _, clean, adv in results)
    detail = ", ".join(f"seed {s}: clean {c:.3f} adv {a:.3f}" for s, c, a in results)
    verdict(capsys, 4, ok, detail)


def test_criterion_5_strength_sweep_concavity(capsys, sweep5):
    acc = sweep5.accuracy
    undefended = acc[0]
    at_cap = acc[-1]
    interior = max(acc[1:-1])
    ok = interior >= undefended + 0.10 and interior >= at_cap + 0.10
    verdict(capsys, 5, ok,
            f"undefended {undefended:.3f}, interior max {interior:.3f}, "
            f"at 30 iterations {at_cap:.3f}")


def test_criterion_6_attack_iteration_rebound(capsys, desk, sweep5):
    from smoothdef.harness import attack_iteration_sweep

    best_level = sweep5.axis[int(np.argmax(sweep5.accuracy))]
    defense = SWEEP_DEFENSE.with_strength(best_level)
    axis = [1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 75, 100]
    subset = desk["test_set"].subset(range(200))
    spec = PgdSpec(epsilon=EPSILON, iterations=100, step_size=PGD_STEP)
    defended, undefended = attack_iteration_sweep(
        desk["model"], subset, spec, defense, axis
    )
    floor = min(defended.accuracy)
    at_100 = defended.accuracy[-1]
    rebound = at_100 >= floor + 0.05
    dominance = all(
        d >= u for d, u, k in zip(defended.accuracy, undefended.accuracy, axis) if k >= 5
    )
    verdict(capsys, 6, rebound and dominance,
            f"defended at 100 iters {at_100:.3f} vs minimum {floor:.3f} "
            f"(rebound >= 0.05: {rebound}); defended >= undefended for "
            f"iterations >= 5: {dominance}")


def test_criterion_7_subset_table_diagonal(capsys, desk):
    methods = {
        "anisotropic_diffusion": SWEEP_DEFENSE.with_strength(8),
        "median": default_spec(SmootherMethod.MEDIAN, kernel_size=5),
        "gaussian": default_spec(SmootherMethod.GAUSSIAN, sigma=1.5),
        "non_local_means": default_spec(
            SmootherMethod.NON_LOCAL_MEANS, h_filter=0.3, search_radius=4, patch_radius=2
        ),
    }
    per_method = {}
    for name, spec in methods.items():
        level = spec.strength
        records = evaluate_records(desk["model"], desk["attack_set"], spec, [level])
        per_method[name] = (records, level)
    table = cross_evaluate_subsets(per_method, size=100)
    diag = [table.matrix[i][i] for i in range(len(table.methods))]
    ok = all(v == 1.0 for v in diag) and all(s >= 100 for s in table.subset_sizes)
    verdict(capsys, 7, ok,
            f"diagonal {diag}, subset sizes {table.subset_sizes}")


def test_criterion_8_adaptive_dominance(capsys, desk):
    _, correct = defendability_matrix(desk["model"], desk["attack_set"],
                                      SWEEP_DEFENSE, cap=30)
    records = min_defense_iterations(desk["model"], desk["attack_set"],
                                     SWEEP_DEFENSE, cap=30)
    upper = adaptive_upper_bound_accuracy(records)
    fixed = correct.mean(axis=0)
    ok = bool(np.all(upper >= fixed - 1e-12))
    verdict(capsys, 8, ok,
            f"adaptive {upper:.3f} vs best fixed {fixed.max():.3f}, "
            f"dominates all 31 fixed counts: {ok}")


def test_criterion_9_determinism(capsys, desk, tmp_path):
    def digest(path):
        return {f.name: hashlib.sha256(f.read_bytes()).hexdigest()
                for f in sorted(path.iterdir())}

    hashes = []
    for tag in ("a", "b"):
        result, _ = defense_strength_sweep(
            desk["model"], desk["attack_set"], SWEEP_DEFENSE, [1, 2, 3]
        )
        out = tmp_path / f"report_{tag}"
        emit_report({"defense_strength_sweep": result}, out, meta={"seed": 0})
        hashes.append(digest(out))
    reports_match = hashes[0] == hashes[1]

    spec = PgdSpec(epsilon=EPSILON, iterations=PGD_ITERS, step_size=PGD_STEP)
    subset = desk["test_set"].subset(range(50))
    attack_hashes = []
    for tag in ("a", "b"):
        out = tmp_path / f"attack_{tag}"
        generate_attack_set(desk["model"], subset, spec, out)
        attack_hashes.append(digest(out))
    attacks_match = attack_hashes[0] == attack_hashes[1]

    verdict(capsys, 9, reports_match and attacks_match,
            f"report files byte-identical: {reports_match}, "
            f"attack sets byte-identical: {attacks_match}")
