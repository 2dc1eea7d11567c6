"""Attack contracts: PGD ball/range invariants, streamability, salt-and-pepper
nesting, and attack-set persistence."""

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from smoothdef.attacks import (
    AdversarialExample,
    PgdSpec,
    SaltPepperSpec,
    attack_spec_from_dict,
    generate_attack_set,
    load_attack_set,
    pgd_attack,
    pgd_init,
    pgd_run,
    salt_pepper_attack,
)
from smoothdef.classifier import build_model, predict
from smoothdef.dataset import Dataset, make_synthetic_dataset
from smoothdef.image import Image, linf_distance


def small_model(seed=0):
    return build_model((12, 12, 1), num_classes=4, seed=seed)


def zero_model():
    """All-zero parameters: constant uniform output, label 0 everywhere."""
    model = build_model((12, 12, 1), num_classes=4, seed=0)
    for arr in model.param_arrays():
        arr[...] = 0.0
    return model


class TestSpecs:
    def test_pgd_validation(self):
        with pytest.raises(ValueError):
            PgdSpec(epsilon=0.0)
        with pytest.raises(ValueError):
            PgdSpec(epsilon=0.1, iterations=0)
        with pytest.raises(ValueError):
            PgdSpec(epsilon=0.1, step_size=-0.1)

    def test_default_step_size(self):
        spec = PgdSpec(epsilon=0.1, iterations=20)
        assert spec.effective_step == pytest.approx(2.5 * 0.1 / 20)
        assert PgdSpec(epsilon=0.1, step_size=0.02).effective_step == 0.02

    def test_salt_pepper_levels_must_increase(self):
        with pytest.raises(ValueError):
            SaltPepperSpec(density_levels=(0.2, 0.1))
        with pytest.raises(ValueError):
            SaltPepperSpec(density_levels=(0.5, 1.5))

    def test_from_dict_round_trip(self):
        spec = PgdSpec(epsilon=0.2, iterations=7, step_size=0.03, seed=5)
        back = attack_spec_from_dict(spec.to_dict())
        assert back == spec
        sp = SaltPepperSpec((0.1, 0.5), seed=2)
        assert attack_spec_from_dict(sp.to_dict()) == sp
        with pytest.raises(ValueError):
            attack_spec_from_dict({"variant": "deepfool"})


class TestPgd:
    def test_ball_and_range_at_every_iterate(self, rng):
        model = small_model()
        spec = PgdSpec(epsilon=0.1, iterations=8, random_start=True)
        batch = rng.uniform(size=(3, 12, 12, 1))
        labels = np.array([0, 1, 2])
        state = pgd_init(batch, labels, spec, [0, 1, 2])
        for _ in range(spec.iterations):
            pgd_run(model, state, spec, 1)
            diff = np.abs(state.iterate - state.originals).max()
            assert diff <= spec.epsilon + 1e-12
            assert state.iterate.min() >= 0.0 and state.iterate.max() <= 1.0

    def test_streamable_bit_exact(self, rng):
        model = small_model()
        spec = PgdSpec(epsilon=0.1, iterations=9)
        batch = rng.uniform(size=(2, 12, 12, 1))
        labels = np.array([1, 3])
        a = pgd_init(batch, labels, spec)
        pgd_run(model, a, spec, 9)
        b = pgd_init(batch, labels, spec)
        pgd_run(model, b, spec, 4)
        pgd_run(model, b, spec, 5)
        assert np.array_equal(a.iterate, b.iterate)
        assert a.steps == b.steps == 9

    def test_degenerate_epsilon(self, rng):
        model = small_model()
        img = Image(rng.uniform(0.1, 0.9, (12, 12, 1)))
        label = predict(model, img).label
        ex = pgd_attack(model, img, label, PgdSpec(epsilon=1e-12, iterations=5))
        # one ulp of slack: x0 + 1e-12 rounds up at these magnitudes
        assert linf_distance(ex.adv_image, img) <= 1e-12 * (1 + 1e-4)
        assert not ex.success

    def test_random_start_deterministic_and_in_ball(self, rng):
        spec = PgdSpec(epsilon=0.1, random_start=True, seed=11)
        batch = rng.uniform(0.2, 0.8, (2, 12, 12, 1))
        labels = np.array([0, 0])
        a = pgd_init(batch, labels, spec, [5, 6])
        b = pgd_init(batch, labels, spec, [5, 6])
        assert np.array_equal(a.iterate, b.iterate)
        assert np.abs(a.iterate - batch).max() <= spec.epsilon
        c = pgd_init(batch, labels, spec, [7, 8])  # different ids, different noise
        assert not np.array_equal(a.iterate, c.iterate)

    def test_attack_flips_label_on_trained_model(self, tiny_model, tiny_test_set):
        img, label = tiny_test_set.images[0], tiny_test_set.labels[0]
        spec = PgdSpec(epsilon=0.2, iterations=10)
        ex = pgd_attack(tiny_model, img, label, spec)
        assert ex.linf <= spec.epsilon + 1e-12
        assert ex.attack_iterations_used == 10


class TestSaltPepper:
    def test_full_density_saturates_pixels(self, rng):
        model = small_model()
        img = Image(rng.uniform(0.3, 0.7, (12, 12, 1)))
        ex = salt_pepper_attack(model, img, predict(model, img).label,
                                SaltPepperSpec(density_levels=(1.0,)))
        assert set(np.unique(ex.adv_image.data)) <= {0.0, 1.0}

    def test_invariant_model_never_succeeds(self, rng):
        model = zero_model()
        img = Image(rng.uniform(size=(12, 12, 1)))
        spec = SaltPepperSpec(density_levels=(0.1, 0.5, 1.0))
        ex = salt_pepper_attack(model, img, 0, spec)  # label 0 == constant output
        assert not ex.success
        assert ex.attack_iterations_used == 3

    def test_nested_perturbation_sets(self):
        model = small_model()
        img = Image(np.full((12, 12, 1), 0.5))  # any {0,1} write differs from 0.5
        spec = SaltPepperSpec(density_levels=(0.05, 0.2, 0.6), seed=3)
        masks = []
        for level in spec.density_levels:
            ex = salt_pepper_attack(model, img, 99,  # label never matched: runs all levels
                                    SaltPepperSpec(density_levels=(level,), seed=3))
            masks.append(np.any(ex.adv_image.data != 0.5, axis=2))
        for small, big in zip(masks, masks[1:]):
            assert np.all(big[small])  # smaller set contained in larger
        counts = [int(m.sum()) for m in masks]
        assert counts == [int(np.ceil(d * 144)) for d in spec.density_levels]


def _dir_digest(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(path.iterdir()):
        h.update(f.name.encode() + f.read_bytes())
    return h.hexdigest()


class TestAttackSetPersistence:
    def test_all_misclassified_gives_empty_set(self, rng, tmp_path):
        model = zero_model()
        imgs = [Image(rng.uniform(size=(12, 12, 1))) for _ in range(4)]
        data = Dataset(imgs, [1, 2, 3, 1])  # constant prediction is 0: all wrong
        manifest = generate_attack_set(model, data, PgdSpec(epsilon=0.1, iterations=1),
                                       tmp_path)
        assert manifest["n_candidates"] == 0
        assert manifest["samples"] == []

    def test_rerun_is_byte_identical(self, tiny_model, tiny_test_set, tmp_path):
        spec = PgdSpec(epsilon=0.1, iterations=3)
        a, b = tmp_path / "a", tmp_path / "b"
        generate_attack_set(tiny_model, tiny_test_set, spec, a)
        generate_attack_set(tiny_model, tiny_test_set, spec, b)
        assert _dir_digest(a) == _dir_digest(b)

    def test_round_trip(self, tiny_model, tiny_test_set, tmp_path):
        spec = PgdSpec(epsilon=0.1, iterations=3)
        manifest = generate_attack_set(tiny_model, tiny_test_set, spec, tmp_path)
        loaded_manifest, pairs = load_attack_set(tmp_path)
        assert loaded_manifest == json.loads(json.dumps(manifest))
        assert len(pairs) == len(manifest["samples"])
        for sample, img in pairs:
            sid = sample["id"]
            assert linf_distance(img, tiny_test_set.images[sid]) <= spec.epsilon + 1e-12

    def test_salt_pepper_set(self, tiny_model, tiny_test_set, tmp_path):
        spec = SaltPepperSpec(density_levels=(0.05, 0.2), seed=1)
        manifest = generate_attack_set(tiny_model, tiny_test_set, spec, tmp_path)
        assert manifest["spec"]["variant"] == "salt_pepper"
        assert all(isinstance(s["success"], bool) for s in manifest["samples"])
