"""White-box untargeted attacks: L-inf PGD and salt-and-pepper density search.

PGD iteration is streamable: the attack state after n steps can be extended
by m more steps and lands bit-exactly on the (n+m)-step result, which the
harness uses to sweep attack iterations in one pass.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .classifier import (
    Model,
    loss_and_input_gradient_batch,
    model_fingerprint,
    predict,
    predict_batch,
)
from .dataset import Dataset
from .image import Image, linf_distance, load_raw, save_raw


class AttackError(RuntimeError):
    pass


@dataclass(frozen=True)
class PgdSpec:
    epsilon: float
    iterations: int = 20
    step_size: float | None = None  # default 2.5 * epsilon / iterations
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")

    @property
    def effective_step(self) -> float:
        return self.step_size if self.step_size is not None else 2.5 * self.epsilon / self.iterations

    def to_dict(self) -> dict:
        return {
            "variant": "pgd",
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "step_size": self.effective_step,
            "random_start": self.random_start,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SaltPepperSpec:
    density_levels: tuple = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    seed: int = 0

    def __post_init__(self):
        levels = tuple(float(v) for v in self.density_levels)
        if not levels or any(not 0 < v <= 1 for v in levels):
            raise ValueError(f"density levels must lie in (0, 1], got {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"density levels must be strictly increasing, got {levels}")
        object.__setattr__(self, "density_levels", levels)

    def to_dict(self) -> dict:
        return {"variant": "salt_pepper", "density_levels": list(self.density_levels),
                "seed": self.seed}


def attack_spec_from_dict(obj: dict):
    variant = obj.get("variant")
    if variant == "pgd":
        return PgdSpec(
            epsilon=obj["epsilon"],
            iterations=obj.get("iterations", 20),
            step_size=obj.get("step_size"),
            random_start=obj.get("random_start", False),
            seed=obj.get("seed", 0),
        )
    if variant == "salt_pepper":
        return SaltPepperSpec(tuple(obj.get("density_levels", (0.1, 0.2, 0.5, 1.0))),
                              obj.get("seed", 0))
    raise ValueError(f"unknown attack variant {variant!r}")


@dataclass(frozen=True)
class AdversarialExample:
    original_id: int
    adv_image: Image
    success: bool
    attack_iterations_used: int
    linf: float


# ---------------------------------------------------------------------------
# PGD
# ---------------------------------------------------------------------------


@dataclass
class PgdState:
    """Streamable PGD iterate over a batch: originals, current iterate, steps."""

    originals: np.ndarray  # (n, h, w, c)
    iterate: np.ndarray
    labels: np.ndarray
    steps: int = 0


def pgd_init(batch: np.ndarray, labels: np.ndarray, spec: PgdSpec,
             sample_ids=None) -> PgdState:
    x = batch.copy()
    if spec.random_start:
        ids = sample_ids if sample_ids is not None else range(len(labels))
        for row, sid in enumerate(ids):
            rng = np.random.default_rng((spec.seed, int(sid)))
            x[row] = np.clip(
                x[row] + rng.uniform(-spec.epsilon, spec.epsilon, x[row].shape), 0.0, 1.0
            )
    return PgdState(batch.copy(), x, np.asarray(labels, dtype=np.int64))


def pgd_run(model: Model, state: PgdState, spec: PgdSpec, n_steps: int) -> PgdState:
    """Advance the PGD state by n_steps signed-gradient ascent steps."""
    step = spec.effective_step
    x0 = state.originals
    x = state.iterate
    for _ in range(n_steps):
        _, grad = loss_and_input_gradient_batch(model, x, state.labels)
        if not np.isfinite(grad).all():
            raise AttackError(f"non-finite gradient at step {state.steps + 1}")
        x = x + step * np.sign(grad)
        x = np.clip(x, x0 - spec.epsilon, x0 + spec.epsilon)
        x = np.clip(x, 0.0, 1.0)
        state.steps += 1
    state.iterate = x
    return state


def pgd_attack(model: Model, img: Image, label: int, spec: PgdSpec,
               sample_id: int = 0) -> AdversarialExample:
    state = pgd_init(img.data[np.newaxis], np.array([label]), spec, [sample_id])
    pgd_run(model, state, spec, spec.iterations)
    adv = Image(state.iterate[0])
    pred = predict(model, adv)
    return AdversarialExample(
        original_id=sample_id,
        adv_image=adv,
        success=pred.label != label,
        attack_iterations_used=spec.iterations,
        linf=linf_distance(adv, img),
    )


# ---------------------------------------------------------------------------
# Salt-and-pepper density search
# ---------------------------------------------------------------------------


def salt_pepper_attack(model: Model, img: Image, label: int, spec: SaltPepperSpec,
                       sample_id: int = 0) -> AdversarialExample:
    """Perturb increasing fractions of pixel sites (nested sets) until the
    prediction flips; a perturbed site gets 0 or 1 across all channels."""
    rng = np.random.default_rng((spec.seed, int(sample_id)))
    n_sites = img.height * img.width
    order = rng.permutation(n_sites)
    values = rng.integers(0, 2, n_sites).astype(np.float64)
    result = img
    used = 0
    for used, density in enumerate(spec.density_levels, start=1):
        k = int(np.ceil(density * n_sites))
        arr = img.data.copy()
        rows, cols = np.unravel_index(order[:k], (img.height, img.width))
        arr[rows, cols, :] = values[:k, np.newaxis]
        result = Image(arr)
        if predict(model, result).label != label:
            return AdversarialExample(sample_id, result, True, used,
                                      linf_distance(result, img))
    return AdversarialExample(sample_id, result, False, used, linf_distance(result, img))


# ---------------------------------------------------------------------------
# Attack set generation and persistence
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def generate_attack_set(model: Model, dataset: Dataset, spec, out_dir,
                        batch_size: int = 128) -> dict:
    """Attack every correctly-classified sample and persist results losslessly.

    Writes raw "SSIM1" images plus a JSON manifest; byte-identical on rerun
    with the same inputs.
    """
    os.makedirs(out_dir, exist_ok=True)
    preds = predict_batch(model, dataset.images)
    kept = [i for i, p in enumerate(preds) if p.label == dataset.labels[i]]
    examples: list[AdversarialExample] = []
    if isinstance(spec, PgdSpec):
        for start in range(0, len(kept), batch_size):
            ids = kept[start : start + batch_size]
            batch = np.stack([dataset.images[i].data for i in ids])
            labels = np.array([dataset.labels[i] for i in ids])
            state = pgd_init(batch, labels, spec, ids)
            pgd_run(model, state, spec, spec.iterations)
            adv_preds = predict_batch(model, [Image(a) for a in state.iterate])
            for row, sid in enumerate(ids):
                adv = Image(state.iterate[row])
                examples.append(
                    AdversarialExample(
                        sid, adv, adv_preds[row].label != labels[row],
                        spec.iterations, linf_distance(adv, dataset.images[sid]),
                    )
                )
    elif isinstance(spec, SaltPepperSpec):
        for sid in kept:
            examples.append(
                salt_pepper_attack(model, dataset.images[sid], dataset.labels[sid],
                                   spec, sid)
            )
    else:
        raise ValueError(f"unsupported attack spec {type(spec).__name__}")

    samples = []
    for ex in examples:
        fname = f"adv_{ex.original_id:05d}.raw"
        save_raw(ex.adv_image, os.path.join(out_dir, fname))
        samples.append(
            {
                "id": ex.original_id,
                "true_label": int(dataset.labels[ex.original_id]),
                "clean_label": int(preds[ex.original_id].label),
                "success": bool(ex.success),
                "linf": float(ex.linf),
                "file": fname,
            }
        )
    manifest = {
        "spec": spec.to_dict(),
        "model_fingerprint": model_fingerprint(model),
        "n_candidates": len(kept),
        "samples": samples,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_attack_set(manifest_dir) -> tuple[dict, list[tuple[dict, Image]]]:
    """Load a manifest and its images; returns (manifest, [(sample, image)])."""
    path = os.path.join(manifest_dir, MANIFEST_NAME)
    try:
        with open(path) as f:
            manifest = json.load(f)
    except OSError as e:
        raise AttackError(f"cannot read manifest {path}: {e}") from e
    loaded = [
        (s, load_raw(os.path.join(manifest_dir, s["file"])))
        for s in manifest["samples"]
    ]
    return manifest, loaded
