"""Smoothing defenses: seven filters behind one tagged spec + dispatcher.

Every filter is a pure function Image -> Image. Color images are processed
channel-by-channel, except modified curvature motion which couples channels
through its surface formulation. Each method designates one "strength"
parameter that the evaluation harness sweeps.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .image import BoundaryPolicy, Image, clamp01, pad


class FilterParameterError(ValueError):
    """Invalid filter parameter value."""


class FilterStabilityError(RuntimeError):
    """Explicit PDE step diverged."""


class SmootherMethod(enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"
    GAUSSIAN = "gaussian"
    ANISOTROPIC_DIFFUSION = "anisotropic_diffusion"
    BILATERAL = "bilateral"
    NON_LOCAL_MEANS = "non_local_means"
    MODIFIED_CURVATURE_MOTION = "modified_curvature_motion"


# per method: {param: (validator, description)}, plus allowed strength params
def _odd_size(v):
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1 or v % 2 == 0:
        raise FilterParameterError(f"expected odd positive integer, got {v!r}")
    return int(v)


def _positive(v):
    if not isinstance(v, (int, float, np.integer, np.floating)) or isinstance(v, bool) or not v > 0:
        raise FilterParameterError(f"expected positive number, got {v!r}")
    return float(v)


def _count(v):
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
        raise FilterParameterError(f"expected integer >= 0, got {v!r}")
    return int(v)


def _posint(v):
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
        raise FilterParameterError(f"expected integer >= 1, got {v!r}")
    return int(v)


def _time_step_025(v):
    v = _positive(v)
    if v > 0.25:
        raise FilterParameterError(
            f"time_step {v!r} outside (0, 0.25] (explicit 4-neighbor stability bound)"
        )
    return v


def _coefficient(v):
    if v not in ("exponential", "rational"):
        raise FilterParameterError(f"coefficient must be 'exponential' or 'rational', got {v!r}")
    return v


_SCHEMAS = {
    SmootherMethod.MEAN: ({"kernel_size": _odd_size}, {"kernel_size"}, {"kernel_size": 3}),
    SmootherMethod.MEDIAN: ({"kernel_size": _odd_size}, {"kernel_size"}, {"kernel_size": 3}),
    SmootherMethod.GAUSSIAN: (
        {"sigma": _positive, "radius": _posint},
        {"sigma"},
        {"sigma": 1.0, "radius": 4},
    ),
    SmootherMethod.ANISOTROPIC_DIFFUSION: (
        {
            "iterations": _count,
            "coefficient": _coefficient,
            "edge_scale": _positive,
            "time_step": _time_step_025,
        },
        {"iterations"},
        {"iterations": 5, "coefficient": "exponential", "edge_scale": 0.1, "time_step": 0.25},
    ),
    SmootherMethod.BILATERAL: (
        {"diameter": _odd_size, "sigma_space": _positive, "sigma_range": _positive},
        {"diameter"},
        {"diameter": 5, "sigma_space": 2.0, "sigma_range": 0.1},
    ),
    SmootherMethod.NON_LOCAL_MEANS: (
        {
            "patch_radius": _posint,
            "search_radius": _posint,
            "h_filter": _positive,
            "a_sigma": _positive,
        },
        {"patch_radius", "h_filter"},
        {"patch_radius": 3, "search_radius": 10, "h_filter": 0.1, "a_sigma": 2.0},
    ),
    SmootherMethod.MODIFIED_CURVATURE_MOTION: (
        # flat-region limit is heat flow with diffusivity scale_factor^2, so
        # time_step must shrink roughly as 1/scale_factor^2 for stability
        {"iterations": _count, "scale_factor": _positive, "time_step": _positive},
        {"iterations"},
        {"iterations": 5, "scale_factor": 1.0, "time_step": 0.1},
    ),
}


@dataclass(frozen=True)
class SmootherSpec:
    """One smoothing method, its parameters, and its swept strength parameter."""

    method: SmootherMethod
    params: dict = field(default_factory=dict)
    strength_param: str = ""

    def validated(self) -> "SmootherSpec":
        validators, strengths, defaults = _SCHEMAS[self.method]
        params = dict(defaults)
        for key, value in self.params.items():
            if key not in validators:
                raise FilterParameterError(
                    f"unknown parameter {key!r} for method {self.method.value}"
                )
            params[key] = value
        params = {k: validators[k](v) for k, v in params.items()}
        strength = self.strength_param or sorted(strengths)[0]
        if strength not in strengths:
            raise FilterParameterError(
                f"strength_param {strength!r} invalid for {self.method.value}; "
                f"allowed: {sorted(strengths)}"
            )
        if self.method is SmootherMethod.NON_LOCAL_MEANS:
            if params["search_radius"] < params["patch_radius"]:
                raise FilterParameterError("search_radius must be >= patch_radius")
        return SmootherSpec(self.method, params, strength)

    @property
    def strength(self):
        return self.validated().params[self.validated().strength_param]

    def with_strength(self, level) -> "SmootherSpec":
        spec = self.validated()
        validators, _, _ = _SCHEMAS[spec.method]
        try:
            level = validators[spec.strength_param](level)
        except FilterParameterError as e:
            raise FilterParameterError(
                f"invalid strength level {level!r} for "
                f"{spec.method.value}.{spec.strength_param}: {e}"
            ) from None
        return replace(spec, params={**spec.params, spec.strength_param: level})

    def to_json(self) -> str:
        spec = self.validated()
        return json.dumps(
            {
                "method": spec.method.value,
                "params": spec.params,
                "strength_param": spec.strength_param,
            },
            sort_keys=True,
        )

    @classmethod
    def from_dict(cls, obj: dict) -> "SmootherSpec":
        try:
            method = SmootherMethod(obj["method"])
        except (KeyError, ValueError) as e:
            raise FilterParameterError(f"bad smoother spec: {e}") from None
        return cls(method, dict(obj.get("params", {})), obj.get("strength_param", "")).validated()

    @classmethod
    def from_json(cls, text: str) -> "SmootherSpec":
        return cls.from_dict(json.loads(text))


def default_spec(method: SmootherMethod, **overrides) -> SmootherSpec:
    return SmootherSpec(method, dict(overrides)).validated()


# ---------------------------------------------------------------------------
# Individual filters
# ---------------------------------------------------------------------------


def _per_channel(img: Image, fn) -> Image:
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[:, :, c] = fn(np.ascontiguousarray(img.data[:, :, c]))
    return Image(out)


def mean_filter(
    img: Image, kernel_size: int, policy: BoundaryPolicy = BoundaryPolicy.REPLICATE
) -> Image:
    k = _odd_size(kernel_size)
    r = k // 2
    from numpy.lib.stride_tricks import sliding_window_view

    def one(chan):
        win = sliding_window_view(pad(chan, r, policy), (k, k))
        return win.mean(axis=(2, 3))

    return _per_channel(img, one)


def median_filter(
    img: Image, kernel_size: int, policy: BoundaryPolicy = BoundaryPolicy.REPLICATE
) -> Image:
    k = _odd_size(kernel_size)
    r = k // 2
    return _per_channel(img, lambda chan: kernels.median_filter(pad(chan, r, policy), k))


def gaussian_kernel_1d(sigma: float, radius: int) -> np.ndarray:
    """Sampled Gaussian on [-radius, radius], normalized to sum exactly 1."""
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _convolve1d(chan: np.ndarray, kernel: np.ndarray, axis: int, policy: BoundaryPolicy) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    if axis == 1:
        chan = chan.T
    p = pad(chan, radius, policy)[:, radius : chan.shape[1] + radius] if radius else chan
    out = np.zeros_like(chan)
    for k, w in enumerate(kernel):
        out += w * p[k : k + chan.shape[0], :]
    return out.T if axis == 1 else out


def gaussian_filter(
    img: Image,
    sigma: float,
    radius: int = 4,
    policy: BoundaryPolicy = BoundaryPolicy.REPLICATE,
) -> Image:
    g = gaussian_kernel_1d(_positive(sigma), _posint(radius))

    def one(chan):
        return _convolve1d(_convolve1d(chan, g, 0, policy), g, 1, policy)

    return _per_channel(img, one)


def anisotropic_diffusion(
    img: Image,
    iterations: int,
    coefficient: str = "exponential",
    edge_scale: float = 0.1,
    time_step: float = 0.25,
) -> Image:
    _count(iterations)
    _coefficient(coefficient)
    _positive(edge_scale)
    _time_step_025(time_step)
    exponential = coefficient == "exponential"

    def one(chan):
        for _ in range(iterations):
            chan = kernels.diffusion_step(chan, edge_scale, time_step, exponential)
        return chan

    return _per_channel(img, one)


def bilateral_filter(
    img: Image,
    diameter: int,
    sigma_space: float,
    sigma_range: float,
    policy: BoundaryPolicy = BoundaryPolicy.REPLICATE,
) -> Image:
    d = _odd_size(diameter)
    _positive(sigma_space)
    _positive(sigma_range)
    r = d // 2
    return _per_channel(
        img,
        lambda chan: kernels.bilateral_filter(pad(chan, r, policy), d, sigma_space, sigma_range),
    )


def nlm_patch_kernel(patch_radius: int, a_sigma: float) -> np.ndarray:
    """Gaussian patch weighting (std a_sigma) for the NLM patch distance, sum 1."""
    g = gaussian_kernel_1d(a_sigma, patch_radius)
    return np.outer(g, g)


def non_local_means(
    img: Image,
    patch_radius: int = 3,
    search_radius: int = 10,
    h_filter: float = 0.1,
    a_sigma: float = 2.0,
    policy: BoundaryPolicy = BoundaryPolicy.REPLICATE,
) -> Image:
    p = _posint(patch_radius)
    s = _posint(search_radius)
    _positive(h_filter)
    _positive(a_sigma)
    if s < p:
        raise FilterParameterError("search_radius must be >= patch_radius")
    kern = nlm_patch_kernel(p, a_sigma)
    h, w = img.height, img.width
    return _per_channel(
        img,
        lambda chan: kernels.nlm_filter(pad(chan, s + p, policy), h, w, p, s, h_filter, kern),
    )


def nlm_whole_image(
    img: Image,
    patch_radius: int = 3,
    h_filter: float = 0.1,
    a_sigma: float = 2.0,
    policy: BoundaryPolicy = BoundaryPolicy.REPLICATE,
) -> Image:
    """Whole-image candidate sum (the literal formula); small images only."""
    kern = nlm_patch_kernel(patch_radius, a_sigma)
    p = patch_radius

    def one(chan):
        # candidates restricted to actual pixels, not the padded plane
        padded = pad(chan, p, policy)
        h, w = chan.shape
        out = np.zeros_like(chan)
        k = 2 * p + 1
        from numpy.lib.stride_tricks import sliding_window_view

        patches = sliding_window_view(padded, (k, k))  # (h, w, k, k)
        for i in range(h):
            for j in range(w):
                d2 = np.einsum("hwab,ab->hw", (patches - patches[i, j]) ** 2, kern)
                wgt = np.exp(-d2 / (h_filter * h_filter))
                out[i, j] = (wgt * chan).sum() / wgt.sum()
        return out

    return _per_channel(img, one)


def _mcm_velocity(arr: np.ndarray, scale_factor: float) -> np.ndarray:
    """Curvature-motion velocity for an image treated as a surface over
    (x, y, channel); central differences, replicate boundary on every axis."""
    p = np.pad(arr, 1, mode="edge")
    c = p[1:-1, 1:-1, 1:-1]
    Iy = (p[2:, 1:-1, 1:-1] - p[:-2, 1:-1, 1:-1]) / 2.0
    Ix = (p[1:-1, 2:, 1:-1] - p[1:-1, :-2, 1:-1]) / 2.0
    Iz = (p[1:-1, 1:-1, 2:] - p[1:-1, 1:-1, :-2]) / 2.0
    Iyy = p[2:, 1:-1, 1:-1] - 2.0 * c + p[:-2, 1:-1, 1:-1]
    Ixx = p[1:-1, 2:, 1:-1] - 2.0 * c + p[1:-1, :-2, 1:-1]
    Izz = p[1:-1, 1:-1, 2:] - 2.0 * c + p[1:-1, 1:-1, :-2]
    Ixy = (p[2:, 2:, 1:-1] - p[2:, :-2, 1:-1] - p[:-2, 2:, 1:-1] + p[:-2, :-2, 1:-1]) / 4.0
    Ixz = (p[1:-1, 2:, 2:] - p[1:-1, 2:, :-2] - p[1:-1, :-2, 2:] + p[1:-1, :-2, :-2]) / 4.0
    Iyz = (p[2:, 1:-1, 2:] - p[2:, 1:-1, :-2] - p[:-2, 1:-1, 2:] + p[:-2, 1:-1, :-2]) / 4.0
    kinv2 = 1.0 / (scale_factor * scale_factor)
    grad2 = Ix * Ix + Iy * Iy + Iz * Iz
    lap = Ixx + Iyy + Izz
    num = (
        kinv2 * lap
        + (Iy * Iy + Iz * Iz) * Ixx
        + (Ix * Ix + Iz * Iz) * Iyy
        + (Ix * Ix + Iy * Iy) * Izz
        - 2.0 * (Ix * Iy * Ixy + Ix * Iz * Ixz + Iy * Iz * Iyz)
    )
    return num / (kinv2 + grad2) ** 2


def modified_curvature_motion(
    img: Image, iterations: int, scale_factor: float, time_step: float = 0.1
) -> Image:
    _count(iterations)
    _positive(scale_factor)
    _positive(time_step)
    arr = img.data.copy()
    for step in range(iterations):
        arr = arr + time_step * _mcm_velocity(arr, scale_factor)
        if arr.min() < -1.0 or arr.max() > 2.0:
            raise FilterStabilityError(
                f"curvature motion diverged at step {step + 1}: "
                f"range [{arr.min():.3g}, {arr.max():.3g}]"
            )
    return Image(arr)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _apply_raw(spec: SmootherSpec, img: Image) -> Image:
    """Dispatch without the final clamp (sweeps clamp once at the end)."""
    spec = spec.validated()
    p = spec.params
    m = spec.method
    if m is SmootherMethod.MEAN:
        return mean_filter(img, p["kernel_size"])
    if m is SmootherMethod.MEDIAN:
        return median_filter(img, p["kernel_size"])
    if m is SmootherMethod.GAUSSIAN:
        return gaussian_filter(img, p["sigma"], p["radius"])
    if m is SmootherMethod.ANISOTROPIC_DIFFUSION:
        return anisotropic_diffusion(
            img, p["iterations"], p["coefficient"], p["edge_scale"], p["time_step"]
        )
    if m is SmootherMethod.BILATERAL:
        return bilateral_filter(img, p["diameter"], p["sigma_space"], p["sigma_range"])
    if m is SmootherMethod.NON_LOCAL_MEANS:
        return non_local_means(
            img, p["patch_radius"], p["search_radius"], p["h_filter"], p["a_sigma"]
        )
    if m is SmootherMethod.MODIFIED_CURVATURE_MOTION:
        return modified_curvature_motion(img, p["iterations"], p["scale_factor"], p["time_step"])
    raise FilterParameterError(f"unhandled method {m}")


def apply_smoother(spec: SmootherSpec, img: Image) -> Image:
    """Apply one configured smoothing defense; output clamped to [0, 1]."""
    return clamp01(_apply_raw(spec, img))


ITERATIVE_METHODS = (
    SmootherMethod.ANISOTROPIC_DIFFUSION,
    SmootherMethod.MODIFIED_CURVATURE_MOTION,
)


def iterate_one_step(spec: SmootherSpec, img: Image) -> Image:
    """One unclamped step of an iterative method; n applications followed by a
    clamp equal apply_smoother at strength n."""
    spec = spec.validated()
    if spec.method not in ITERATIVE_METHODS:
        raise FilterParameterError(
            f"{spec.method.value} is not iterative; cannot step incrementally"
        )
    return _apply_raw(spec.with_strength(1), img)


def strength_ladder(spec: SmootherSpec, levels) -> list[SmootherSpec]:
    """Copies of spec with the strength parameter set to each level, in order."""
    return [spec.with_strength(level) for level in levels]
