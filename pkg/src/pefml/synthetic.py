"""Photoelectric-factor law and a layered synthetic well generator.

The generator provides ground truth for testing: each layer is a mineral mix
with a porosity trend, and every log is a documented deterministic function of
(mix, porosity) plus optional Gaussian noise. PEF depends on the mix only,
through the effective atomic number.

Curve models, with ``f`` the mineral fractions and ``phi`` porosity:

* ``z_eff   = sum(f * z)``, ``PEF = (z_eff / 10) ** 3.6``
* ``RHOB    = (1 - phi) * sum(f * rho) + phi * RHO_FLUID``
* ``NPHI    = phi + (1 - phi) * sum(f * nphi_matrix)``
* ``GR      = sum(f * gr)``
* ``VP      = (1 - phi) * sum(f * dtc) + phi * DTC_FLUID`` (slowness, us/ft)
* ``VS      = (1 - phi) * sum(f * dts) + phi * DTS_FLUID``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .well_data import CANONICAL_UNITS, DEPTH, LogCurve, WellDataset

PEF_EXPONENT = 3.6

RHO_FLUID = 1.0
DTC_FLUID = 189.0
DTS_FLUID = 300.0


@dataclass(frozen=True)
class Mineral:
    name: str
    z: float
    rho: float
    nphi: float
    gr: float
    dtc: float
    dts: float


# Generator inputs, loosely based on textbook matrix values.
MINERALS = {
    "quartz": Mineral("quartz", 11.78, 2.65, -0.02, 15.0, 55.5, 88.0),
    "calcite": Mineral("calcite", 15.71, 2.71, 0.0, 10.0, 47.5, 88.4),
    "dolomite": Mineral("dolomite", 13.74, 2.87, 0.02, 12.0, 43.5, 72.0),
    "clay": Mineral("clay", 13.0, 2.50, 0.30, 160.0, 80.0, 150.0),
    "siderite": Mineral("siderite", 20.5, 3.89, 0.05, 25.0, 47.0, 85.0),
}


def pef_from_z(z):
    """PEF from effective atomic number: ``(z / 10) ** 3.6``."""
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr < 0):
        raise DataError("invalid atomic number", "z must be non-negative")
    out = (z_arr / 10.0) ** PEF_EXPONENT
    return float(out) if out.ndim == 0 else out


def z_from_pef(pe):
    """Inverse of :func:`pef_from_z`: ``10 * pe ** (1 / 3.6)``."""
    pe_arr = np.asarray(pe, dtype=np.float64)
    if np.any(pe_arr < 0):
        raise DataError("invalid PEF", "PEF must be non-negative")
    out = 10.0 * pe_arr ** (1.0 / PEF_EXPONENT)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Layer:
    """``mix`` maps mineral name to fraction. Porosity ramps linearly from
    ``porosity[0]`` to ``porosity[1]`` across the layer and a second mix,
    ``drift_to``, is blended in with a weight rising from 0 to ``drift``."""

    thickness: int
    mix: dict
    porosity: tuple = (0.1, 0.1)
    drift_to: dict = None
    drift: float = 0.0


@dataclass(frozen=True)
class SyntheticWellConfig:
    layers: tuple
    depth_start: float = 1000.0
    depth_step: float = 0.1524
    noise: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not self.depth_step > 0:
            raise DataError("invalid depth step", str(self.depth_step))
        if not self.layers:
            raise DataError("lithology mix", "at least one layer is required")
        for i, layer in enumerate(self.layers):
            for mix in (layer.mix, layer.drift_to):
                if mix is None:
                    continue
                _check_mix(mix, i)
            if layer.thickness < 1:
                raise DataError("lithology mix", f"layer {i}: thickness must be >= 1")
            if not 0 <= layer.drift <= 1:
                raise DataError("lithology mix", f"layer {i}: drift must lie in [0, 1]")


def _check_mix(mix, i):
    fr = np.array(list(mix.values()), dtype=np.float64)
    unknown = set(mix) - set(MINERALS)
    if unknown:
        raise DataError("lithology mix", f"layer {i}: unknown minerals {sorted(unknown)}")
    if np.any(fr < 0) or np.any(fr > 1) or abs(fr.sum() - 1.0) > 1e-9:
        raise DataError("lithology mix", f"layer {i}: fractions must lie in [0, 1] and sum to 1")


def _mix_vector(mix):
    return np.array([mix.get(name, 0.0) for name in MINERALS], dtype=np.float64)


_PROPS = {p: np.array([getattr(m, p) for m in MINERALS.values()]) for p in ("z", "rho", "nphi", "gr", "dtc", "dts")}


def curves_from_mix(fractions, porosity):
    """Noise-free logs for rows of mineral fractions (``n x len(MINERALS)``)."""
    f = np.atleast_2d(fractions)
    phi = np.asarray(porosity, dtype=np.float64)
    z = f @ _PROPS["z"]
    return {
        "RHOB": (1 - phi) * (f @ _PROPS["rho"]) + phi * RHO_FLUID,
        "NPHI": phi + (1 - phi) * (f @ _PROPS["nphi"]),
        "GR": f @ _PROPS["gr"],
        "VP": (1 - phi) * (f @ _PROPS["dtc"]) + phi * DTC_FLUID,
        "VS": (1 - phi) * (f @ _PROPS["dts"]) + phi * DTS_FLUID,
        "PEF": pef_from_z(z),
    }


CURVE_ORDER = ("RHOB", "NPHI", "GR", "VP", "VS", "PEF")


def generate_synthetic_well(cfg):
    rng = np.random.default_rng(cfg.seed)
    fracs, phis = [], []
    for layer in cfg.layers:
        t = np.linspace(0.0, 1.0, layer.thickness) if layer.thickness > 1 else np.zeros(1)
        a = _mix_vector(layer.mix)
        b = _mix_vector(layer.drift_to) if layer.drift_to is not None else a
        w = (layer.drift * t)[:, None]
        fracs.append((1 - w) * a + w * b)
        phis.append(layer.porosity[0] + (layer.porosity[1] - layer.porosity[0]) * t)
    f = np.vstack(fracs)
    phi = np.concatenate(phis)
    clean = curves_from_mix(f, phi)
    n = phi.size
    depth = cfg.depth_start + cfg.depth_step * np.arange(n)
    curves = []
    for m in CURVE_ORDER:
        s = cfg.noise.get(m, 0.0)
        values = clean[m] + (rng.normal(0.0, s, n) if s > 0 else 0.0)
        curves.append(LogCurve(m, CANONICAL_UNITS[m], values))
    return WellDataset(depth, tuple(curves))


DEFAULT_NOISE = {"RHOB": 0.01, "NPHI": 0.005, "GR": 2.0, "VP": 0.5, "VS": 0.8, "PEF": 0.1}


def default_config(seed=0, noise=None):
    """Three layers (clay-rich dolomite, limestone, sideritic) spanning PEF of roughly 3 to 11."""
    layers = (
        Layer(200, {"dolomite": 0.6, "clay": 0.3, "quartz": 0.1}, (0.05, 0.12)),
        Layer(200, {"calcite": 0.8, "dolomite": 0.2}, (0.15, 0.08)),
        Layer(200, {"siderite": 0.8, "calcite": 0.2}, (0.04, 0.06)),
    )
    return SyntheticWellConfig(layers, noise=DEFAULT_NOISE if noise is None else noise, seed=seed)


def random_layered_config(n_layers=30, rows_per_layer=60, seed=0, noise=None, drift=0.8):
    """Many thin layers with random mixes and drifts; the standard test suite geometry.

    Fractions are drawn from a Dirichlet over all minerals, with siderite
    damped so PEF stays roughly within 2-14.
    """
    rng = np.random.default_rng(seed)
    names = list(MINERALS)
    alpha = np.array([1.0, 1.0, 1.0, 0.8, 0.35])

    def draw():
        fr = rng.dirichlet(alpha)
        return {k: float(v) for k, v in zip(names, fr)}

    layers = []
    for _ in range(n_layers):
        p0, p1 = rng.uniform(0.02, 0.25, 2)
        mix = draw()
        layers.append(Layer(rows_per_layer, _renormalize(mix), (float(p0), float(p1)), _renormalize(draw()), drift))
    return SyntheticWellConfig(tuple(layers), noise=DEFAULT_NOISE if noise is None else noise, seed=seed + 1)


SUITE_LAYERS = 150
SUITE_ROWS = 24


def standard_suite_config(seed=0):
    """The standard noisy benchmark well: 150 thin layers of 24 rows each.

    Layers are thinner than the lithology variation a handful of fuzzy rules
    can follow, which gives the heterogeneity that separates the model
    families.
    """
    return random_layered_config(SUITE_LAYERS, SUITE_ROWS, seed, DEFAULT_NOISE)


def _renormalize(mix):
    total = sum(mix.values())
    out = {k: v / total for k, v in mix.items()}
    # absorb rounding so the fractions sum to 1 within the validator's tolerance
    last = list(out)[-1]
    out[last] = 1.0 - sum(v for k, v in out.items() if k != last)
    return out


def sample_gp_dataset(n, dim=2, length_scale=0.3, signal_std=1.0, noise_std=0.05, offset=5.0, seed=0):
    """Inputs uniform on the unit cube; targets drawn from a GP with an
    exponential kernel plus Gaussian noise, shifted by ``offset`` so that
    percentage errors are well defined."""
    from .gpr import KernelSpec, kernel_matrix

    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, dim))
    K = kernel_matrix(KernelSpec("exponential", length_scale, signal_std), X, X)
    L = np.linalg.cholesky(K + 1e-10 * np.eye(n))
    f = L @ rng.standard_normal(n)
    y = offset + f + rng.normal(0.0, noise_std, n)
    return X, y


def linear_dataset(n, dim=3, seed=0):
    """Exactly linear, noise-free targets bounded away from zero."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, dim))
    w = np.arange(1, dim + 1, dtype=np.float64)
    y = 10.0 + X @ w
    return X, y
