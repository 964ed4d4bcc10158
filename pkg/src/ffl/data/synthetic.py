"""Synthetic correlated multilabel cohorts.

Every site samples patients from one shared latent process: ``K`` binary
latent diseases with fixed prevalences, each owning a feature pattern.
A record's features are the sum of the patterns of the diseases the patient
has plus Gaussian noise. Sites differ only in how they *label* patients: each
site has its own boolean formulas over the latent bits (``"z1 | z3"``), with
independent label-flip noise. This mimics hospitals that annotate related
but different findings on the same kind of images.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .dataset import MultilabelDataset

_LATENT = re.compile(r"^z([1-9][0-9]*)$")


@dataclass(frozen=True)
class LabelDef:
    name: str
    formula: str
    flip_noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.flip_noise < 0.5:
            raise ValueError(f"{self.name}: flip_noise must be in [0, 0.5), got {self.flip_noise}")


@dataclass(frozen=True)
class SiteLabels:
    site_id: str
    labels: Tuple[LabelDef, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.site_id:
            raise ValueError("site_id must be non-empty")
        names = [d.name for d in self.labels]
        if not names or len(set(names)) != len(names):
            raise ValueError(f"site {self.site_id}: label names must be unique and non-empty")


@dataclass(frozen=True)
class LatentDiseaseConfig:
    prevalence: Tuple[float, ...]
    sites: Tuple[SiteLabels, ...]
    feature_dim: Optional[int] = 32
    image_size: Optional[Tuple[int, int]] = None
    noise_std: float = 0.5
    pattern_scale: float = 1.0
    records_per_patient: int = 1

    def __post_init__(self):
        object.__setattr__(self, "prevalence", tuple(float(p) for p in self.prevalence))
        object.__setattr__(self, "sites", tuple(self.sites))
        if self.image_size is not None:
            object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if not self.prevalence:
            raise ValueError("need at least one latent disease")
        if not all(0.0 < p < 1.0 for p in self.prevalence):
            raise ValueError(f"prevalences must lie in (0, 1), got {self.prevalence}")
        if (self.feature_dim is None) == (self.image_size is None):
            raise ValueError("set exactly one of feature_dim and image_size")
        if self.feature_dim is not None and self.feature_dim <= 0:
            raise ValueError("feature_dim must be positive")
        if self.image_size is not None and (len(self.image_size) != 2 or min(self.image_size) <= 0):
            raise ValueError("image_size must be two positive ints")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.records_per_patient < 1:
            raise ValueError("records_per_patient must be >= 1")
        ids = [s.site_id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ValueError("site ids must be unique")
        for site in self.sites:
            for d in site.labels:
                compile_formula(d.formula, self.n_latent)

    @property
    def n_latent(self) -> int:
        return len(self.prevalence)

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        if self.image_size is not None:
            return self.image_size
        return (self.feature_dim,)


def compile_formula(formula: str, n_latent: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a boolean formula over ``z1..zK`` into a vectorized predicate.

    Accepts ``and``/``or``/``not`` as well as ``&``/``|``/``~``/``^`` and parentheses.
    The returned callable maps an ``n x K`` boolean latent matrix to ``n`` booleans.
    """
    try:
        tree = ast.parse(formula, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse formula {formula!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Name):
            m = _LATENT.match(node.id)
            if not m or not 1 <= int(m.group(1)) <= n_latent:
                raise ValueError(f"{formula!r}: unknown latent {node.id!r} (have z1..z{n_latent})")
            j = int(m.group(1)) - 1
            return lambda z: z[:, j]
        if isinstance(node, ast.BoolOp):
            parts = [build(v) for v in node.values]
            op = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            return lambda z: op.reduce([p(z) for p in parts])
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.BitAnd, ast.BitOr, ast.BitXor)):
            a, b = build(node.left), build(node.right)
            op = {ast.BitAnd: np.logical_and, ast.BitOr: np.logical_or, ast.BitXor: np.logical_xor}[
                type(node.op)
            ]
            return lambda z: op(a(z), b(z))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.Not, ast.Invert)):
            inner = build(node.operand)
            return lambda z: np.logical_not(inner(z))
        raise ValueError(f"{formula!r}: unsupported expression {ast.dump(node)}")

    return build(tree)


def labels_from_latents(
    latents: np.ndarray, defs: Sequence[LabelDef], rng: np.random.Generator
) -> np.ndarray:
    """Apply label formulas to latent bits, then flip each label with its own noise rate."""
    latents = np.asarray(latents, dtype=bool)
    out = np.empty((latents.shape[0], len(defs)), dtype=np.int8)
    for j, d in enumerate(defs):
        y = compile_formula(d.formula, latents.shape[1])(latents)
        if d.flip_noise > 0:
            y = np.logical_xor(y, rng.random(latents.shape[0]) < d.flip_noise)
        out[:, j] = y
    return out


def make_patterns(cfg: LatentDiseaseConfig, rng: np.random.Generator) -> np.ndarray:
    """One unit-norm (times ``pattern_scale``) pattern per latent disease."""
    K = cfg.n_latent
    if cfg.image_size is None:
        p = rng.normal(size=(K, cfg.feature_dim))
    else:
        h, w = cfg.image_size
        rr, cc = np.mgrid[0:h, 0:w]
        p = np.empty((K, h, w))
        for k in range(K):
            cy, cx = rng.uniform(0.2, 0.8) * (h - 1), rng.uniform(0.2, 0.8) * (w - 1)
            sigma = rng.uniform(0.08, 0.2) * min(h, w)
            p[k] = np.exp(-((rr - cy) ** 2 + (cc - cx) ** 2) / (2 * sigma**2))
    norms = np.sqrt((p.reshape(K, -1) ** 2).sum(axis=1))
    return p / norms.reshape((K,) + (1,) * (p.ndim - 1)) * cfg.pattern_scale


def generate_synthetic(
    cfg: LatentDiseaseConfig, n_per_site: Sequence[int], seed: int
) -> list:
    """One :class:`MultilabelDataset` per entry of ``cfg.sites``.

    Patterns are shared by all sites; each site has an independent random stream
    so its data does not depend on the other sites' sizes.
    """
    if not cfg.sites:
        raise ValueError("no sites configured")
    if len(n_per_site) != len(cfg.sites):
        raise ValueError(f"{len(cfg.sites)} sites but {len(n_per_site)} sizes")
    if any(n < 1 for n in n_per_site):
        raise ValueError("every site needs at least one record")
    root = np.random.SeedSequence(int(seed))
    pattern_ss, *site_ss = root.spawn(1 + len(cfg.sites))
    patterns = make_patterns(cfg, np.random.default_rng(pattern_ss))
    prevalence = np.asarray(cfg.prevalence)
    out = []
    for site, n, ss in zip(cfg.sites, n_per_site, site_ss):
        rng = np.random.default_rng(ss)
        n_patients = -(-n // cfg.records_per_patient)
        patient_latents = rng.random((n_patients, cfg.n_latent)) < prevalence
        owner = np.arange(n) // cfg.records_per_patient
        latents = patient_latents[owner]
        signal = np.tensordot(latents.astype(np.float64), patterns, axes=1)
        features = signal + cfg.noise_std * rng.normal(size=signal.shape)
        labels = labels_from_latents(latents, site.labels, rng)
        ids = tuple(f"{site.site_id}-{i:06d}" for i in owner)
        out.append(MultilabelDataset(features, labels, tuple(d.name for d in site.labels), ids))
    return out


def default_synthetic_config() -> LatentDiseaseConfig:
    """Small labeled site A and large site B with overlapping, correlated label sets."""
    return LatentDiseaseConfig(
        prevalence=(0.3, 0.3, 0.3, 0.3),
        feature_dim=32,
        noise_std=0.5,
        sites=(
            SiteLabels("A", (LabelDef("d1", "z1"), LabelDef("d2", "z2"))),
            SiteLabels(
                "B",
                (
                    LabelDef("d1_or_d3", "z1 | z3", 0.05),
                    LabelDef("d2", "z2"),
                    LabelDef("d4", "z4"),
                ),
            ),
        ),
    )


DEFAULT_SITE_SIZES = (200, 5000)
