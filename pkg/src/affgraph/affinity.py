"""Affinity functions, target affinity mass, and the mass loss family.

Gradients are returned with respect to the raw affinity scores only; chaining
into features or projection weights is left to the caller.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateTargetError, ShapeError
from .numerics import as_matrix


class Scope(str, enum.Enum):
    MATRIX = "matrix"
    ROW = "row"


class LossForm(str, enum.Enum):
    L2 = "l2"
    SMOOTH_L1 = "smooth_l1"
    FOCAL = "focal"
    ROW_FOCAL = "row_focal"
    ENTRY_BCE = "entry_bce"


LOG_FORMS = (LossForm.FOCAL, LossForm.ROW_FOCAL)


@dataclass(frozen=True)
class LossConfig:
    """Loss selector plus its hyperparameters.

    ``lam`` is the weight of the affinity loss relative to the main loss.
    ``mask_diagonal`` drops self-pairs from the softmax normalizer; off by
    default so the normalization runs over all N*N entries.
    """

    form: LossForm = LossForm.FOCAL
    gamma: float = 2.0
    lam: float = 0.01
    mass_floor: float = 1e-12
    scope: Scope = Scope.MATRIX
    mask_diagonal: bool = False
    bce_normalize: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "form", LossForm(self.form))
            object.__setattr__(self, "scope", Scope(self.scope))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.gamma >= 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not 0 < self.mass_floor <= 1e-6:
            raise ConfigError(f"mass_floor must lie in (0, 1e-6], got {self.mass_floor}")


@dataclass
class AffinityMatrix:
    raw: np.ndarray
    normalized: np.ndarray | None = None
    scope: Scope = Scope.MATRIX
    mask_diagonal: bool = False

    def __post_init__(self):
        self.raw = as_matrix(self.raw)
        if self.raw.shape[0] != self.raw.shape[1]:
            raise ShapeError(f"affinity matrix must be square, got {self.raw.shape}")
        self.scope = Scope(self.scope)
        if self.normalized is not None and self.normalized.shape != self.raw.shape:
            raise ShapeError("raw and normalized shapes differ")

    @property
    def n(self) -> int:
        return self.raw.shape[0]

    def normalize(self, scope: Scope | None = None, mask_diagonal: bool | None = None) -> "AffinityMatrix":
        scope = self.scope if scope is None else Scope(scope)
        mask = self.mask_diagonal if mask_diagonal is None else mask_diagonal
        if mask and self.n < 2:
            raise ShapeError("masking the diagonal needs at least two entities")
        zeros = np.zeros_like(self.raw)
        wt, _, _, _ = kernels.normalize_mass(self.raw, zeros, scope is Scope.ROW, mask)
        return AffinityMatrix(self.raw, wt, scope, mask)


class TargetMatrix:
    """Binary N x N supervision target. Self-pairs are zeroed unless ``zero_diagonal`` is False."""

    def __init__(self, entries, zero_diagonal: bool = True):
        e = np.array(entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ShapeError(f"target must be square, got shape {e.shape}")
        if not np.all((e == 0) | (e == 1)):
            raise ValueError("target entries must be 0 or 1")
        e = e.astype(np.uint8)
        if zero_diagonal:
            np.fill_diagonal(e, 0)
        self.entries = e
        self.zero_diagonal = zero_diagonal

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def selected_count(self) -> int:
        return int(self.entries.sum())

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.entries, self.entries.T))

    def __eq__(self, other):
        return isinstance(other, TargetMatrix) and np.array_equal(self.entries, other.entries)

    def __repr__(self):
        return f"TargetMatrix(n={self.n}, selected={self.selected_count})"


@dataclass
class MassReport:
    mass: float
    row_masses: np.ndarray
    selected_count: int
    target_rows: np.ndarray = field(repr=False)


class MassLossResult(NamedTuple):
    loss: float
    grad_raw: np.ndarray
    report: MassReport


def affinity_dot(features, wk, wq) -> AffinityMatrix:
    """Scaled dot-product scores ``<f_m Wk, f_n Wq> / sqrt(d_k)``."""
    f = as_matrix(features)
    wk = as_matrix(wk)
    wq = as_matrix(wq)
    if wk.shape != wq.shape or f.shape[1] != wk.shape[0] or wk.shape[1] < 1:
        raise ShapeError(f"features {f.shape} incompatible with projections {wk.shape}, {wq.shape}")
    k = f @ wk
    q = f @ wq
    return AffinityMatrix((k @ q.T) / math.sqrt(wk.shape[1]))


def affinity_l2(features) -> AffinityMatrix:
    """Negative half squared Euclidean distance between every pair of rows."""
    f = as_matrix(features)
    return AffinityMatrix(kernels.l2_affinity(f))


def _as_target(t, n: int) -> np.ndarray:
    entries = t.entries if isinstance(t, TargetMatrix) else np.asarray(t)
    if entries.shape != (n, n):
        raise ShapeError(f"target shape {entries.shape} does not match affinity ({n}, {n})")
    return entries


def _mass(w: AffinityMatrix, tm: np.ndarray):
    if w.mask_diagonal and w.n < 2:
        raise ShapeError("masking the diagonal needs at least two entities")
    return kernels.normalize_mass(w.raw, tm.astype(w.raw.dtype), w.scope is Scope.ROW, w.mask_diagonal)


def target_mass(w: AffinityMatrix, t) -> MassReport:
    """Share of normalized affinity that falls on target entries.

    Matrix scope sums over the whole matrix. Row scope averages the per-row
    masses of rows that carry at least one target.
    """
    tm = _as_target(t, w.n)
    _, row_mass, mass, _ = _mass(w, tm)
    rows = tm.sum(axis=1) > 0
    return MassReport(mass, row_mass, int(tm.sum()), rows)


def focal(m, gamma: float, floor: float):
    """Focal negative log-likelihood of a mass and its derivative in the mass."""
    m = np.asarray(m, dtype=np.float64)
    x = np.clip(1.0 - m, 0.0, None)
    logm = np.log(np.maximum(m, floor))
    w = x**gamma
    value = -w * logm
    if gamma == 0:
        dw = np.zeros_like(m)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            dw = np.where(x > 0, gamma * x ** (gamma - 1.0), 0.0)
    dlog = np.where(m > floor, 1.0 / np.maximum(m, floor), 0.0)
    deriv = dw * logm - w * dlog
    return value, deriv


def _scalar_loss(form: LossForm, mass: float, cfg: LossConfig) -> tuple[float, float]:
    x = 1.0 - mass
    if form is LossForm.L2:
        return x * x, -2.0 * x
    if form is LossForm.SMOOTH_L1:
        if abs(x) < 0.5:
            return x * x, -2.0 * x
        return abs(x) - 0.25, -math.copysign(1.0, x)
    value, deriv = focal(mass, cfg.gamma, cfg.mass_floor)
    return float(value), float(deriv)


def _entry_bce(w: AffinityMatrix, tm: np.ndarray, cfg: LossConfig) -> MassLossResult:
    raw = w.raw
    t = tm.astype(raw.dtype)
    n = w.n
    # log p = -softplus(-w), log(1-p) = -softplus(w)
    sp_pos = np.logaddexp(0.0, raw)
    sp_neg = np.logaddexp(0.0, -raw)
    per = t * sp_neg + (1.0 - t) * sp_pos
    p = np.exp(-sp_neg)
    grad = p - t
    if cfg.mask_diagonal:
        np.fill_diagonal(per, 0.0)
        np.fill_diagonal(grad, 0.0)
        count = n * n - n
    else:
        count = n * n
    scale = 1.0 / count if cfg.bce_normalize else 1.0
    loss = float(per.sum(dtype=np.float64)) * scale
    report = target_mass(w, tm)
    return MassLossResult(loss, (grad * scale).astype(raw.dtype), report)


def evaluate_mass_loss(w: AffinityMatrix, t, cfg: LossConfig) -> MassLossResult:
    """Loss, its gradient w.r.t. the raw scores, and the mass report in one pass.

    The scope and diagonal policy of ``cfg`` override those stored on ``w``.
    """
    w = AffinityMatrix(w.raw, None, cfg.scope, cfg.mask_diagonal)
    tm = _as_target(t, w.n)
    form = cfg.form
    if form is LossForm.ENTRY_BCE:
        return _entry_bce(w, tm, cfg)
    rows = tm.sum(axis=1) > 0
    if form in LOG_FORMS and not rows.any():
        raise DegenerateTargetError("empty target: log of a zero mass is undefined")
    rowwise = cfg.scope is Scope.ROW
    wt, row_mass, mass, nrows = _mass(w, tm)
    coef = np.zeros(w.n, dtype=np.float64)
    if form is LossForm.ROW_FOCAL:
        vals, derivs = focal(row_mass[rows], cfg.gamma, cfg.mass_floor)
        loss = float(vals.sum())
        coef[rows] = derivs
    else:
        loss, dm = _scalar_loss(form, mass, cfg)
        if rowwise:
            if nrows:
                coef[rows] = dm / nrows
        else:
            coef[:] = dm
    grad = kernels.mass_backward(wt, tm.astype(wt.dtype), coef.astype(wt.dtype), rowwise)
    report = MassReport(mass, row_mass, int(tm.sum()), rows)
    return MassLossResult(loss, grad, report)


def mass_loss(w: AffinityMatrix, t, cfg: LossConfig) -> tuple[float, np.ndarray]:
    res = evaluate_mass_loss(w, t, cfg)
    return res.loss, res.grad_raw


def combine_losses(
    main_loss: float,
    main_grads: Mapping[str, np.ndarray],
    aff_loss: float,
    aff_grads: Mapping[str, np.ndarray],
    cfg: LossConfig | float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Total ``main + lam * aff`` and the matching merged gradients."""
    lam = cfg.lam if isinstance(cfg, LossConfig) else float(cfg)
    if set(main_grads) != set(aff_grads):
        raise ShapeError(f"parameter sets differ: {sorted(set(main_grads) ^ set(aff_grads))}")
    for k in main_grads:
        if np.shape(main_grads[k]) != np.shape(aff_grads[k]):
            raise ShapeError(f"gradient shapes differ for {k!r}")
    if lam == 0:
        return float(main_loss), {k: np.array(g, copy=True) for k, g in main_grads.items()}
    merged = {k: main_grads[k] + lam * aff_grads[k] for k in main_grads}
    return float(main_loss) + lam * float(aff_loss), merged
