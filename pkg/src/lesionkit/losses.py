"""Reference evaluators for the training objective and learning-rate schedule.

Soft Dice loss with its analytic gradient, clipped binary cross-entropy,
their sum, and the poly schedule. These are numerical references for
validating external training code, not autodiff kernels, so everything runs
in float64 with a fixed summation order (x-fastest linearization).

eps and clip defaults follow common segmentation-framework practice; they are
toolkit choices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid3, Mask, require_same_geometry

DEFAULT_EPS = 1e-5
DEFAULT_CLIP = 1e-7
PROB_TOL = 1e-9


@dataclass(frozen=True)
class ProbField:
    """Per-voxel foreground probabilities on a grid, stored float64.

    Values must lie in [0, 1] within 1e-9; tiny excursions are clamped.
    """

    grid: Grid3
    probs: np.ndarray

    def __post_init__(self):
        p = np.asfortranarray(self.probs, dtype=np.float64)
        if p.shape != self.grid.dims:
            raise ValueError(f"probs shape {p.shape} does not match grid dims {self.grid.dims}")
        if not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite")
        lo, hi = float(p.min(initial=0.0)), float(p.max(initial=1.0))
        if lo < -PROB_TOL or hi > 1.0 + PROB_TOL:
            raise ValueError(f"probabilities outside [0, 1]: range [{lo}, {hi}]")
        p = np.clip(p, 0.0, 1.0)
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    def flat(self) -> np.ndarray:
        return self.probs.ravel(order="F")


def _sums(p: ProbField, g: Mask, eps: float):
    require_same_geometry(p.grid, g.grid)
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    pv = p.flat()
    gv = g.flat().astype(np.float64)
    inter = float(np.dot(pv, gv))
    s = float(pv.sum()) + float(gv.sum()) + eps
    return pv, gv, inter, s


def soft_dice_loss(p: ProbField, g: Mask, eps: float = DEFAULT_EPS) -> float:
    """1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)."""
    _, _, inter, s = _sums(p, g, eps)
    return 1.0 - (2.0 * inter + eps) / s


def soft_dice_grad(p: ProbField, g: Mask, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Analytic dL/dp_i for the soft Dice loss, same shape as p (float64).

    dL/dp_i = -(2*g_i*S - (2*sum(p*g) + eps)) / S^2 with S = sum(p)+sum(g)+eps.
    """
    _, _, inter, s = _sums(p, g, eps)
    gvals = g.bits.astype(np.float64)
    grad = -(2.0 * gvals * s - (2.0 * inter + eps)) / (s * s)
    return np.asfortranarray(grad)


def cross_entropy_loss(p: ProbField, g: Mask, clip: float = DEFAULT_CLIP) -> float:
    """Mean binary cross-entropy with probabilities clamped to [clip, 1-clip]."""
    require_same_geometry(p.grid, g.grid)
    if not 0.0 < clip < 0.5:
        raise ValueError(f"clip must be in (0, 0.5), got {clip}")
    ph = np.clip(p.flat(), clip, 1.0 - clip)
    gv = g.flat().astype(np.float64)
    per_voxel = -(gv * np.log(ph) + (1.0 - gv) * np.log1p(-ph))
    return float(per_voxel.mean())


def combined_loss(
    p: ProbField, g: Mask, eps: float = DEFAULT_EPS, clip: float = DEFAULT_CLIP
) -> float:
    """soft_dice_loss + cross_entropy_loss, the training objective."""
    return soft_dice_loss(p, g, eps) + cross_entropy_loss(p, g, clip)


def poly_lr(epoch: int, max_epochs: int, lr0: float, exponent: float = 0.9) -> float:
    """lr0 * (1 - epoch/max_epochs)**exponent, the poly decay schedule."""
    if max_epochs <= 0:
        raise ValueError(f"max_epochs must be > 0, got {max_epochs}")
    if not 0 <= epoch <= max_epochs:
        raise ValueError(f"epoch must be in [0, {max_epochs}], got {epoch}")
    if lr0 <= 0:
        raise ValueError(f"lr0 must be > 0, got {lr0}")
    if exponent <= 0:
        raise ValueError(f"exponent must be > 0, got {exponent}")
    return lr0 * (1.0 - epoch / max_epochs) ** exponent
