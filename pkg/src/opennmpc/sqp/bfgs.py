"""
Block damped BFGS approximation of the Lagrangian Hessian.

The Hessian is block diagonal in the decision layout: [u_0], [x_k, u_k] for
k = 1..N-1 and [x_N]. Each block is updated from its own slice of s and y
with Powell's damping. If an updated block is not positive definite the
whole Hessian is reset to the identity, taken in the scaled variables
xi / scale when the NLP carries a variable scale.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from opennmpc.errors import NotPositiveDefiniteError
from opennmpc.linalg.small import cholesky_factor, matmul, symmetrize
from opennmpc.ocp.nlp import DecisionLayout


class BfgsStatus(str, Enum):
    UPDATED = "Updated"
    SKIPPED = "Skipped"
    INDEFINITE = "Indefinite"


def bfgs_block_update(W: np.ndarray, s: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, BfgsStatus]:
    """
    Damped BFGS update of one block.

        theta = 1                               if s^T y >= 0.2 s^T W s
              = 0.8 s^T W s / (s^T W s - s^T y) otherwise
        r     = theta y + (1 - theta) W s
        W'    = W - W s s^T W / (s^T W s) + r r^T / (s^T r)

    The update is skipped when min(s^T W s, s^T r) <= machine epsilon.
    """
    W = np.asarray(W, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Ws = matmul(W, s)
    sWs = float(s @ Ws)
    sy = float(s @ y)
    if sy >= 0.2 * sWs:
        theta = 1.0
    else:
        theta = 0.8 * sWs / (sWs - sy)
    r = theta * y + (1.0 - theta) * Ws
    sr = float(s @ r)
    kappa = min(sWs, sr)
    if not kappa > np.finfo(np.float64).eps:
        return W, BfgsStatus.SKIPPED
    W_new = symmetrize(W - np.multiply.outer(Ws, Ws) / sWs + np.multiply.outer(r, r) / sr)
    try:
        cholesky_factor(W_new)
    except NotPositiveDefiniteError:
        return W_new, BfgsStatus.INDEFINITE
    return W_new, BfgsStatus.UPDATED


def identity_blocks(layout: DecisionLayout, scale: Optional[np.ndarray] = None) -> List[np.ndarray]:
    """Identity in the variables xi / scale, i.e. diag(1 / scale**2); plain identity without a scale"""
    blocks = []
    for k in range(layout.N + 1):
        sl = layout.block_slice(k)
        if scale is None:
            blocks.append(np.eye(sl.stop - sl.start))
        else:
            blocks.append(np.diag(1.0 / np.square(scale[sl])))
    return blocks


def is_positive_definite(W: np.ndarray) -> bool:
    try:
        cholesky_factor(W)
    except NotPositiveDefiniteError:
        return False
    return True


@dataclass
class HessianUpdate:
    blocks: List[np.ndarray]
    updated: int
    skipped: int
    reset: bool


def update_hessian_blocks(
    blocks: List[np.ndarray],
    s: np.ndarray,
    y: np.ndarray,
    layout: DecisionLayout,
    scale: Optional[np.ndarray] = None,
) -> HessianUpdate:
    """Update every block from its slice of s and y; full identity reset on indefiniteness"""
    new_blocks: List[np.ndarray] = []
    updated = skipped = 0
    for k, W in enumerate(blocks):
        sl = layout.block_slice(k)
        W_new, status = bfgs_block_update(W, s[sl], y[sl])
        if status is BfgsStatus.INDEFINITE:
            return HessianUpdate(identity_blocks(layout, scale), updated, skipped, True)
        if status is BfgsStatus.SKIPPED:
            skipped += 1
        else:
            updated += 1
        new_blocks.append(W_new)
    return HessianUpdate(new_blocks, updated, skipped, False)


def dense_hessian(blocks: List[np.ndarray], layout: DecisionLayout) -> np.ndarray:
    """Block-diagonal assembly, for checks and small problems"""
    H = np.zeros((layout.size, layout.size))
    for k, W in enumerate(blocks):
        sl = layout.block_slice(k)
        H[sl, sl] = W
    return H
