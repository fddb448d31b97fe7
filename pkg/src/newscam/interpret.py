"""Token-level class activation maps, PCA projection and token correlations."""

from __future__ import annotations

import csv
import html
import io
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .classifier import LinearHead
from .tokenization import NON_CONTENT_TOKENS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CamScores:
    scores: np.ndarray  # (L_content,)
    class_index: int
    tokens: tuple[str, ...]


def cam(rows, head: LinearHead, class_index: int, mask=None, tokens=()) -> CamScores:
    """Per-token score ``sum_k W[c, k] * f[l, k]`` over masked-in positions.

    ``rows`` is the (L, D) matrix that feeds the average pool. Because the
    head is linear, ``b_c + mean(scores)`` equals the pooled logit for class c.
    """
    f = np.asarray(rows, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != head.dim:
        raise ValueError(f"activations of shape {f.shape} do not match head dim {head.dim}")
    if not 0 <= class_index < head.classes:
        raise ValueError(f"class index {class_index} out of range")
    keep = np.ones(len(f), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if len(keep) != len(f):
        raise ValueError("mask length differs from number of rows")
    tokens = tuple(tokens)
    if tokens and len(tokens) != len(f):
        raise ValueError("tokens length differs from number of rows")
    scores = f[keep] @ head.W[class_index]
    kept_tokens = tuple(t for t, k in zip(tokens, keep) if k) if tokens else ()
    return CamScores(scores, class_index, kept_tokens)


@dataclass(frozen=True)
class Highlight:
    tokens: tuple[str, ...]
    flags: tuple[bool, ...]

    @property
    def n_flagged(self) -> int:
        return sum(self.flags)


def highlight(cs: CamScores, fraction: float = 0.10) -> Highlight:
    """Flag the top ``ceil(fraction * L)`` content tokens by score.

    Special tokens are neither counted nor flagged; ties go to the earlier token.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    scores = np.asarray(cs.scores, dtype=np.float64)
    tokens = cs.tokens or tuple(str(i) for i in range(len(scores)))
    content = [i for i, t in enumerate(tokens) if t not in NON_CONTENT_TOKENS]
    hot = set(sorted(content, key=lambda i: (-scores[i], i))[:n_highlighted(len(content), fraction)])
    return Highlight(tuple(tokens), tuple(i in hot for i in range(len(scores))))


def n_highlighted(n_content: int, fraction: float) -> int:
    # decimal value of the fraction, so 0.1 * 30 is exactly 3
    return math.ceil(Fraction(repr(fraction)) * n_content)


ANSI_RED = "\x1b[31m"
ANSI_RESET = "\x1b[0m"


def render(h: Highlight, fmt: str = "ansi") -> str:
    if fmt == "ansi":
        parts = [f"{ANSI_RED}{t}{ANSI_RESET}" if f else t for t, f in zip(h.tokens, h.flags)]
    elif fmt == "html":
        parts = [f'<span class="cam-hot">{html.escape(t)}</span>' if f else html.escape(t)
                 for t, f in zip(h.tokens, h.flags)]
    else:
        raise ValueError(f"unsupported render format {fmt!r} (use 'ansi' or 'html')")
    return " ".join(parts)


# --- PCA -------------------------------------------------------------------

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (2, D)
    eigenvalues: np.ndarray  # (2,)


def power_iteration(C, start, tol=1e-10, max_iter=200_000, against=(), zero_tol=0.0):
    """Dominant eigenpair of a symmetric PSD matrix.

    Stops once successive unit vectors differ by at most ``tol`` (up to sign).
    Vectors in ``against`` are projected out every step. If ``C v`` has norm
    at or below ``zero_tol`` the remaining spectrum is treated as zero.
    """
    v = _orthogonalize(np.asarray(start, dtype=np.float64), against)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = _orthogonalize(C @ v, against)
        norm = np.linalg.norm(w)
        if norm <= zero_tol:
            return 0.0, v
        w /= norm
        if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) <= tol:
            v = w
            break
        v = w
    else:
        logger.warning("power iteration hit max_iter=%d before converging", max_iter)
    return float(v @ C @ v), v


def _orthogonalize(v, against):
    for u in against:
        v = v - (u @ v) * u
    return v


def _sign_fix(v):
    return v if v[np.argmax(np.abs(v))] > 0 else -v


def pca_fit(Z, n_components: int = 2, tol: float = 1e-10) -> PcaModel:
    """Top principal components by power iteration with deflation.

    Covariance uses the 1/(N-1) normalisation. Each component's
    largest-magnitude entry is made positive.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or len(Z) < 3:
        raise ValueError("PCA needs at least 3 vectors")
    mean = Z.mean(axis=0)
    X = Z - mean
    C = X.T @ X / (len(Z) - 1)
    if not np.any(C):
        raise ValueError("all vectors identical: covariance has rank 0")
    d = C.shape[0]
    zero_tol = 1e-14 * np.linalg.norm(C)
    start = np.random.default_rng(0).standard_normal(d)
    comps, vals = [], []
    deflated = C.copy()
    for _ in range(min(n_components, d)):
        lam, v = power_iteration(deflated, start, tol=tol, against=comps, zero_tol=zero_tol)
        v = _sign_fix(v)
        comps.append(v)
        vals.append(lam)
        deflated = deflated - lam * np.outer(v, v)
    return PcaModel(mean, np.array(comps), np.array(vals))


def pca_project(model: PcaModel, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"dim {z.shape[-1]} != PCA dim {model.mean.shape[0]}")
    return (z - model.mean) @ model.components.T


def pca_csv(points, labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pc1", "pc2", "label"])
    for (a, b), y in zip(points, labels):
        w.writerow([repr(float(a)), repr(float(b)), int(y)])
    return buf.getvalue()


# --- correlation -----------------------------------------------------------

@dataclass(frozen=True)
class CorrelationMatrix:
    entries: np.ndarray
    tokens: tuple[str, ...]


def correlation_matrix(rows, tokens=()) -> CorrelationMatrix:
    """Pearson correlation between every pair of rows, taken across columns.

    A row with zero variance correlates 0 with every other row and 1 with itself.
    """
    f = np.asarray(rows, dtype=np.float64)
    if f.ndim != 2 or len(f) < 2:
        raise ValueError("need an L x D matrix with L >= 2")
    xc = f - f.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(xc, axis=1)
    live = norms > 0
    u = np.zeros_like(xc)
    u[live] = xc[live] / norms[live, None]
    corr = u @ u.T
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    # bitwise-equal normalised rows are perfectly correlated; avoid 1 - ulp
    groups = {}
    for i in np.flatnonzero(live):
        groups.setdefault(u[i].tobytes(), []).append(i)
    for members in groups.values():
        if len(members) > 1:
            corr[np.ix_(members, members)] = 1.0
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix(corr, tuple(tokens))


def correlation_csv(cm: CorrelationMatrix) -> str:
    tokens = cm.tokens or tuple(str(i) for i in range(len(cm.entries)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *tokens])
    for tok, row in zip(tokens, cm.entries):
        w.writerow([tok, *(repr(float(x)) for x in row)])
    return buf.getvalue()
