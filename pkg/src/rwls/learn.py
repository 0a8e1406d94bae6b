"""Closed-form learning of the (2/3, 1/3) lifting filters.

Predict: ``d[n] = x[3n+2] - t0 x[3n+1] - t1 x[3n+3]`` with ``t`` solving the
2x2 normal equations of the mean squared prediction error, either under an
fBm model (expected values from the fBm covariance, averaged over the sample
index) or from a training signal.

Update: ``S(z) = s0 + s1 z**-2`` applied as ``g_l += g_h(z^2) S(z^3)``, which in
the 3-band domain is ``v0[n] += s0 d[n] + s1 d[n-1]``.  ``s`` minimizes the
energy of ``x - x_u`` where ``x_u`` is synthesized from the approximation
branch alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .fbm import FbmModel, autocov, estimate_hurst
from .filterbank import (
    LiftingStep,
    MBandBank,
    RationalFilterBank,
    analysis_polyphase,
    apply_polyphase,
    lazy_mband,
    lift,
    mband_to_rational,
    rational_to_mband,
    split_streams,
    synthesis_polyphase,
    valid_mask,
    with_analysis,
)
from .poly import LaurentPoly, upsample

RCOND = 1e-10
DEFAULT_N_TRAIN = 1024


@dataclass(frozen=True)
class PredictFilter:
    t0: float
    t1: float

    @property
    def poly(self) -> LaurentPoly:
        """``T(z) = t0 z + t1 z^2``."""
        return LaurentPoly(1, [self.t0, self.t1])

    def as_array(self) -> np.ndarray:
        return np.array([self.t0, self.t1])


@dataclass(frozen=True)
class UpdateFilter:
    s0: float
    s1: float

    @property
    def poly(self) -> LaurentPoly:
        """``S(z) = s0 + s1 z^-2``."""
        return LaurentPoly(-2, [self.s1, 0.0, self.s0])

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1])


@dataclass(frozen=True)
class TrainingSource:
    """Where the predict-stage expectations come from.

    ``mode="fbm"`` uses ``model`` and averages over ``n = 0 .. n_train-1``;
    ``mode="empirical"`` uses sample averages over ``signal``.
    """

    mode: str
    model: FbmModel | None = None
    signal: np.ndarray | None = None
    n_train: int = DEFAULT_N_TRAIN

    def __post_init__(self):
        if self.mode == "fbm":
            if self.model is None or self.signal is not None:
                raise ValueError("fbm mode needs a model and no signal")
            if self.n_train < 1:
                raise ValueError("n_train must be >= 1")
        elif self.mode == "empirical":
            if self.signal is None or self.model is not None:
                raise ValueError("empirical mode needs a signal and no model")
            if np.asarray(self.signal).size < 6:
                raise ValueError("empirical training signal needs at least 6 samples")
        else:
            raise ValueError(f"unknown training mode {self.mode!r}")

    @classmethod
    def fbm(cls, model: FbmModel, n_train: int = DEFAULT_N_TRAIN) -> "TrainingSource":
        return cls("fbm", model=model, n_train=n_train)

    @classmethod
    def empirical(cls, signal) -> "TrainingSource":
        return cls("empirical", signal=np.asarray(signal, dtype=float).ravel())


def min_norm_solve(G: np.ndarray, b: np.ndarray, rcond: float = RCOND, atol: float = 0.0) -> np.ndarray:
    """Minimum-norm solution of the symmetric PSD system ``G s = b``."""
    w, V = np.linalg.eigh(G)
    cut = max(rcond * max(w.max(), 0.0), atol)
    keep = w > cut
    if not keep.any():
        return np.zeros_like(b)
    Vk = V[:, keep]
    return Vk @ ((Vk.T @ b) / w[keep])


def _fbm_system(model: FbmModel, n_train: int) -> tuple[np.ndarray, np.ndarray, float]:
    n = np.arange(n_train, dtype=float)
    a, b, c = 3 * n + 1, 3 * n + 2, 3 * n + 3
    r = lambda i, j: float(np.mean(autocov(model, i, j)))
    M = np.array([[r(a, a), r(a, c)], [r(a, c), r(c, c)]])
    v = np.array([r(a, b), r(c, b)])
    return M, v, r(b, b)


def predict_system(src: TrainingSource, unit_scale: bool = False) -> tuple[np.ndarray, np.ndarray, float]:
    """``(M, v, c)`` with ``mse(t) = c - 2 t.v + t' M t``.

    ``unit_scale`` drops the common factor (sigma2 in fbm mode, the signal
    energy in empirical mode); the minimizer does not depend on it.
    """
    if src.mode == "fbm":
        M, v, c = _fbm_system(src.model.with_sigma2(1.0), src.n_train)
        k = 1.0 if unit_scale else src.model.sigma2
        return k * M, k * v, k * c
    x = src.signal
    if unit_scale:
        peak = float(np.max(np.abs(x)))
        x = x / peak if peak > 0 else x
    n_blocks = (x.size - 1) // 3
    A = np.column_stack([x[1 : 3 * n_blocks : 3], x[3 : 3 * n_blocks + 1 : 3]])
    y = x[2 : 3 * n_blocks : 3]
    k = A.shape[0]
    return A.T @ A / k, A.T @ y / k, float(y @ y) / k


def learn_predict(src: TrainingSource) -> PredictFilter:
    M, v, _ = predict_system(src, unit_scale=True)
    t = min_norm_solve(M, v)
    return PredictFilter(float(t[0]), float(t[1]))


def mse_predict(src: TrainingSource, t: PredictFilter | Sequence[float]) -> float:
    t = t.as_array() if isinstance(t, PredictFilter) else np.asarray(t, dtype=float)
    M, v, c = predict_system(src)
    return float(c - 2.0 * t @ v + t @ M @ t)


def predict_step(t: PredictFilter) -> LiftingStep:
    # v2 -= t0 * v1 + t1 * (next v0)
    return LiftingStep(
        "predict", 2, ((1, LaurentPoly.const(-t.t0)), (0, LaurentPoly.monomial(1, -t.t1)))
    )


def update_step(s: UpdateFilter) -> LiftingStep:
    return LiftingStep("update", 0, ((2, LaurentPoly(-1, [s.s1, s.s0])),))


def apply_predict(bank: MBandBank, t: PredictFilter) -> MBandBank:
    """``G_2 <- G_2 - t0 G_1 - t1 z^3 G_0``; synthesis re-derived."""
    if t.t0 == 0.0 and t.t1 == 0.0:
        return bank
    return lift(bank, predict_step(t))


def apply_update(bank: MBandBank, s: UpdateFilter) -> MBandBank:
    """``g_l <- g_l + g_h(z^2) S(z^3)`` on the two-channel form, then back to 3 bands."""
    if s.s0 == 0.0 and s.s1 == 0.0:
        return bank
    rb = mband_to_rational(bank)
    g_l = rb.g_l + upsample(rb.g_h, 2) * upsample(s.poly, 3)
    G = rational_to_mband(RationalFilterBank(g_l, rb.g_h, rb.f_l, rb.f_h)).analysis
    return with_analysis(bank, G, bank.steps + (update_step(s),))


def update_design(bank: MBandBank, x) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares design for the update stage.

    Returns ``(A, r)`` restricted to samples untouched by boundary extension,
    such that ``x - x_u(s) = r - A @ s``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size % 3 or x.size < 12:
        raise ValueError("update training signal length must be a multiple of 3 and >= 12")
    if not np.any(x):
        raise ValueError("update training signal is all zero")
    X = split_streams(x, 3)
    E = analysis_polyphase(bank)
    R = synthesis_polyphase(bank)
    n = X[0].size
    ones = np.ones(n, dtype=bool)
    v = apply_polyphase(E, X)
    mv = valid_mask(E, [ones] * 3)
    zero = np.zeros(n)
    d = v[2]
    d_prev = np.roll(d, 1)
    m_prev = np.zeros(n, dtype=bool)
    m_prev[1:] = mv[2][:-1]
    base = apply_polyphase(R, [v[0], v[1], zero])
    u0 = apply_polyphase(R, [d, zero, zero])
    u1 = apply_polyphase(R, [d_prev, zero, zero])
    ok = np.ones(n, dtype=bool)
    for mask in (
        valid_mask(R, [mv[0], mv[1], ones]),
        valid_mask(R, [mv[2], ones, ones]),
        valid_mask(R, [m_prev, ones, ones]),
    ):
        for mj in mask:
            ok &= mj
    r = np.concatenate([(X[j] - base[j])[ok] for j in range(3)])
    A = np.column_stack(
        [np.concatenate([u[j][ok] for j in range(3)]) for u in (u0, u1)]
    )
    return A, r


def update_objective(bank: MBandBank, x, s) -> float:
    A, r = update_design(bank, x)
    e = r - A @ np.asarray(s, dtype=float)
    return float(e @ e)


def learn_update(bank: MBandBank, x) -> UpdateFilter:
    A, r = update_design(bank, x)
    x = np.asarray(x, dtype=float)
    # details negligible against the signal itself leave nothing to learn
    s = min_norm_solve(A.T @ A, A.T @ r, atol=1e-20 * float(x @ x))
    return UpdateFilter(float(s[0]), float(s[1]))


# -- whole-bank learning -------------------------------------------------------

def vectorize(images: Sequence[np.ndarray], axis: str) -> list[np.ndarray]:
    """One 1-D signal per image: rows concatenated (``row``) or columns (``col``)."""
    if axis == "row":
        return [np.asarray(im, dtype=float).ravel() for im in images]
    if axis == "col":
        return [np.asarray(im, dtype=float).T.ravel() for im in images]
    raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")


def learn_rwls_signal(
    pieces: Sequence[np.ndarray],
    mode: str = "fbm",
    n_train: int = DEFAULT_N_TRAIN,
    model: FbmModel | None = None,
    hurst_block: int = 2048,
    hurst_max_blocks: int | None = 8,
) -> RationalFilterBank:
    """Learn one bank from 1-D training pieces (each piece an independent signal)."""
    pieces = [np.asarray(p, dtype=float).ravel() for p in pieces]
    if not pieces or sum(p.size for p in pieces) == 0:
        raise ValueError("no training data")
    if model is None:
        model = estimate_hurst(pieces, block=hurst_block, max_blocks=hurst_max_blocks)
    train = np.concatenate(pieces)
    train = train[: train.size - train.size % 3]
    src = TrainingSource.fbm(model, n_train) if mode == "fbm" else TrainingSource.empirical(train)
    t = learn_predict(src)
    bank = apply_predict(lazy_mband(3), t)
    s = learn_update(bank, train)
    bank = apply_update(bank, s)
    meta = {
        "name": "rwls",
        "learning": {
            "mode": mode,
            "H": model.H,
            "sigma2": model.sigma2,
            "n_train": n_train if mode == "fbm" else int(train.size),
            "t": [t.t0, t.t1],
            "s": [s.s0, s.s1],
        },
    }
    return mband_to_rational(bank, meta)


def image_manifest_hash(images: Iterable[np.ndarray]) -> str:
    h = hashlib.sha256()
    for im in images:
        a = np.ascontiguousarray(np.asarray(im, dtype=float))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def learn_rwls_1d(images: Sequence[np.ndarray], axis: str, mode: str = "fbm", n_train: int = DEFAULT_N_TRAIN, **kw) -> RationalFilterBank:
    images = list(images)
    if not images:
        raise ValueError("no training images")
    bank = learn_rwls_signal(vectorize(images, axis), mode=mode, n_train=n_train, **kw)
    learning = {**bank.metadata["learning"], "axis": axis, "image_manifest_hash": image_manifest_hash(images)}
    return bank.with_metadata(learning=learning)


def learn_rwls_2d(images: Sequence[np.ndarray], **kw) -> tuple[RationalFilterBank, RationalFilterBank]:
    """Row-space and column-space banks for separable 2-D use."""
    images = list(images)
    return learn_rwls_1d(images, "row", **kw), learn_rwls_1d(images, "col", **kw)
