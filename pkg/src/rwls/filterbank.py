"""Rational (2/3, 1/3), dyadic and uniform M-band filterbanks built by lifting.

Every bank keeps its analysis and synthesis filters as Laurent polynomials.
Signals are processed through the uniformly decimated M-band equivalent:
branch ``i`` of the analysis side produces ``v_i[n] = sum_e g_i[e] x[m n + e]``
(so ``G_i(z) = z**i`` gives ``x[m n + i]``), and the synthesis side is
derived from the analysis polyphase matrix by adjugate inversion.

For the rational bank the approximation stream interleaves the first two
branches, ``a[2n] = v_0[n]`` and ``a[2n+1] = v_1[n]``; the detail stream is
``d = v_2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import ClassVar, Sequence, Union

import numpy as np

from .poly import (
    LaurentPoly,
    PolyMatrix,
    mat_adjugate,
    mat_det,
    polyphase_assemble_type2,
    polyphase_split,
    polyphase_split_type2,
    reverse,
    scale,
    shift,
    upsample,
)

BOUNDARIES = ("periodic", "symmetric")


class NotInvertibleError(ValueError):
    pass


@dataclass(frozen=True)
class LiftingStep:
    """One elementary lifting operation on the analysis polyphase rows.

    For ``kind`` predict/update, row ``target`` gains ``sum P(z) * row[src]``
    over ``sources``; for ``scale`` row ``target`` is multiplied by ``factor``.
    Filters live in the polyphase variable (``z**m`` of the input rate).
    """

    kind: str
    target: int
    sources: tuple[tuple[int, LaurentPoly], ...] = ()
    factor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("predict", "update", "scale"):
            raise ValueError(f"unknown lifting kind {self.kind!r}")
        if self.kind == "scale":
            if self.factor == 0.0:
                raise ValueError("scale factor must be nonzero")
        elif not self.sources or all(p.is_zero for _, p in self.sources):
            raise ValueError("lifting filter must be nonzero")

    @property
    def filter(self) -> LaurentPoly:
        return self.sources[0][1] if self.sources else LaurentPoly.const(self.factor)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "target": self.target}
        if self.kind == "scale":
            out["factor"] = self.factor
        else:
            out["sources"] = [[j, p.to_json()] for j, p in self.sources]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "LiftingStep":
        return cls(
            kind=obj["kind"],
            target=int(obj["target"]),
            sources=tuple((int(j), LaurentPoly.from_json(p)) for j, p in obj.get("sources", [])),
            factor=float(obj.get("factor", 1.0)),
        )


@dataclass(frozen=True)
class MBandBank:
    """Uniformly decimated ``m``-channel bank (``m = len(analysis)``)."""

    analysis: tuple[LaurentPoly, ...]
    synthesis: tuple[LaurentPoly, ...]
    c: float = 1.0
    n0: int = 0
    steps: tuple[LiftingStep, ...] = ()

    def __post_init__(self):
        if len(self.analysis) != len(self.synthesis) or len(self.analysis) < 2:
            raise ValueError("need the same number (>= 2) of analysis and synthesis filters")

    @property
    def m(self) -> int:
        return len(self.analysis)

    def to_mband(self) -> "MBandBank":
        return self


@dataclass(frozen=True)
class _TwoChannel:
    g_l: LaurentPoly
    g_h: LaurentPoly
    f_l: LaurentPoly
    f_h: LaurentPoly
    c: float = 1.0
    n0: int = 0
    steps: tuple[LiftingStep, ...] = ()
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    kind: ClassVar[str]
    rate_low: ClassVar[Fraction]
    rate_high: ClassVar[Fraction]

    def with_metadata(self, **kw) -> "_TwoChannel":
        return replace(self, metadata={**self.metadata, **kw})


@dataclass(frozen=True)
class RationalFilterBank(_TwoChannel):
    """Two-channel bank with rates 2/3 (lowpass) and 1/3 (highpass)."""

    kind: ClassVar[str] = "rational-2/3"
    rate_low: ClassVar[Fraction] = Fraction(2, 3)
    rate_high: ClassVar[Fraction] = Fraction(1, 3)

    def to_mband(self) -> MBandBank:
        return _rational_to_mband_cached(self)


@dataclass(frozen=True)
class DyadicFilterBank(_TwoChannel):
    kind: ClassVar[str] = "dyadic"
    rate_low: ClassVar[Fraction] = Fraction(1, 2)
    rate_high: ClassVar[Fraction] = Fraction(1, 2)

    def to_mband(self) -> MBandBank:
        return MBandBank((self.g_l, self.g_h), (self.f_l, self.f_h), self.c, self.n0, self.steps)


Bank = Union[MBandBank, RationalFilterBank, DyadicFilterBank]


# -- construction ------------------------------------------------------------

def lazy_mband(m: int = 3) -> MBandBank:
    """``G_i(z) = z**i`` and ``F_i(z) = z**-i``."""
    return MBandBank(
        tuple(LaurentPoly.monomial(i) for i in range(m)),
        tuple(LaurentPoly.monomial(-i) for i in range(m)),
    )


def lazy_dyadic() -> DyadicFilterBank:
    b = lazy_mband(2)
    return DyadicFilterBank(b.analysis[0], b.analysis[1], b.synthesis[0], b.synthesis[1])


def mband_to_rational(b: MBandBank, metadata: dict | None = None) -> RationalFilterBank:
    if b.m != 3:
        raise ValueError("the (2/3, 1/3) rational bank needs a 3-band equivalent")
    G0, G1, G2 = b.analysis
    F0, F1, F2 = b.synthesis
    return RationalFilterBank(
        g_l=upsample(G0, 2) + shift(upsample(G1, 2), 3),
        g_h=G2,
        f_l=upsample(F0, 2) + shift(upsample(F1, 2), -3),
        f_h=F2,
        c=b.c,
        n0=b.n0,
        steps=b.steps,
        metadata=dict(metadata or {}),
    )


def rational_to_mband(b: RationalFilterBank) -> MBandBank:
    return MBandBank(
        analysis=(
            polyphase_split(b.g_l, 2, 0),
            polyphase_split(shift(b.g_l, -3), 2, 0),
            b.g_h,
        ),
        synthesis=(
            polyphase_split(b.f_l, 2, 0),
            polyphase_split(shift(b.f_l, 3), 2, 0),
            b.f_h,
        ),
        c=b.c,
        n0=b.n0,
        steps=b.steps,
    )


# -- polyphase and perfect reconstruction --------------------------------------

@lru_cache(maxsize=64)
def _rational_to_mband_cached(b: RationalFilterBank) -> MBandBank:
    return rational_to_mband(b)


def analysis_polyphase(b: Bank) -> PolyMatrix:
    """``E[i][j]`` with ``G_i(z) = sum_j z**j E_ij(z**m)``."""
    mb = b.to_mband()
    return PolyMatrix([[polyphase_split(g, mb.m, j) for j in range(mb.m)] for g in mb.analysis])


def synthesis_polyphase(b: Bank) -> PolyMatrix:
    """``R[j][i]`` with ``F_i(z) = sum_j z**-j R_ji(z**m)``."""
    mb = b.to_mband()
    m = mb.m
    return PolyMatrix(
        [[polyphase_split_type2(mb.synthesis[i], m, j) for i in range(m)] for j in range(m)]
    )


def synthesis_from_polyphase(R: PolyMatrix) -> tuple[LaurentPoly, ...]:
    m = R.rows
    return tuple(polyphase_assemble_type2([R[j, i] for j in range(m)], m) for i in range(m))


def pr_synthesis(E: PolyMatrix, normalize: bool = False) -> tuple[PolyMatrix, float, int]:
    """Synthesis polyphase matrix for analysis matrix ``E``.

    Returns ``(R, c, n0)`` where ``det(E) = c * z**-n0``.  ``R = adj(E)`` so
    that ``R @ E == c z**-n0 I``; with ``normalize`` the gain and delay are
    divided out and ``R @ E == I``.
    """
    det = mat_det(E)
    if det.is_zero or not det.is_monomial():
        raise NotInvertibleError("bank not losslessly invertible with FIR synthesis")
    big = max(det.terms().items(), key=lambda kv: abs(kv[1]))
    k, c = big
    R = mat_adjugate(E)
    if normalize:
        R = R.map(lambda p: scale(shift(p, -k), 1.0 / c))
    return R, float(c), int(-k)


def pr_error(b: Bank) -> float:
    """Largest coefficient of ``R E - I`` for the stored synthesis filters."""
    RE = synthesis_polyphase(b) @ analysis_polyphase(b)
    return (RE - PolyMatrix.identity(RE.rows)).max_abs()


def with_analysis(b: MBandBank, analysis: Sequence[LaurentPoly], steps) -> MBandBank:
    """Bank with new analysis filters and synthesis re-derived for perfect reconstruction."""
    E = PolyMatrix(
        [[polyphase_split(g, len(analysis), j) for j in range(len(analysis))] for g in analysis]
    )
    R, c, n0 = pr_synthesis(E, normalize=True)
    return MBandBank(tuple(analysis), synthesis_from_polyphase(R), c, n0, tuple(steps))


def lift(b: MBandBank, step: LiftingStep) -> MBandBank:
    """Apply one lifting step to the analysis side; synthesis follows by inversion."""
    m = b.m
    g = list(b.analysis)
    if step.kind == "scale":
        g[step.target] = scale(g[step.target], step.factor)
    else:
        for src, p in step.sources:
            if src == step.target:
                raise ValueError("a lifting step cannot read its own branch")
            g[step.target] = g[step.target] + upsample(p, m) * b.analysis[src]
    return with_analysis(b, g, b.steps + (step,))


# -- dyadic lifting in the two-channel filter domain ----------------------------

def dyadic_predict(b: DyadicFilterBank, t: LaurentPoly) -> DyadicFilterBank:
    """``G_h -= G_l T(z^2)`` and ``F_l += F_h T(z^2)``."""
    if t.is_zero:
        return b
    t2 = upsample(t, 2)
    return replace(
        b,
        g_h=b.g_h - b.g_l * t2,
        f_l=b.f_l + b.f_h * t2,
        steps=b.steps + (LiftingStep("predict", 1, ((0, -t),)),),
    )


def dyadic_update(b: DyadicFilterBank, s: LaurentPoly) -> DyadicFilterBank:
    """``G_l += G_h S(z^2)`` and ``F_h -= F_l S(z^2)``."""
    if s.is_zero:
        return b
    s2 = upsample(s, 2)
    return replace(
        b,
        g_l=b.g_l + b.g_h * s2,
        f_h=b.f_h - b.f_l * s2,
        steps=b.steps + (LiftingStep("update", 0, ((1, s),)),),
    )


def dyadic_scale(b: DyadicFilterBank, k: float) -> DyadicFilterBank:
    """Lowpass gain ``k``, highpass gain ``1/k``."""
    return replace(
        b,
        g_l=scale(b.g_l, k),
        g_h=scale(b.g_h, 1.0 / k),
        f_l=scale(b.f_l, 1.0 / k),
        f_h=scale(b.f_h, k),
        steps=b.steps + (LiftingStep("scale", 0, factor=k), LiftingStep("scale", 1, factor=1.0 / k)),
    )


# Lifting factorizations of the CDF biorthogonal wavelets (Daubechies & Sweldens,
# "Factoring wavelet transforms into lifting steps", 1998; constants as used in
# JPEG 2000 Part 1, Annex F), written in the sign convention of dyadic_predict.
CDF97_ALPHA = -1.586134342059924
CDF97_BETA = -0.052980118572961
CDF97_GAMMA = 0.882911075530934
CDF97_DELTA = 0.443506852043971
CDF97_ZETA = 1.149604398860241


def cdf53() -> DyadicFilterBank:
    """LeGall 5/3: ``d = x_o - (x_e[n] + x_e[n+1])/2``, ``a = x_e + (d[n-1] + d[n])/4``."""
    b = lazy_dyadic()
    b = dyadic_predict(b, LaurentPoly(0, [0.5, 0.5]))
    b = dyadic_update(b, LaurentPoly(-1, [0.25, 0.25]))
    return b.with_metadata(name="cdf53")


def cdf97() -> DyadicFilterBank:
    b = lazy_dyadic()
    b = dyadic_predict(b, LaurentPoly(0, [-CDF97_ALPHA, -CDF97_ALPHA]))
    b = dyadic_update(b, LaurentPoly(-1, [CDF97_BETA, CDF97_BETA]))
    b = dyadic_predict(b, LaurentPoly(0, [-CDF97_GAMMA, -CDF97_GAMMA]))
    b = dyadic_update(b, LaurentPoly(-1, [CDF97_DELTA, CDF97_DELTA]))
    b = dyadic_scale(b, CDF97_ZETA)
    return b.with_metadata(name="cdf97")


def lazy_rational() -> RationalFilterBank:
    return mband_to_rational(lazy_mband(3), {"name": "lazy"})


# -- signal processing ---------------------------------------------------------

def _extend(s: np.ndarray, left: int, right: int, boundary: str) -> np.ndarray:
    n = s.shape[-1]
    if boundary == "periodic" and left <= n and right <= n:
        return np.concatenate([s[..., n - left :], s, s[..., :right]], axis=-1)
    pad = [(0, 0)] * (s.ndim - 1) + [(left, right)]
    if boundary == "periodic":
        return np.pad(s, pad, mode="wrap")
    if boundary == "symmetric":
        return np.pad(s, pad, mode="reflect" if s.shape[-1] > 1 else "edge")
    raise ValueError(f"unknown boundary {boundary!r}")


def apply_filter(p: LaurentPoly, s: np.ndarray, boundary: str = "periodic") -> np.ndarray:
    """``out[n] = sum_e p_e s[n + e]`` along the last axis with boundary extension."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    if p.is_zero:
        return out
    n = s.shape[-1]
    if boundary == "periodic":
        for e, c in p.terms().items():
            out += c * np.roll(s, -e, axis=-1)
        return out
    left = max(0, -p.lo_exp)
    right = max(0, p.hi_exp)
    ext = _extend(s, left, right, boundary)
    for e, c in p.terms().items():
        out += c * ext[..., left + e : left + e + n]
    return out


def apply_polyphase(P: PolyMatrix, streams: Sequence[np.ndarray], boundary: str = "periodic") -> list[np.ndarray]:
    if boundary == "periodic":
        return _apply_taps(_taps(P), streams)
    out = []
    for i in range(P.rows):
        acc = np.zeros_like(np.asarray(streams[0], dtype=float))
        for j in range(P.cols):
            if not P[i, j].is_zero:
                acc = acc + apply_filter(P[i, j], streams[j], boundary)
        out.append(acc)
    return out


def _taps(P: PolyMatrix) -> tuple:
    """``P`` as nested tuples of ``(exponent, coefficient)`` pairs."""
    return tuple(tuple(tuple(P[i, j].terms().items()) for j in range(P.cols)) for i in range(P.rows))


def _apply_taps(taps: tuple, streams: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Periodic polyphase filtering: one wrap-extension per stream, then slices."""
    streams = [np.asarray(s, dtype=float) for s in streams]
    n = streams[0].shape[-1]
    reach = max((abs(e) for row in taps for cell in row for e, _ in cell), default=0)
    ext = [_extend(s, reach, reach, "periodic") for s in streams]
    out = []
    for row in taps:
        acc = np.zeros(streams[0].shape)
        for j, cell in enumerate(row):
            for e, c in cell:
                acc += c * ext[j][..., reach + e : reach + e + n]
        out.append(acc)
    return out


def valid_mask(P: PolyMatrix, masks: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Output samples of :func:`apply_polyphase` that never touch the boundary extension."""
    n = masks[0].shape[-1]
    out = []
    for i in range(P.rows):
        ok = np.ones(n, dtype=bool)
        for j in range(P.cols):
            for e in P[i, j].terms():
                idx = np.arange(n) + e
                inside = (idx >= 0) & (idx < n)
                shifted = np.zeros(n, dtype=bool)
                shifted[inside] = masks[j][idx[inside]]
                ok &= shifted
        out.append(ok)
    return out


def _lift_streams(steps, streams, boundary, inverse=False):
    v = [np.array(s, dtype=float) for s in streams]
    for st in (reversed(steps) if inverse else steps):
        if st.kind == "scale":
            v[st.target] = v[st.target] / st.factor if inverse else v[st.target] * st.factor
            continue
        delta = sum(apply_filter(p, v[j], boundary) for j, p in st.sources)
        v[st.target] = v[st.target] - delta if inverse else v[st.target] + delta
    return v


def _check_steps(mb: MBandBank) -> None:
    if not mb.steps and (mb.analysis != lazy_mband(mb.m).analysis):
        raise ValueError("symmetric boundaries need a bank with a recorded lifting factorization")


def split_streams(x: np.ndarray, m: int) -> list[np.ndarray]:
    return [x[..., j::m] for j in range(m)]


def merge_streams(streams: Sequence[np.ndarray]) -> np.ndarray:
    m = len(streams)
    shape = streams[0].shape[:-1] + (streams[0].shape[-1] * m,)
    x = np.empty(shape)
    for j, s in enumerate(streams):
        x[..., j::m] = s
    return x


@lru_cache(maxsize=64)
def _bank_taps(b: Bank, which: str) -> tuple:
    mb = b.to_mband()
    if which == "analysis":
        return _taps(analysis_polyphase(mb))
    R = synthesis_polyphase(mb)
    if which == "synthesis":
        return _taps(R)
    return _taps(PolyMatrix([[reverse(R[i, j]) for i in range(R.rows)] for j in range(R.cols)]))


def analyze_streams(b: Bank, x: np.ndarray, boundary: str = "periodic") -> list[np.ndarray]:
    """M-band subband streams of ``x`` (last axis)."""
    mb = b.to_mband()
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % mb.m:
        raise ValueError(f"signal length {x.shape[-1]} is not divisible by {mb.m}")
    X = split_streams(x, mb.m)
    if boundary == "periodic":
        return _apply_taps(_bank_taps(b, "analysis"), X)
    _check_steps(mb)
    return _lift_streams(mb.steps, X, boundary)


def synthesize_streams(b: Bank, v: Sequence[np.ndarray], boundary: str = "periodic") -> np.ndarray:
    mb = b.to_mband()
    if boundary == "periodic":
        return merge_streams(_apply_taps(_bank_taps(b, "synthesis"), v))
    _check_steps(mb)
    return merge_streams(_lift_streams(mb.steps, v, boundary, inverse=True))


def synthesis_adjoint_streams(b: Bank, x: np.ndarray) -> list[np.ndarray]:
    """Adjoint of periodic :func:`synthesize_streams`: time-reversed, transposed synthesis."""
    m = b.to_mband().m
    return _apply_taps(_bank_taps(b, "adjoint"), split_streams(np.asarray(x, dtype=float), m))


def analyze_1d(b: Bank, x, boundary: str = "periodic") -> tuple[np.ndarray, np.ndarray]:
    """Approximation and detail coefficients along the last axis of ``x``.

    Rational banks return ``2N/3`` approximation and ``N/3`` detail samples,
    dyadic banks ``N/2`` each.
    """
    v = analyze_streams(b, x, boundary)
    if len(v) == 3:
        return merge_streams(v[:2]), v[2]
    if len(v) == 2:
        return v[0], v[1]
    raise ValueError("analyze_1d supports 2- and 3-band banks")


def synthesize_1d(b: Bank, a, d, boundary: str = "periodic") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    m = b.to_mband().m
    if m == 3:
        if a.shape[-1] != 2 * d.shape[-1]:
            raise ValueError("rational synthesis needs len(a) == 2 len(d)")
        v = [a[..., 0::2], a[..., 1::2], d]
    else:
        if a.shape[-1] != d.shape[-1]:
            raise ValueError("dyadic synthesis needs len(a) == len(d)")
        v = [a, d]
    return synthesize_streams(b, v, boundary)


def synthesis_adjoint_1d(b: Bank, x) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of periodic :func:`synthesize_1d`, laid out like :func:`analyze_1d`."""
    v = synthesis_adjoint_streams(b, x)
    if len(v) == 3:
        return merge_streams(v[:2]), v[2]
    return v[0], v[1]


def decimation(b: Bank) -> int:
    """Length granularity the 1-D transform needs (3 rational, 2 dyadic)."""
    return b.to_mband().m


def low_length(b: Bank, n: int) -> int:
    m = decimation(b)
    return n * (m - 1) // m if m == 3 else n // 2


# -- serialization -------------------------------------------------------------

def bank_to_json(b: Bank) -> dict:
    if isinstance(b, MBandBank):
        b = mband_to_rational(b) if b.m == 3 else DyadicFilterBank(*b.analysis, *b.synthesis, b.c, b.n0, b.steps)
    return {
        "kind": b.kind,
        "analysis": {"g_l": b.g_l.to_json(), "g_h": b.g_h.to_json()},
        "synthesis": {"f_l": b.f_l.to_json(), "f_h": b.f_h.to_json()},
        "c": b.c,
        "n0": b.n0,
        "lifting": [s.to_json() for s in b.steps],
        "metadata": b.metadata,
    }


def bank_from_json(obj: dict) -> RationalFilterBank | DyadicFilterBank:
    kinds = {"rational-2/3": RationalFilterBank, "dyadic": DyadicFilterBank}
    try:
        cls = kinds[obj["kind"]]
        return cls(
            g_l=LaurentPoly.from_json(obj["analysis"]["g_l"]),
            g_h=LaurentPoly.from_json(obj["analysis"]["g_h"]),
            f_l=LaurentPoly.from_json(obj["synthesis"]["f_l"]),
            f_h=LaurentPoly.from_json(obj["synthesis"]["f_h"]),
            c=float(obj.get("c", 1.0)),
            n0=int(obj.get("n0", 0)),
            steps=tuple(LiftingStep.from_json(s) for s in obj.get("lifting", [])),
            metadata=dict(obj.get("metadata", {})),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid filterbank JSON: {exc}") from exc
