"""Laurent polynomials and small polynomial matrices over the reals.

A :class:`LaurentPoly` stores ``coeffs[k]`` as the coefficient of
``z**(lo_exp + k)``.  Positive powers are advances: applied to a sequence,
``z**e`` maps ``x[n]`` to ``x[n + e]``.

Polyphase conventions (used by every filterbank in this package)::

    analysis,  type 1:  G(z) = sum_k z**k     E_k(z**m)
    synthesis, type 2:  F(z) = sum_k z**(-k)  R_k(z**m)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TRIM_TOL = 1e-12


@dataclass(frozen=True)
class LaurentPoly:
    lo_exp: int
    coeffs: tuple[float, ...]

    def __init__(self, lo_exp: int = 0, coeffs: Iterable[float] = (), tol: float = TRIM_TOL):
        c = [float(v) for v in coeffs]
        c = [0.0 if abs(v) < tol else v for v in c]
        start = 0
        while start < len(c) and c[start] == 0.0:
            start += 1
        stop = len(c)
        while stop > start and c[stop - 1] == 0.0:
            stop -= 1
        c = c[start:stop]
        object.__setattr__(self, "lo_exp", int(lo_exp) + start if c else 0)
        object.__setattr__(self, "coeffs", tuple(c))

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls) -> "LaurentPoly":
        return cls(0, ())

    @classmethod
    def const(cls, c: float) -> "LaurentPoly":
        return cls(0, (c,))

    @classmethod
    def monomial(cls, exp: int, c: float = 1.0) -> "LaurentPoly":
        return cls(exp, (c,))

    @classmethod
    def from_dict(cls, terms: dict[int, float]) -> "LaurentPoly":
        if not terms:
            return cls.zero()
        lo, hi = min(terms), max(terms)
        c = [0.0] * (hi - lo + 1)
        for e, v in terms.items():
            c[e - lo] += v
        return cls(lo, c)

    # -- basic properties --------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def hi_exp(self) -> int:
        return self.lo_exp + len(self.coeffs) - 1

    def terms(self) -> dict[int, float]:
        return {self.lo_exp + k: c for k, c in enumerate(self.coeffs)}

    def coeff(self, exp: int) -> float:
        k = exp - self.lo_exp
        if 0 <= k < len(self.coeffs):
            return self.coeffs[k]
        return 0.0

    def max_abs(self) -> float:
        return max((abs(c) for c in self.coeffs), default=0.0)

    def is_monomial(self, rel_tol: float = 1e-9) -> bool:
        big = [c for c in self.coeffs if abs(c) > rel_tol * self.max_abs()]
        return len(big) == 1

    def trimmed(self, tol: float) -> "LaurentPoly":
        return LaurentPoly(self.lo_exp, self.coeffs, tol=tol)

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other: "LaurentPoly | float") -> "LaurentPoly":
        return add(self, _as_poly(other))

    __radd__ = __add__

    def __neg__(self) -> "LaurentPoly":
        return LaurentPoly(self.lo_exp, [-c for c in self.coeffs])

    def __sub__(self, other: "LaurentPoly | float") -> "LaurentPoly":
        return add(self, -_as_poly(other))

    def __rsub__(self, other: "LaurentPoly | float") -> "LaurentPoly":
        return add(_as_poly(other), -self)

    def __mul__(self, other: "LaurentPoly | float") -> "LaurentPoly":
        return mul(self, _as_poly(other))

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "LaurentPoly":
        return LaurentPoly(self.lo_exp, [v / c for v in self.coeffs])

    def __call__(self, z: complex | np.ndarray) -> complex | np.ndarray:
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for e, c in self.terms().items():
            out = out + c * z**e
        return out if out.ndim else complex(out)

    def __repr__(self) -> str:
        if self.is_zero:
            return "LaurentPoly(0)"
        parts = [f"{c:+.6g}*z^{e}" for e, c in self.terms().items() if c != 0.0]
        return "LaurentPoly(" + " ".join(parts) + ")"

    # -- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        return {"lo_exp": self.lo_exp, "coeffs": list(self.coeffs)}

    @classmethod
    def from_json(cls, obj: dict) -> "LaurentPoly":
        return cls(int(obj["lo_exp"]), [float(c) for c in obj["coeffs"]])


def _as_poly(p: "LaurentPoly | float") -> LaurentPoly:
    if isinstance(p, LaurentPoly):
        return p
    return LaurentPoly.const(float(p))


def add(a: LaurentPoly, b: LaurentPoly) -> LaurentPoly:
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    lo = min(a.lo_exp, b.lo_exp)
    hi = max(a.hi_exp, b.hi_exp)
    c = np.zeros(hi - lo + 1)
    c[a.lo_exp - lo : a.hi_exp - lo + 1] += a.coeffs
    c[b.lo_exp - lo : b.hi_exp - lo + 1] += b.coeffs
    return LaurentPoly(lo, c)


def mul(a: LaurentPoly, b: LaurentPoly) -> LaurentPoly:
    if a.is_zero or b.is_zero:
        return LaurentPoly.zero()
    return LaurentPoly(a.lo_exp + b.lo_exp, np.convolve(a.coeffs, b.coeffs))


def scale(p: LaurentPoly, c: float) -> LaurentPoly:
    return LaurentPoly(p.lo_exp, [c * v for v in p.coeffs])


def shift(p: LaurentPoly, k: int) -> LaurentPoly:
    """Multiply by ``z**k``."""
    return LaurentPoly(p.lo_exp + k, p.coeffs)


def reverse(p: LaurentPoly) -> LaurentPoly:
    """Time reversal ``p(z^-1)``; the filter adjoint under the advance convention."""
    if p.is_zero:
        return p
    return LaurentPoly(-p.hi_exp, p.coeffs[::-1])


def upsample(p: LaurentPoly, m: int) -> LaurentPoly:
    """Return ``p(z**m)``."""
    if m < 1:
        raise ValueError("upsampling factor must be >= 1")
    return LaurentPoly.from_dict({e * m: c for e, c in p.terms().items()})


def polyphase_split(p: LaurentPoly, m: int, phase: int) -> LaurentPoly:
    """Type-1 component: the ``q`` with ``p(z) = sum_k z**k q_k(z**m)``."""
    if m < 1 or not 0 <= phase < m:
        raise ValueError(f"phase must lie in [0, {m})")
    return LaurentPoly.from_dict(
        {(e - phase) // m: c for e, c in p.terms().items() if (e - phase) % m == 0}
    )


def polyphase_assemble(parts: Sequence[LaurentPoly], m: int | None = None) -> LaurentPoly:
    """Inverse of :func:`polyphase_split` over all phases."""
    m = len(parts) if m is None else m
    out = LaurentPoly.zero()
    for k, q in enumerate(parts):
        out = out + shift(upsample(q, m), k)
    return out


def polyphase_split_type2(p: LaurentPoly, m: int, phase: int) -> LaurentPoly:
    """Type-2 component: the ``q`` with ``p(z) = sum_k z**(-k) q_k(z**m)``."""
    return polyphase_split(shift(p, phase), m, 0)


def polyphase_assemble_type2(parts: Sequence[LaurentPoly], m: int | None = None) -> LaurentPoly:
    m = len(parts) if m is None else m
    out = LaurentPoly.zero()
    for k, q in enumerate(parts):
        out = out + shift(upsample(q, m), -k)
    return out


def freq_response(p: LaurentPoly, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``p`` at ``z = exp(j*w)`` for ``n_points`` w spread evenly on [0, pi]."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    w = np.linspace(0.0, math.pi, n_points)
    return w, np.asarray(p(np.exp(1j * w)))


class PolyMatrix:
    """Rectangular matrix with :class:`LaurentPoly` entries."""

    def __init__(self, entries: Sequence[Sequence[LaurentPoly]]):
        rows = [tuple(_as_poly(e) for e in row) for row in entries]
        if not rows or not rows[0]:
            raise ValueError("PolyMatrix needs at least one row and one column")
        if any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("PolyMatrix rows must have equal length")
        self.entries = tuple(rows)

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def __getitem__(self, ij: tuple[int, int]) -> LaurentPoly:
        i, j = ij
        return self.entries[i][j]

    @classmethod
    def identity(cls, n: int) -> "PolyMatrix":
        one, zero = LaurentPoly.const(1.0), LaurentPoly.zero()
        return cls([[one if i == j else zero for j in range(n)] for i in range(n)])

    @classmethod
    def diag(cls, polys: Sequence[LaurentPoly]) -> "PolyMatrix":
        n = len(polys)
        return cls([[polys[i] if i == j else LaurentPoly.zero() for j in range(n)] for i in range(n)])

    def map(self, fn) -> "PolyMatrix":
        return PolyMatrix([[fn(e) for e in row] for row in self.entries])

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        return mat_mul(self, other)

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.shape != other.shape:
            raise ValueError("dimension mismatch")
        return PolyMatrix(
            [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(self.entries, other.entries)]
        )

    def max_abs(self) -> float:
        return max(e.max_abs() for row in self.entries for e in row)

    def to_json(self) -> list:
        return [[e.to_json() for e in row] for row in self.entries]

    def __repr__(self) -> str:
        return f"PolyMatrix({self.rows}x{self.cols})"


def mat_mul(a: PolyMatrix, b: PolyMatrix) -> PolyMatrix:
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    out = []
    for i in range(a.rows):
        row = []
        for j in range(b.cols):
            acc = LaurentPoly.zero()
            for k in range(a.cols):
                acc = acc + a[i, k] * b[k, j]
            row.append(acc)
        out.append(row)
    return PolyMatrix(out)


def _minor(a: PolyMatrix, i: int, j: int) -> PolyMatrix:
    return PolyMatrix(
        [[a[r, c] for c in range(a.cols) if c != j] for r in range(a.rows) if r != i]
    )


def mat_det(a: PolyMatrix) -> LaurentPoly:
    """Determinant by cofactor expansion (intended for n <= 4)."""
    if a.rows != a.cols:
        raise ValueError("determinant requires a square matrix")
    if a.rows == 1:
        return a[0, 0]
    if a.rows == 2:
        return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    acc = LaurentPoly.zero()
    for j in range(a.cols):
        if a[0, j].is_zero:
            continue
        term = a[0, j] * mat_det(_minor(a, 0, j))
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def mat_adjugate(a: PolyMatrix) -> PolyMatrix:
    """Adjugate, so that ``a @ adj(a) == det(a) * I``."""
    if a.rows != a.cols:
        raise ValueError("adjugate requires a square matrix")
    n = a.rows
    if n == 1:
        return PolyMatrix([[LaurentPoly.const(1.0)]])
    out = [[LaurentPoly.zero()] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            cof = mat_det(_minor(a, i, j))
            out[j][i] = cof if (i + j) % 2 == 0 else -cof
    return PolyMatrix(out)


def mat_det3(a: PolyMatrix) -> LaurentPoly:
    if a.shape != (3, 3):
        raise ValueError("mat_det3 requires a 3x3 matrix")
    return mat_det(a)


def mat_adjugate3(a: PolyMatrix) -> PolyMatrix:
    if a.shape != (3, 3):
        raise ValueError("mat_adjugate3 requires a 3x3 matrix")
    return mat_adjugate(a)
