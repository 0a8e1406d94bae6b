"""Separable 2-D wavelet pyramids over rational or dyadic banks.

Columns are transformed first (axis 0, ``col_bank``), then rows (axis 1,
``row_bank``).  Band tags follow the ``<col band><count><row band><count>``
notation, e.g. ``L2H1`` is lowpass after two column analyses and highpass
after one row analysis.

Coefficients are packed into one matrix: column-lowpass rows on top,
row-lowpass columns on the left.  The image is padded once, up front, to a
size every level divides exactly, so the band rectangles always tile the
packed matrix.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .filterbank import Bank, analyze_1d, decimation, low_length, synthesis_adjoint_1d, synthesize_1d

PAD_POLICIES = ("periodic", "symmetric")
STYLES = ("R", "L")


@dataclass(frozen=True)
class PyramidSpec:
    levels: int
    style: str
    row_bank: Bank
    col_bank: Bank
    pad_policy: str = "periodic"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}")
        if self.pad_policy not in PAD_POLICIES:
            raise ValueError(f"pad_policy must be one of {PAD_POLICIES}")


@dataclass(frozen=True)
class Band:
    tag: str
    rect: tuple[int, int, int, int]  # row0, col0, height, width

    @property
    def size(self) -> int:
        return self.rect[2] * self.rect[3]

    def slices(self) -> tuple[slice, slice]:
        r0, c0, h, w = self.rect
        return slice(r0, r0 + h), slice(c0, c0 + w)


@dataclass(frozen=True)
class PyramidLayout:
    """Everything needed to unpack and invert a pyramid."""

    shape: tuple[int, int]  # original image
    padded: tuple[int, int]  # packed coefficient matrix
    levels: int
    style: str
    bands: tuple[Band, ...]
    ops: tuple[tuple, ...]  # (level, "both"|"col"|"row", rect), in forward order
    pad_record: tuple[tuple[int, int, int, int], ...]  # per level: rows in/out, cols in/out

    @property
    def size(self) -> int:
        return self.padded[0] * self.padded[1]

    def tags(self) -> list[str]:
        return [b.tag for b in self.bands]

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "padded": list(self.padded),
            "levels": self.levels,
            "style": self.style,
            "bands": [[b.tag, list(b.rect)] for b in self.bands],
            "ops": [[lv, kind, list(rect)] for lv, kind, rect in self.ops],
            "pad_record": [list(p) for p in self.pad_record],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PyramidLayout":
        return cls(
            shape=tuple(obj["shape"]),
            padded=tuple(obj["padded"]),
            levels=int(obj["levels"]),
            style=obj["style"],
            bands=tuple(Band(t, tuple(r)) for t, r in obj["bands"]),
            ops=tuple((int(lv), k, tuple(r)) for lv, k, r in obj["ops"]),
            pad_record=tuple(tuple(p) for p in obj["pad_record"]),
        )


@dataclass
class PyramidCoeffs:
    layout: PyramidLayout
    packed: np.ndarray = field(repr=False)

    @property
    def bands(self) -> list[tuple[str, tuple[int, int, int, int], np.ndarray]]:
        return [(b.tag, b.rect, self.packed[b.slices()]) for b in self.layout.bands]

    def band(self, tag: str) -> np.ndarray:
        for b in self.layout.bands:
            if b.tag == tag:
                return self.packed[b.slices()]
        raise KeyError(tag)


# -- single-axis transforms -----------------------------------------------------

def _pad_mode(pad_policy: str) -> str:
    return "wrap" if pad_policy == "periodic" else "symmetric"


def _pad_axis(x: np.ndarray, axis: int, target: int, pad_policy: str) -> np.ndarray:
    n = x.shape[axis]
    if target == n:
        return x
    pad = [(0, 0)] * x.ndim
    pad[axis] = (0, target - n)
    return np.pad(x, pad, mode=_pad_mode(pad_policy))


def _round_up(n: int, k: int) -> int:
    return -(-n // k) * k


def analyze_axis(img, bank: Bank, axis: str, pad_policy: str = "periodic"):
    """One level of 1-D analysis along ``axis`` ('col' = axis 0, 'row' = axis 1).

    Returns ``(low, high, pad_record)`` with ``pad_record = (original, padded)``.
    """
    x = np.asarray(img, dtype=float)
    ax = _axis_index(axis)
    n = x.shape[ax]
    padded = _round_up(n, decimation(bank))
    x = _pad_axis(x, ax, padded, pad_policy)
    a, d = analyze_1d(bank, np.moveaxis(x, ax, -1), pad_policy)
    return np.moveaxis(a, -1, ax), np.moveaxis(d, -1, ax), (n, padded)


def inverse_axis(low, high, bank: Bank, axis: str, pad_record, pad_policy: str = "periodic") -> np.ndarray:
    ax = _axis_index(axis)
    x = synthesize_1d(
        bank, np.moveaxis(np.asarray(low, float), ax, -1), np.moveaxis(np.asarray(high, float), ax, -1), pad_policy
    )
    x = np.moveaxis(x, -1, ax)
    n = pad_record[0]
    return x[:n] if ax == 0 else x[:, :n]


def _axis_index(axis: str) -> int:
    if axis == "col":
        return 0
    if axis == "row":
        return 1
    raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")


def _split(block: np.ndarray, bank: Bank, ax: int, pad_policy: str) -> np.ndarray:
    a, d = analyze_1d(bank, np.moveaxis(block, ax, -1), pad_policy)
    return np.moveaxis(np.concatenate([a, d], axis=-1), -1, ax)


def _merge(block: np.ndarray, bank: Bank, ax: int, pad_policy: str) -> np.ndarray:
    y = np.moveaxis(block, ax, -1)
    nl = low_length(bank, y.shape[-1])
    x = synthesize_1d(bank, y[..., :nl], y[..., nl:], pad_policy)
    return np.moveaxis(x, -1, ax)


def _merge_adjoint(block: np.ndarray, bank: Bank, ax: int) -> np.ndarray:
    a, d = synthesis_adjoint_1d(bank, np.moveaxis(block, ax, -1))
    return np.moveaxis(np.concatenate([a, d], axis=-1), -1, ax)


# -- pyramid layout --------------------------------------------------------------

def required_multiple(bank: Bank, levels: int) -> int:
    return decimation(bank) ** levels


def plan_layout(shape: tuple[int, int], spec: PyramidSpec) -> PyramidLayout:
    """Band table and operation list for an image of ``shape``."""
    h, w = shape
    if h < 1 or w < 1:
        raise ValueError("empty image")
    ph = _round_up(h, required_multiple(spec.col_bank, spec.levels))
    pw = _round_up(w, required_multiple(spec.row_bank, spec.levels))
    ops: list[tuple] = []
    # live bands by tag -> rect
    live: dict[str, tuple[int, int, int, int]] = {}
    order: list[str] = []
    pad_record = []
    ll = (0, 0, ph, pw)
    fresh_single: list[tuple[str, tuple]] = []
    for k in range(1, spec.levels + 1):
        r0, c0, bh, bw = ll
        pad_record.append((bh if k > 1 else h, bh, bw if k > 1 else w, bw))
        hl = low_length(spec.col_bank, bh)
        wl = low_length(spec.row_bank, bw)
        if hl < 3 or wl < 3:
            raise ValueError(
                f"image {shape} too small for {spec.levels} levels (level {k} low band {hl}x{wl})"
            )
        if spec.style == "L":
            # single-direction bands from the previous level get one more
            # analysis along their lowpass direction
            for tag, rect in fresh_single:
                rr, cc, hh, ww = rect
                order.remove(tag)
                del live[tag]
                cb, cn, rb, rn = parse_tag(tag)
                if cb == "L":  # L{k-1}H{k-1}: columns still lowpass
                    hl2 = low_length(spec.col_bank, hh)
                    ops.append((k, "col", rect))
                    _insert(live, order, f"L{k}{rb}{rn}", (rr, cc, hl2, ww))
                    _insert(live, order, f"H{k}{rb}{rn}", (rr + hl2, cc, hh - hl2, ww))
                else:  # H{k-1}L{k-1}: rows still lowpass
                    wl2 = low_length(spec.row_bank, ww)
                    ops.append((k, "row", rect))
                    _insert(live, order, f"{cb}{cn}L{k}", (rr, cc, hh, wl2))
                    _insert(live, order, f"{cb}{cn}H{k}", (rr, cc + wl2, hh, ww - wl2))
        ops.append((k, "both", ll))
        if k > 1:
            order.remove(f"L{k-1}L{k-1}")
            del live[f"L{k-1}L{k-1}"]
        _insert(live, order, f"L{k}L{k}", (r0, c0, hl, wl))
        lh = (r0, c0 + wl, hl, bw - wl)
        hl_ = (r0 + hl, c0, bh - hl, wl)
        _insert(live, order, f"L{k}H{k}", lh)
        _insert(live, order, f"H{k}L{k}", hl_)
        _insert(live, order, f"H{k}H{k}", (r0 + hl, c0 + wl, bh - hl, bw - wl))
        fresh_single = [(f"L{k}H{k}", lh), (f"H{k}L{k}", hl_)]
        ll = (r0, c0, hl, wl)
    bands = tuple(Band(t, live[t]) for t in _canonical_order(order))
    return PyramidLayout((h, w), (ph, pw), spec.levels, spec.style, bands, tuple(ops), tuple(pad_record))


def _insert(live, order, tag, rect):
    live[tag] = rect
    order.append(tag)


_TAG_RE = re.compile(r"([LH])(\d+)([LH])(\d+)")


def parse_tag(tag: str) -> tuple[str, int, str, int]:
    m = _TAG_RE.fullmatch(tag)
    if m is None:
        raise ValueError(f"malformed band tag {tag!r}")
    return m.group(1), int(m.group(2)), m.group(3), int(m.group(4))


def _canonical_order(tags: Sequence[str]) -> list[str]:
    """Coarsest approximation first, then by decreasing total level count."""

    def key(t: str):
        cb, cn, rb, rn = parse_tag(t)
        return (0 if cb == rb == "L" else 1, -(cn + rn), -cn, t)

    return sorted(tags, key=key)


def approximation_tag(layout: PyramidLayout) -> str:
    return f"L{layout.levels}L{layout.levels}"


# -- decompose / reconstruct -------------------------------------------------------

def _rect_slices(rect):
    r0, c0, h, w = rect
    return slice(r0, r0 + h), slice(c0, c0 + w)


def decompose(img, spec: PyramidSpec, layout: PyramidLayout | None = None) -> PyramidCoeffs:
    x = np.asarray(img, dtype=float)
    if x.ndim != 2:
        raise ValueError("decompose expects a 2-D grayscale image")
    layout = plan_layout(x.shape, spec) if layout is None else layout
    ph, pw = layout.padded
    packed = _pad_axis(_pad_axis(x, 0, ph, spec.pad_policy), 1, pw, spec.pad_policy).copy()
    for _, kind, rect in layout.ops:
        sl = _rect_slices(rect)
        block = packed[sl]
        if kind in ("both", "col"):
            block = _split(block, spec.col_bank, 0, spec.pad_policy)
        if kind in ("both", "row"):
            block = _split(block, spec.row_bank, 1, spec.pad_policy)
        packed[sl] = block
    return PyramidCoeffs(layout, packed)


def reconstruct(coeffs: PyramidCoeffs, spec: PyramidSpec) -> np.ndarray:
    layout = coeffs.layout
    if layout.levels != spec.levels or layout.style != spec.style:
        raise ValueError("coefficient layout does not match the pyramid spec")
    expect = plan_layout(layout.shape, spec)
    if expect.bands != layout.bands:
        raise ValueError("coefficient layout does not match the pyramid spec banks")
    packed = np.array(coeffs.packed, dtype=float)
    if packed.shape != tuple(layout.padded):
        raise ValueError("packed coefficient matrix has the wrong shape")
    for _, kind, rect in reversed(layout.ops):
        sl = _rect_slices(rect)
        block = packed[sl]
        if kind in ("both", "row"):
            block = _merge(block, spec.row_bank, 1, spec.pad_policy)
        if kind in ("both", "col"):
            block = _merge(block, spec.col_bank, 0, spec.pad_policy)
        packed[sl] = block
    h, w = layout.shape
    return packed[:h, :w].copy()


def reconstruct_adjoint(img, spec: PyramidSpec, layout: PyramidLayout | None = None) -> PyramidCoeffs:
    """Adjoint of :func:`reconstruct` (periodic padding only).

    ``<reconstruct(c), x> == <c, reconstruct_adjoint(x)>`` in the packed layout.
    """
    if spec.pad_policy != "periodic":
        raise ValueError("the synthesis adjoint is only available with periodic padding")
    x = np.asarray(img, dtype=float)
    layout = plan_layout(x.shape, spec) if layout is None else layout
    packed = np.zeros(layout.padded)
    packed[: x.shape[0], : x.shape[1]] = x
    for _, kind, rect in layout.ops:
        sl = _rect_slices(rect)
        block = packed[sl]
        if kind in ("both", "col"):
            block = _merge_adjoint(block, spec.col_bank, 0)
        if kind in ("both", "row"):
            block = _merge_adjoint(block, spec.row_bank, 1)
        packed[sl] = block
    return PyramidCoeffs(layout, packed)


def flatten(coeffs: PyramidCoeffs) -> np.ndarray:
    return np.concatenate([coeffs.packed[b.slices()].ravel() for b in coeffs.layout.bands])


def unflatten(vec, layout: PyramidLayout) -> PyramidCoeffs:
    vec = np.asarray(vec, dtype=float).ravel()
    if vec.size != layout.size:
        raise ValueError(f"vector length {vec.size} does not match layout size {layout.size}")
    packed = np.empty(layout.padded)
    pos = 0
    for b in layout.bands:
        r0, c0, h, w = b.rect
        packed[r0 : r0 + h, c0 : c0 + w] = vec[pos : pos + b.size].reshape(h, w)
        pos += b.size
    return PyramidCoeffs(layout, packed)


def detail_mask(layout: PyramidLayout) -> np.ndarray:
    """Boolean packed-layout mask, true outside the coarsest approximation band."""
    mask = np.ones(layout.padded, dtype=bool)
    for b in layout.bands:
        if b.tag == approximation_tag(layout):
            mask[b.slices()] = False
    return mask


def tiling_violations(layout: PyramidLayout) -> int:
    """Number of packed cells not covered exactly once by the band rectangles."""
    cover = np.zeros(layout.padded, dtype=int)
    for b in layout.bands:
        cover[b.slices()] += 1
    return int(np.count_nonzero(cover != 1))
