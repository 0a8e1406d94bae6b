"""Block compressed sensing with a wavelet pyramid as the sparsifying transform.

Each ``block x block`` tile is measured by its own ±1 Bernoulli matrix.
Recovery is accelerated iterative shrinkage over the whole image: a gradient
step on the block data term, then soft thresholding of the pyramid detail
coefficients, with the threshold shrunk geometrically between outer cycles.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .transform2d import PyramidCoeffs, PyramidSpec, detail_mask, plan_layout, reconstruct, reconstruct_adjoint

MODES = ("per-block", "shared")
REPORT_COLUMNS = ("image", "bank", "style", "ratio", "psnr_db", "iters", "residual", "flags")


@dataclass(frozen=True)
class MeasurementSpec:
    """Block measurement settings.

    ``mode="per-block"`` draws a fresh matrix for every block index;
    ``"shared"`` reuses the block-0 matrix everywhere.  Matrices for one
    seed are nested: a lower ratio keeps the leading rows of a higher one.
    """

    ratio: float
    block: int = 32
    seed: int = 0
    normalize: bool = True
    mode: str = "per-block"

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"sampling ratio must lie in (0, 1], got {self.ratio}")
        if self.block < 1:
            raise ValueError("block size must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def n(self) -> int:
        return self.block * self.block

    @property
    def m(self) -> int:
        return max(1, int(round(self.ratio * self.n)))


@dataclass(frozen=True)
class SolverConfig:
    """Recovery settings.

    ``lam`` is the starting sparsity weight (``None`` means 0.1 times the
    largest weighted correlation of the data with the dictionary).  It
    decays by ``continuation`` every ``inner_iters`` iterations down to
    ``lam * lam_floor`` and stays there until the relative coefficient
    change drops below ``tol``.  ``whiten`` replaces each block matrix by
    an orthonormal-row factor (same null space); ``band_weights`` scales each
    coefficient's penalty by its band's synthesis atom norm, and
    ``approx_weight`` is the relative penalty on the coarsest band.
    """

    max_iters: int = 1000
    tol: float = 1e-4
    lam: float | None = None
    continuation: float = 0.7
    inner_iters: int = 8
    lam_floor: float = 0.1
    accelerate: bool = True
    whiten: bool = True
    band_weights: bool = True
    approx_weight: float = 0.0
    final_projection: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0.0 < self.continuation <= 1.0:
            raise ValueError("continuation must lie in (0, 1]")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")


@dataclass
class Measurements:
    y: np.ndarray  # (blocks, m)
    spec: MeasurementSpec
    shape: tuple[int, int]  # original image
    padded: tuple[int, int]  # after edge replication to the block grid

    @property
    def seed_record(self) -> dict:
        s = self.spec
        return {
            "seed": s.seed,
            "block": s.block,
            "ratio": s.ratio,
            "m": s.m,
            "mode": s.mode,
            "normalize": s.normalize,
            "shape": list(self.shape),
            "padded": list(self.padded),
            "generator": "numpy.default_rng([seed, block_index]), first m rows of an n x n +-1 draw",
        }


@dataclass
class CsResult:
    image: np.ndarray
    iters: int
    residual: float  # ||y - Phi x|| / ||y||
    converged: bool
    objective: list[float] = field(default_factory=list, repr=False)


# -- measurement operators ------------------------------------------------------

@lru_cache(maxsize=64)
def _bernoulli(seed: int, index: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    mat = rng.integers(0, 2, size=(n, n), dtype=np.int8) * 2 - 1
    mat.setflags(write=False)
    return mat


def block_matrix(spec: MeasurementSpec, index: int) -> np.ndarray:
    """Measurement matrix of one block, shape ``(m, block**2)``."""
    idx = 0 if spec.mode == "shared" else index
    phi = _bernoulli(spec.seed, idx, spec.n)[: spec.m].astype(float)
    if spec.normalize:
        phi /= math.sqrt(spec.m)
    return phi


def _grid(shape: tuple[int, int], block: int) -> tuple[int, int]:
    return -(-shape[0] // block), -(-shape[1] // block)


def _to_blocks(x: np.ndarray, block: int) -> np.ndarray:
    gh, gw = x.shape[0] // block, x.shape[1] // block
    return x.reshape(gh, block, gw, block).transpose(0, 2, 1, 3).reshape(gh * gw, block * block)


def _from_blocks(b: np.ndarray, grid: tuple[int, int], block: int) -> np.ndarray:
    gh, gw = grid
    return b.reshape(gh, gw, block, block).transpose(0, 2, 1, 3).reshape(gh * block, gw * block)


class _Operator:
    """Stacked per-block matrices plus whitened (orthonormal-row) versions."""

    def __init__(self, spec: MeasurementSpec, padded: tuple[int, int]):
        self.spec = spec
        self.grid = _grid(padded, spec.block)
        nb = self.grid[0] * self.grid[1]
        self.phi = np.stack([block_matrix(spec, i) for i in range(nb)])
        self._qr = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        xb = _to_blocks(x, self.spec.block)
        return np.stack([p @ v for p, v in zip(self.phi, xb)])

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return _from_blocks(np.stack([v @ p for p, v in zip(self.phi, y)]), self.grid, self.spec.block)

    @property
    def qr(self) -> tuple[np.ndarray, np.ndarray]:
        """``Phi_b = R_b' Q_b'`` with ``Q_b`` of shape ``(n, m)`` and orthonormal columns."""
        if self._qr is None:
            q, r = np.linalg.qr(np.swapaxes(self.phi, 1, 2))
            if np.any(np.abs(np.diagonal(r, axis1=1, axis2=2)) < 1e-10 * math.sqrt(self.spec.n)):
                raise ValueError("measurement matrix is rank deficient")
            self._qr = (q, r)
        return self._qr

    def whiten(self, y: np.ndarray) -> np.ndarray:
        _, r = self.qr
        # solve R' u = y per block
        return np.linalg.solve(np.swapaxes(r, 1, 2), y[..., None])[..., 0]

    def forward_w(self, x: np.ndarray) -> np.ndarray:
        q, _ = self.qr
        xb = _to_blocks(x, self.spec.block)
        return np.stack([v @ qb for qb, v in zip(q, xb)])

    def adjoint_w(self, u: np.ndarray) -> np.ndarray:
        q, _ = self.qr
        return _from_blocks(np.stack([qb @ v for qb, v in zip(q, u)]), self.grid, self.spec.block)


@lru_cache(maxsize=32)
def _operator(spec: MeasurementSpec, padded: tuple[int, int]) -> _Operator:
    return _Operator(spec, padded)


def _pad_to_grid(img: np.ndarray, block: int) -> np.ndarray:
    gh, gw = _grid(img.shape, block)
    ph, pw = gh * block - img.shape[0], gw * block - img.shape[1]
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, ph), (0, pw)), mode="edge")


def measure(img, spec: MeasurementSpec) -> Measurements:
    x = np.asarray(img, dtype=float)
    if x.ndim != 2:
        raise ValueError("measure expects a 2-D grayscale image")
    xp = _pad_to_grid(x, spec.block)
    op = _operator(spec, xp.shape)
    return Measurements(op.forward(xp), spec, tuple(x.shape), tuple(xp.shape))


# -- recovery ----------------------------------------------------------------------

def band_weight_map(pyramid: PyramidSpec, shape: tuple[int, int], probes: int = 4) -> np.ndarray:
    """Per-coefficient weights equal to each band's RMS synthesis atom norm.

    Estimated by synthesizing random ±1 coefficients confined to one band:
    the expected output energy is the sum of that band's squared atom norms.
    """
    layout = plan_layout(shape, pyramid)
    rng = np.random.default_rng(12345)
    weights = np.ones(layout.padded)
    probe = PyramidCoeffs(layout, np.zeros(layout.padded))
    for b in layout.bands:
        energy = 0.0
        for _ in range(probes):
            probe.packed[:] = 0.0
            probe.packed[b.slices()] = rng.choice((-1.0, 1.0), size=(b.rect[2], b.rect[3]))
            energy += float(np.sum(reconstruct(probe, pyramid) ** 2))
        weights[b.slices()] = math.sqrt(energy / (probes * b.size))
    return weights


@lru_cache(maxsize=32)
def _cached_weights(pyramid: PyramidSpec, shape: tuple[int, int]) -> np.ndarray:
    w = band_weight_map(pyramid, shape)
    w.setflags(write=False)
    return w


class _Dictionary:
    """Pyramid synthesis ``S`` and its adjoint on packed coefficient arrays."""

    def __init__(self, pyramid: PyramidSpec, shape: tuple[int, int], weighted: bool, approx_weight: float = 0.0):
        self.pyramid = pyramid
        self.layout = plan_layout(shape, pyramid)
        detail = detail_mask(self.layout)
        w = _cached_weights(pyramid, shape) if weighted else np.ones(self.layout.padded)
        self.weights = np.where(detail, w, approx_weight * w)

    def synth(self, c: np.ndarray) -> np.ndarray:
        return reconstruct(PyramidCoeffs(self.layout, c), self.pyramid)

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        return reconstruct_adjoint(x, self.pyramid, self.layout).packed

    def penalty(self, c: np.ndarray) -> float:
        return float(np.sum(self.weights * np.abs(c)))

    def shrink(self, c: np.ndarray, thr: float) -> np.ndarray:
        t = thr * self.weights
        return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


_LIPSCHITZ: dict = {}


def _lipschitz(key, apply_normal, shape) -> float:
    """Largest eigenvalue of ``A'A`` by 20 power iterations, padded by 5%."""
    if key not in _LIPSCHITZ:
        v = np.random.default_rng(0).standard_normal(shape)
        lam = 1.0
        for _ in range(20):
            w = apply_normal(v)
            lam = float(np.linalg.norm(w))
            v = w / lam
        _LIPSCHITZ[key] = 1.05 * lam
    return _LIPSCHITZ[key]


def reconstruct_cs(meas: Measurements, pyramid: PyramidSpec, cfg: SolverConfig = SolverConfig()) -> CsResult:
    """Recover an image from block measurements.

    Solves ``min_c 0.5 ||d - A S c||^2 + lam ||w c_detail||_1`` over pyramid
    coefficients ``c`` with monotone FISTA, where ``S`` is the pyramid
    synthesis and ``A`` the (optionally whitened) block operator.  The
    reported image is ``S c`` projected onto the measurement constraints and
    clipped to ``[0, 255]``.  ``converged`` is false when ``max_iters`` ran
    out first.
    """
    spec = meas.spec
    op = _operator(spec, meas.padded)
    if cfg.whiten:
        data, fwd, adj = op.whiten(meas.y), op.forward_w, op.adjoint_w
    else:
        data, fwd, adj = meas.y, op.forward, op.adjoint
    dic = _Dictionary(pyramid, meas.padded, cfg.band_weights, cfg.approx_weight)

    def A(c):
        return fwd(dic.synth(c))

    def At(u):
        return dic.adjoint(adj(u))

    L = _lipschitz((spec, meas.padded, pyramid, cfg.whiten), lambda c: At(A(c)), dic.layout.padded)
    c = np.zeros(dic.layout.padded)
    Ac = np.zeros_like(data)
    if cfg.lam is not None:
        lam0 = cfg.lam
    else:
        corr = np.abs(At(data))
        lam0 = 0.1 * float(np.max(np.where(dic.weights > 0, corr / np.where(dic.weights > 0, dic.weights, 1.0), 0.0)))
    lam_min = lam0 * cfg.lam_floor
    lam = lam0

    def objective(Acv, cv):
        r = Acv - data
        return 0.5 * float(np.sum(r * r)) + lam * dic.penalty(cv)

    obj = objective(Ac, c)
    history = [obj]
    z, Az, t = c, Ac, 1.0
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        cand = dic.shrink(z - At(Az - data) / L, lam / L)
        Acand = A(cand)
        cand_obj = objective(Acand, cand)
        # monotone safeguard: keep the previous iterate if the step went uphill
        if cand_obj <= obj:
            new, Anew, new_obj = cand, Acand, cand_obj
        else:
            new, Anew, new_obj = c, Ac, obj
        if cfg.accelerate:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            a, b = t / t_new, (t - 1.0) / t_new
            z = new + a * (cand - new) + b * (new - c)
            Az = Anew + a * (Acand - Anew) + b * (Anew - Ac)
            t = t_new
        else:
            z, Az = new, Anew
        change = float(np.linalg.norm(cand - c)) / max(float(np.linalg.norm(c)), 1e-30)
        c, Ac, obj = new, Anew, new_obj
        if it % cfg.inner_iters == 0 and lam > lam_min:
            lam = max(lam * cfg.continuation, lam_min)
            obj = objective(Ac, c)
            z, Az, t = c, Ac, 1.0
        history.append(obj)
        if lam <= lam_min and change < cfg.tol:
            converged = True
            break
    x = dic.synth(c)
    if cfg.final_projection:
        x = x + op.adjoint_w(op.whiten(meas.y) - op.forward_w(x))
    h, w = meas.shape
    out = np.clip(x, 0.0, 255.0)[:h, :w]
    xp = _pad_to_grid(out, spec.block)
    ynorm = float(np.linalg.norm(meas.y))
    res = float(np.linalg.norm(meas.y - op.forward(xp))) / ynorm if ynorm > 0 else 0.0
    return CsResult(out, it, res, converged, history)


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


# -- experiments ---------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    image: str
    bank: str
    style: str
    ratio: float
    psnr_db: float
    iters: int
    residual: float
    flags: str = ""


@dataclass
class CsReport:
    rows: list[ReportRow]
    seed_record: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# seed_record " + json.dumps(self.seed_record, sort_keys=True) + "\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(REPORT_COLUMNS)
        for r in self.rows:
            psnr_txt = "inf" if math.isinf(r.psnr_db) else ("nan" if math.isnan(r.psnr_db) else f"{r.psnr_db:.6f}")
            wr.writerow([r.image, r.bank, r.style, f"{r.ratio:g}", psnr_txt, r.iters, f"{r.residual:.6e}", r.flags])
        return buf.getvalue()

    def psnr_table(self) -> dict[tuple[str, str, str], dict[float, float]]:
        out: dict = {}
        for r in self.rows:
            out.setdefault((r.image, r.bank, r.style), {})[r.ratio] = r.psnr_db
        return out


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("RWLS_THREADS", "1")))
    except ValueError:
        return 1


def _run_cell(img, name, bank_id, pyramid, spec, cfg) -> ReportRow:
    try:
        res = reconstruct_cs(measure(img, spec), pyramid, cfg)
        flags = "" if res.converged else "maxiter"
        return ReportRow(name, bank_id, pyramid.style, spec.ratio, psnr(img, res.image), res.iters, res.residual, flags)
    except Exception as exc:  # recorded per cell, the sweep continues
        msg = f"error:{type(exc).__name__}:{exc}".replace(",", ";").replace("\n", " ")
        return ReportRow(name, bank_id, pyramid.style, spec.ratio, math.nan, 0, math.nan, msg)


def run_experiment(
    images: dict[str, np.ndarray] | Sequence[tuple[str, np.ndarray]],
    banks: dict[str, tuple] | Sequence[tuple[str, tuple]],
    ratios: Sequence[float],
    styles: Sequence[str] = ("L",),
    levels: int = 3,
    spec: MeasurementSpec = MeasurementSpec(ratio=1.0),
    cfg: SolverConfig = SolverConfig(),
    threads: int | None = None,
    pad_policy: str = "periodic",
) -> CsReport:
    """Full factorial sweep over images, banks, styles and ratios.

    ``banks`` maps an id to ``(row_bank, col_bank)``.  Rows come back
    sorted by image, bank, style and ratio.
    """
    images = list(images.items()) if isinstance(images, dict) else list(images)
    banks = list(banks.items()) if isinstance(banks, dict) else list(banks)
    if not images or not banks or not ratios or not styles:
        raise ValueError("run_experiment needs at least one image, bank, ratio and style")
    cells = []
    for name, img in images:
        for bank_id, (row_bank, col_bank) in banks:
            for style in styles:
                pyr = PyramidSpec(levels, style, row_bank, col_bank, pad_policy)
                for ratio in ratios:
                    cells.append((np.asarray(img, dtype=float), name, bank_id, pyr, replace(spec, ratio=float(ratio)), cfg))
    threads = default_threads() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: _run_cell(*c), cells))
    else:
        rows = [_run_cell(*c) for c in cells]
    rows.sort(key=lambda r: (r.image, r.bank, r.style, r.ratio))
    record = {
        "seed": spec.seed,
        "block": spec.block,
        "mode": spec.mode,
        "normalize": spec.normalize,
        "levels": levels,
        "pad_policy": pad_policy,
        "solver": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
    }
    return CsReport(rows, record)
