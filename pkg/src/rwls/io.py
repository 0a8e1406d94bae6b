"""File formats: binary PGM images, filterbank JSON, packed coefficient files."""

from __future__ import annotations

import hashlib
import json
import re
import struct
from pathlib import Path

import numpy as np

from .filterbank import Bank, bank_from_json, bank_to_json, cdf53, cdf97, lazy_rational
from .transform2d import PyramidCoeffs, PyramidLayout

COEFF_MAGIC = b"RWLSCOEF"
COEFF_VERSION = 1


# -- PGM --------------------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM as a float array."""
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    while len(fields) < 4:
        m = _PNM_TOKEN.match(data, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic == b"P5":
        pos += 1  # single whitespace byte before raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        n = w * h * dtype.itemsize
        raster = data[pos : pos + n]
        if len(raster) != n:
            raise ValueError(f"{path}: truncated PGM raster")
        img = np.frombuffer(raster, dtype=dtype).reshape(h, w)
    elif magic == b"P2":
        vals = data[pos:].split()
        if len(vals) < w * h:
            raise ValueError(f"{path}: truncated PGM raster")
        img = np.array([int(v) for v in vals[: w * h]]).reshape(h, w)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    return img.astype(float)


def write_pgm(path, img, maxval: int = 255) -> None:
    a = np.clip(np.rint(np.asarray(img, dtype=float)), 0, maxval)
    h, w = a.shape
    raster = a.astype(">u2" if maxval > 255 else "u1").tobytes()
    Path(path).write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + raster)


def read_image(path) -> np.ndarray:
    """Grayscale image from a PGM file (the only supported input format)."""
    return read_pgm(path)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- banks ------------------------------------------------------------------------

BASELINES = {"53": cdf53, "97": cdf97, "lazy": lazy_rational}


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_bank(path, bank: Bank) -> None:
    Path(path).write_text(dumps_json(bank_to_json(bank)))


def load_banks(path_or_name: str) -> tuple[Bank, Bank]:
    """``(row_bank, col_bank)`` from a bank file or a baseline name (53, 97, lazy).

    A file may hold one bank (used on both axes) or ``{"row": ..., "col": ...}``.
    """
    if path_or_name in BASELINES:
        b = BASELINES[path_or_name]()
        return b, b
    try:
        obj = json.loads(Path(path_or_name).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read bank file {path_or_name}: {exc}") from exc
    if "row" in obj and "col" in obj:
        return bank_from_json(obj["row"]), bank_from_json(obj["col"])
    b = bank_from_json(obj)
    return b, b


def bank_digest(bank: Bank) -> str:
    obj = bank_to_json(bank)
    obj.pop("metadata", None)
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


# -- coefficient files ---------------------------------------------------------------

def write_coeffs(path, coeffs: PyramidCoeffs, extra: dict | None = None) -> None:
    """Magic, version, header length, JSON header, then float64 LE payload in band order."""
    from .transform2d import flatten

    layout = coeffs.layout
    header = {
        "width": layout.shape[1],
        "height": layout.shape[0],
        "levels": layout.levels,
        "style": layout.style,
        "layout": layout.to_json(),
        **(extra or {}),
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = flatten(coeffs).astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(COEFF_MAGIC + struct.pack("<BI", COEFF_VERSION, len(hbytes)))
        f.write(hbytes)
        f.write(payload)


def read_coeffs(path) -> tuple[PyramidCoeffs, dict]:
    from .transform2d import unflatten

    data = Path(path).read_bytes()
    if not data.startswith(COEFF_MAGIC):
        raise ValueError(f"{path}: not a coefficient file")
    off = len(COEFF_MAGIC)
    version, hlen = struct.unpack_from("<BI", data, off)
    if version != COEFF_VERSION:
        raise ValueError(f"{path}: unsupported coefficient file version {version}")
    off += struct.calcsize("<BI")
    header = json.loads(data[off : off + hlen])
    layout = PyramidLayout.from_json(header["layout"])
    payload = np.frombuffer(data[off + hlen :], dtype="<f8")
    if payload.size != layout.size:
        raise ValueError(f"{path}: payload has {payload.size} values, layout needs {layout.size}")
    return unflatten(payload, layout), header
