"""``rwls`` command line: learn banks, run transforms, export responses, sweep CS."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .cs import MODES, MeasurementSpec, SolverConfig, run_experiment
from .filterbank import bank_to_json
from .io import (
    BASELINES,
    bank_digest,
    dumps_json,
    load_banks,
    read_coeffs,
    read_image,
    sha256_file,
    write_coeffs,
    write_pgm,
)
from .learn import learn_rwls_1d
from .poly import freq_response
from .transform2d import PyramidSpec, decompose, reconstruct

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


# -- manifests ---------------------------------------------------------------------

def build_manifest(command: str, config: dict, inputs: list[Path], seeds: dict | None = None) -> dict:
    """Replay record.  ``manifest_hash`` covers everything except the timestamp."""
    body = {
        "command": command,
        "config": config,
        "inputs": {p.name: sha256_file(p) for p in inputs},
        "seeds": seeds or {},
        "tool_version": __version__,
    }
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    return {**body, "manifest_hash": digest, "timestamp": datetime.now(timezone.utc).isoformat()}


def write_manifest(out: Path, manifest: dict) -> None:
    Path(str(out) + ".manifest.json").write_text(dumps_json(manifest))


# -- commands ----------------------------------------------------------------------

def _pgm_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}", EXIT_USAGE)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in (".pgm", ".pnm"))


def _read_images(paths: list[Path]) -> list[np.ndarray]:
    out = []
    for p in paths:
        try:
            out.append(read_image(p))
        except (OSError, ValueError) as exc:
            raise CliError(f"unreadable image {p}: {exc}") from exc
    return out


def cmd_learn(args) -> int:
    files = _pgm_files(Path(args.images))
    if not files:
        raise CliError("no training images", EXIT_USAGE)
    images = _read_images(files)
    axes = ("row", "col") if args.axis == "both" else (args.axis,)
    try:
        banks = {ax: learn_rwls_1d(images, ax, mode=args.mode, n_train=args.n_train) for ax in axes}
    except ValueError as exc:
        raise CliError(f"degenerate training signals: {exc}") from exc
    config = {"axis": args.axis, "mode": args.mode, "n_train": args.n_train}
    manifest = build_manifest("learn", config, files)
    if len(axes) == 2:
        obj = {"row": bank_to_json(banks["row"]), "col": bank_to_json(banks["col"])}
    else:
        obj = bank_to_json(banks[axes[0]])
    obj["manifest_hash"] = manifest["manifest_hash"]
    out = Path(args.out)
    out.write_text(dumps_json(obj))
    write_manifest(out, manifest)
    return EXIT_OK


def _bank_inputs(bank_arg: str) -> list[Path]:
    return [] if bank_arg in BASELINES else [Path(bank_arg)]


def _load_banks(bank_arg: str):
    try:
        return load_banks(bank_arg)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_transform(args) -> int:
    row_bank, col_bank = _load_banks(args.bank)
    try:
        spec = PyramidSpec(args.levels, args.style, row_bank, col_bank, args.pad)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    digests = {"row": bank_digest(row_bank), "col": bank_digest(col_bank)}
    src = Path(args.image)
    config = {"bank": Path(args.bank).name, "levels": args.levels, "style": args.style, "pad": args.pad,
              "inverse": args.inverse}
    manifest = build_manifest("transform", config, [src, *_bank_inputs(args.bank)])
    out = Path(args.out)
    if args.inverse:
        try:
            coeffs, header = read_coeffs(src)
        except (OSError, ValueError) as exc:
            raise CliError(f"unreadable coefficient file {src}: {exc}") from exc
        if header.get("bank_digest") != digests or header.get("pad_policy", "periodic") != args.pad:
            raise CliError("coefficient file was produced with a different bank or padding")
        try:
            img = reconstruct(coeffs, spec)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        write_pgm(out, img)
    else:
        images = _read_images([src])
        try:
            coeffs = decompose(images[0], spec)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        extra = {"bank_digest": digests, "pad_policy": args.pad, "manifest_hash": manifest["manifest_hash"]}
        write_coeffs(out, coeffs, extra)
    write_manifest(out, manifest)
    return EXIT_OK


def cmd_freqz(args) -> int:
    row_bank, col_bank = _load_banks(args.bank)
    bank = col_bank if args.axis == "col" else row_bank
    filters = [("G_l", bank.g_l), ("G_h", bank.g_h)]
    if args.synthesis:
        filters += [("F_l", bank.f_l), ("F_h", bank.f_h)]
    w = None
    cols = []
    for _, p in filters:
        w, h = freq_response(p, args.points)
        cols.append(np.abs(h))
    config = {"bank": Path(args.bank).name, "points": args.points, "axis": args.axis, "synthesis": args.synthesis}
    manifest = build_manifest("freqz", config, _bank_inputs(args.bank))
    buf = io.StringIO()
    buf.write(f"# manifest_hash {manifest['manifest_hash']}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["omega", *[name for name, _ in filters]])
    for i in range(args.points):
        wr.writerow([repr(float(w[i]))] + [repr(float(c[i])) for c in cols])
    out = Path(args.out)
    out.write_text(buf.getvalue())
    write_manifest(out, manifest)
    return EXIT_OK


def cmd_cs(args) -> int:
    paths = [Path(p) for p in args.image]
    images = [(p.stem, im) for p, im in zip(paths, _read_images(paths))]
    banks = []
    if args.bank:
        rb, cb = _load_banks(args.bank)
        name = rb.metadata.get("name") or Path(args.bank).stem
        banks.append((name, (rb, cb)))
    for b in args.baselines:
        banks.append((b, load_banks(b)))
    spec = MeasurementSpec(ratio=1.0, block=args.block, seed=args.seed, normalize=not args.raw, mode=args.mode)
    cfg = SolverConfig(max_iters=args.max_iters, tol=args.tol)
    report = run_experiment(images, banks, args.ratios, styles=(args.style,), levels=args.levels, spec=spec, cfg=cfg)
    config = {
        "bank": Path(args.bank).name if args.bank else None,
        "baselines": args.baselines,
        "ratios": args.ratios,
        "block": args.block,
        "style": args.style,
        "levels": args.levels,
        "mode": args.mode,
        "raw": args.raw,
        "max_iters": args.max_iters,
        "tol": args.tol,
    }
    inputs = paths + (_bank_inputs(args.bank) if args.bank else [])
    manifest = build_manifest("cs", config, inputs, seeds={"measurement": args.seed})
    report.seed_record["manifest_hash"] = manifest["manifest_hash"]
    out = Path(args.out)
    out.write_text(report.to_csv())
    write_manifest(out, manifest)
    failed = [r for r in report.rows if r.flags.startswith("error")]
    for r in failed:
        print(f"rwls cs: cell {r.image}/{r.bank}/{r.ratio:g} failed: {r.flags}", file=sys.stderr)
    return EXIT_RUNTIME if len(failed) == len(report.rows) else EXIT_OK


# -- argument parsing ---------------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _ratio_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from exc
    if not vals or any(not 0.0 < v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("ratios must lie in (0, 1]")
    return vals


def _baseline_list(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in BASELINES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown baseline(s) {bad}; choose from {sorted(BASELINES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rwls", description="Rational wavelets learned by lifting.")
    ap.add_argument("--version", action="version", version=f"rwls {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn row/column banks from a directory of PGM images")
    p.add_argument("--images", required=True, help="directory of training PGM files")
    p.add_argument("--axis", choices=("row", "col", "both"), default="both")
    p.add_argument("--mode", choices=("fbm", "empirical"), default="fbm")
    p.add_argument("--n-train", type=_positive_int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("transform", help="forward or inverse 2-D pyramid")
    p.add_argument("--image", required=True, help="PGM (forward) or coefficient file (--inverse)")
    p.add_argument("--bank", required=True, help="bank JSON file or one of: " + ", ".join(BASELINES))
    p.add_argument("--levels", type=_positive_int, default=3)
    p.add_argument("--style", choices=("R", "L"), default="L")
    p.add_argument("--pad", choices=("periodic", "symmetric"), default="periodic")
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("freqz", help="magnitude responses as CSV")
    p.add_argument("--bank", required=True)
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--axis", choices=("row", "col"), default="col", help="which bank of a row/col file")
    p.add_argument("--synthesis", action="store_true", help="also export F_l and F_h")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_freqz)

    p = sub.add_parser("cs", help="block compressed-sensing sweep")
    p.add_argument("--image", required=True, nargs="+")
    p.add_argument("--bank", help="learned bank JSON file")
    p.add_argument("--baselines", type=_baseline_list, default=["53", "97"])
    p.add_argument("--ratios", type=_ratio_list, default=[0.3, 0.5, 0.7, 0.9])
    p.add_argument("--block", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--style", choices=("R", "L"), default="L")
    p.add_argument("--levels", type=_positive_int, default=3)
    p.add_argument("--mode", choices=MODES, default="per-block")
    p.add_argument("--raw", action="store_true", help="unnormalized ±1 measurement entries")
    p.add_argument("--max-iters", type=_positive_int, default=SolverConfig.max_iters)
    p.add_argument("--tol", type=float, default=SolverConfig.tol)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cs)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "freqz" and args.points < 2:
        parser.print_usage(sys.stderr)
        print("rwls freqz: --points must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "cs" and not args.bank and not args.baselines:
        print("rwls cs: give --bank and/or --baselines", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "cs" and not args.tol > 0:
        print("rwls cs: --tol must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"rwls {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
