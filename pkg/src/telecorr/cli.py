"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data-quality error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import correlation as corr
from . import distributions as dist
from . import quantities as qty
from .anonymize import KEY_ENV_VAR, AnonymizationKey, anonymize
from .errors import AddressParseError, DataQualityError, UsageError
from .hypersparse import TrafficMatrix
from .pipeline import (
    DEFAULT_N_VALID,
    DEFAULT_SUB_BLOCK,
    InternalPrefixes,
    WindowSpec,
    format_packet_log,
    index_to_ip,
    ip_to_index,
    parse_packet_log,
    window_and_build,
)
from .synth import SynthConfig, synth_two_site

log = logging.getLogger("telecorr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3

INGEST_REPORT = "ingest.json"

DEGREE_QUANTITIES = {
    "source_packets": qty.source_packets,
    "source_fanout": qty.source_fanout,
    "destination_packets": qty.destination_packets,
    "destination_fanin": qty.destination_fanin,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(text: str, out_dir: str | None, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
    else:
        _write(Path(out_dir) / name, text)


def _load_key(path: str | None) -> AnonymizationKey | None:
    path = path or os.environ.get(KEY_ENV_VAR)
    if not path:
        return None
    return AnonymizationKey.from_file(path)


def _load_matrix(path: str) -> TrafficMatrix:
    try:
        return TrafficMatrix.load(path)
    except ValueError as exc:
        raise DataQualityError(f"{path}: {exc}") from None


# -- subcommands --------------------------------------------------------------

def cmd_ingest(args) -> int:
    spec = WindowSpec(args.n_valid, args.sub_block)
    key = _load_key(args.key_file)
    internal = InternalPrefixes(args.internal_cidrs.split(",")) if args.internal_cidrs else None
    parsed = parse_packet_log(args.packets)
    built = window_and_build(parsed.records, spec, internal, key)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    windows = []
    for k, (m, info) in enumerate(zip(built.matrices, built.windows)):
        name = f"window_{k:05d}.hstm"
        m.save(out / name)
        windows.append(
            {
                "file": name,
                "first_timestamp": info.first_timestamp,
                "last_timestamp": info.last_timestamp,
                "total_packets": m.total_packets,
                "nnz": m.nnz,
            }
        )
    report = {
        "source": os.path.basename(str(args.packets)),
        "lines": parsed.n_lines,
        "malformed": parsed.n_malformed,
        "malformed_lines": [n for n, _ in parsed.errors],
        "valid_packets": built.n_valid_packets,
        "discarded_packets": built.n_discarded,
        "remainder": built.remainder,
        "n_valid": spec.n_valid,
        "sub_block": spec.sub_block,
        "internal_cidrs": list(internal.cidrs) if internal else None,
        "anonymization": key.scheme_id if key else None,
        "windows": windows,
    }
    _write(out / INGEST_REPORT, _dump(report))
    log.info("ingested %d valid packets into %d window(s)", built.n_valid_packets, len(windows))
    return EXIT_OK


def cmd_quantities(args) -> int:
    m = _load_matrix(args.matrix)
    _emit(_dump(qty.aggregate(m).to_dict()), args.out_dir, Path(args.matrix).stem + ".quantities.json")
    return EXIT_OK


def cmd_distribution(args) -> int:
    m = _load_matrix(args.matrix)
    degrees = DEGREE_QUANTITIES[args.quantity](m)
    binned = dist.bin_degrees(degrees)
    try:
        fit = dist.fit_zipf_mandelbrot(binned)
        result = dist.fit_to_dict(fit, binned)
    except UsageError as exc:
        log.warning("no Zipf-Mandelbrot fit: %s", exc)
        views = dist.probability_views(binned)
        result = {
            "alpha": None,
            "delta": None,
            "residual": None,
            "support_max": binned.d_max,
            "bins": [
                {"i": i, "count": c, "p": float(p), "P": float(P), "D": float(D)}
                for i, c, p, P, D in zip(binned.bin_lower_exponents, binned.counts, *views)
            ],
        }
    result["quantity"] = args.quantity
    stem = Path(args.matrix).stem + f".{args.quantity}"
    _emit(_dump(result), args.out_dir, stem + ".distribution.json")
    if args.out_dir is not None:
        _write(Path(args.out_dir) / (stem + ".distribution.csv"), dist.plot_csv(binned))
    return EXIT_OK


def _reference_time(args) -> float:
    if args.t0 is not None:
        try:
            return corr.month_coordinate(int(args.t0))
        except ValueError:
            return corr.month_coordinate(args.t0)
    report = Path(args.telescope).parent / INGEST_REPORT
    if not report.exists():
        raise UsageError("--t0 not given and no ingest report next to the telescope matrix")
    data = json.loads(report.read_text(encoding="utf-8"))
    name = Path(args.telescope).name
    for w in data["windows"]:
        if w["file"] == name:
            return corr.month_coordinate((w["first_timestamp"] + w["last_timestamp"]) // 2)
    raise UsageError(f"{name} is not listed in {report}")


def _read_outposts(directory: str, key: AnonymizationKey | None) -> list[tuple[str, set[int]]]:
    files = sorted(Path(directory).glob("*.txt"))
    if not files:
        raise UsageError(f"no YYYY-MM.txt outpost files in {directory}")
    out = []
    for path in files:
        label = path.stem
        corr.month_center_timestamp(label)  # validates the name
        ids = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                ids.append(ip_to_index(line) if "." in line else int(line))
            except (AddressParseError, ValueError):
                raise DataQualityError(f"{path}:{lineno}: bad source identifier {line!r}") from None
        arr = np.array(ids, dtype=np.uint32)
        if key is not None and len(arr):
            arr = anonymize(arr, key)
        out.append((label, set(arr.tolist())))
    return out


def cmd_correlate(args) -> int:
    m = _load_matrix(args.telescope)
    key = _load_key(args.key_file)
    t0 = _reference_time(args)
    label = corr.month_label(t0)
    telescope = corr.SourceSet.from_matrix(m, label)
    outposts = _read_outposts(args.outpost_dir, key)
    # The telescope's own label only fixes the month; carry the exact t0.
    series = [(corr.month_coordinate(lab), ids) for lab, ids in outposts]

    same_month = [ids for lab, ids in outposts if lab == label]
    overlap = []
    if same_month:
        overlap = [o._asdict() for o in corr.overlap_by_brightness(telescope, same_month[0])]

    curves = []
    exps = np.unique(dist.bin_exponents(qty.source_packets(m).values)).tolist()
    for e in exps:
        eligible = telescope.in_bin(e)
        if len(eligible) < args.min_eligible:
            continue
        curve = corr.temporal_curve(telescope, e, series)
        curve = corr.CorrelationCurve(t0, curve.brightness_exponent, curve.points)
        fits = {}
        for name, fn in (("modified_cauchy", corr.fit_modified_cauchy), ("cauchy", corr.fit_cauchy), ("gaussian", corr.fit_gaussian)):
            try:
                fits[name] = fn(curve)
            except UsageError:
                fits[name] = None
        curves.append(corr.curve_to_dict(curve, fits))

    result = {
        "t0": t0,
        "telescope": Path(args.telescope).name,
        "valid_packets": m.total_packets,
        "same_month_label": label,
        "overlap": overlap,
        "curves": curves,
    }
    _emit(_dump(result), args.out_dir, "correlate.json")
    return EXIT_OK


def cmd_synth(args) -> int:
    values = {}
    if args.config:
        values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for f in fields(SynthConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    values["emit_packets"] = True
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown synth config keys: {sorted(unknown)}")
    data = synth_two_site(SynthConfig(**values))

    out = Path(args.out_dir)
    _write(out / "packets.csv", format_packet_log(data.packets))
    for label, (_, ids) in zip(data.outpost_labels, data.outposts):
        lines = "".join(index_to_ip(i) + "\n" for i in sorted(ids))
        _write(out / "outpost" / f"{label}.txt", lines)
    _write(out / "ground_truth.json", data.ground_truth_json() + "\n")
    return EXIT_OK


def _fit_from_dict(cls, d):
    if d is None:
        return None
    return cls(**{f.name: d[f.name] for f in fields(cls)})


def _curve_csv(c: dict) -> str:
    curve = corr.CorrelationCurve(
        c["t0"], c["brightness_exponent"], tuple(corr.CurvePoint(**p) for p in c["points"])
    )
    fits = {
        "modified_cauchy": _fit_from_dict(corr.ModifiedCauchyFit, c["fits"].get("modified_cauchy")),
        "cauchy": _fit_from_dict(corr.CauchyFit, c["fits"].get("cauchy")),
        "gaussian": _fit_from_dict(corr.GaussianFit, c["fits"].get("gaussian")),
    }
    return corr.plot_csv(curve, fits)


def cmd_plotdata(args) -> int:
    data = json.loads(Path(args.result).read_text(encoding="utf-8"))
    stem = Path(args.result).stem
    if isinstance(data, dict) and "bins" in data:
        rows = ["d,D\n"] + [f"{1 << b['i']},{b['D']!r}\n" for b in data["bins"]]
        _emit("".join(rows), args.out_dir, stem + ".csv")
    elif isinstance(data, dict) and "curves" in data:
        if args.out_dir is None:
            raise UsageError("correlate results hold several curves; pass --out-dir")
        for c in data["curves"]:
            _emit(_curve_csv(c), args.out_dir, f"{stem}.curve_{c['brightness_exponent']:02d}.csv")
    elif isinstance(data, dict) and "points" in data:
        _emit(_curve_csv(data), args.out_dir, stem + ".csv")
    else:
        raise UsageError(f"{args.result} holds no plottable result")
    return EXIT_OK


# -- wiring -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="telecorr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="packet CSV -> windowed matrix files")
    s.add_argument("packets")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-valid", type=int, default=DEFAULT_N_VALID)
    s.add_argument("--sub-block", type=int, default=DEFAULT_SUB_BLOCK)
    s.add_argument("--key-file", help=f"anonymization key (default: ${KEY_ENV_VAR})")
    s.add_argument("--internal-cidrs", help="comma-separated internal prefixes, e.g. 44.0.0.0/8")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("quantities", help="matrix -> network quantities JSON")
    s.add_argument("matrix")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_quantities)

    s = sub.add_parser("distribution", help="matrix -> binned distribution + Zipf-Mandelbrot fit")
    s.add_argument("matrix")
    s.add_argument("--quantity", choices=sorted(DEGREE_QUANTITIES), default="source_packets")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_distribution)

    s = sub.add_parser("correlate", help="telescope matrix + outpost months -> curves and fits")
    s.add_argument("--telescope", required=True)
    s.add_argument("--outpost-dir", required=True)
    s.add_argument("--t0", help="capture time (ISO date/time or microsecond timestamp)")
    s.add_argument("--key-file", help=f"anonymize outpost ids with this key (default: ${KEY_ENV_VAR})")
    s.add_argument("--min-eligible", type=int, default=1)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("synth", help="synthetic telescope + outpost dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--config", help="JSON file of generator settings")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-sources", type=int)
    s.add_argument("--zm-alpha", type=float)
    s.add_argument("--zm-delta", type=float)
    s.add_argument("--support-max", type=int)
    s.add_argument("--n-valid", type=int)
    s.add_argument("--months", type=int)
    s.add_argument("--drift-alpha", type=float)
    s.add_argument("--drift-beta", type=float)
    s.add_argument("--share-law", choices=["brightness", "constant"])
    s.add_argument("--background-sources", type=int)
    s.add_argument("--start-month")
    s.add_argument("--internal-cidr")
    s.add_argument("--invalid-fraction", type=float)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("plotdata", help="result JSON -> CSV for plotting")
    s.add_argument("result")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except (DataQualityError, OverflowError) as exc:
        print(f"telecorr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UsageError as exc:
        print(f"telecorr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"telecorr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
