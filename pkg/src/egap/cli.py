"""Command-line front end: ``egap synth|gap|encode|decode|bench``."""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

from egap import __version__
from egap.adapt import METHODS, AdaptationConfig
from egap.entropy import (
    DEFAULT_NUM_SCALES,
    DEFAULT_SIGMA_MAX,
    DEFAULT_SIGMA_MIN,
    ScaleTable,
    load_tables,
    save_tables,
)
from egap.errors import EgapError
from egap.gap import report_from_percentages
from egap.latents import Dist, LatentTensor, latents_to_bytes, load_latents, save_latents
from egap.pipeline import (
    DEFAULT_PRECISION,
    Instance,
    analyze,
    baseline_configs,
    default_configs,
    encode_instance,
    report,
    synth_instance,
    unpack_and_decode,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

_FAMILY_ALIASES = {"gauss": "gaussian", "gaussian": "gaussian", "laplace": "laplacian", "laplacian": "laplacian"}


# -- argument types ------------------------------------------------------------


def parse_dist(text):
    """``gauss:S[@M]``, ``laplace:B[@M]`` or ``mix:W,S1,M1,S2,M2``."""
    try:
        family, _, rest = text.partition(":")
        family = family.strip().lower()
        if family in ("mix", "mixture"):
            w, s1, m1, s2, m2 = (float(v) for v in rest.split(","))
            return Dist("mixture", s1, m1, w, s2, m2)
        if family not in _FAMILY_ALIASES:
            raise ValueError(f"unknown family {family!r}")
        scale, _, loc = rest.partition("@")
        return Dist(_FAMILY_ALIASES[family], float(scale), float(loc) if loc else 0.0)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"bad distribution {text!r}: {exc}") from None


def parse_shape(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        dims = ()
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"shape must look like HxWxC with positive ints, got {text!r}")
    return dims


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        v = math.nan
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        v = -1
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return v


def _list_of(conv):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [conv(str(v)) for v in text]
        return [conv(v.strip()) for v in str(text).split(",") if v.strip()]

    return parse


def _method(text):
    if text not in METHODS:
        raise argparse.ArgumentTypeError(f"method must be one of {', '.join(METHODS)}")
    return text


def parse_rows(text):
    """``name:ratio:gap[:gain]`` entries separated by commas."""
    rows = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) not in (3, 4):
            raise argparse.ArgumentTypeError(f"row must be name:ratio:gap[:gain], got {item!r}")
        try:
            nums = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        rows.append((parts[0], nums[0], nums[1], nums[2] if len(nums) == 3 else None))
    return rows


# -- subcommands ---------------------------------------------------------------


def _scale_table(args):
    return ScaleTable.log_spaced(args.num_scales, args.sigma_min, args.sigma_max)


def cmd_synth(args, out):
    si = synth_instance(
        args.seed,
        args.shape,
        args.true,
        args.learned,
        mode=args.mode,
        side_shape=args.side_shape,
        side_true=args.side_true,
        side_learned=args.side_learned,
        scale_factor=args.scale_factor,
        mean_offset=args.mean_offset,
        spread=args.spread,
    )
    inst = si.instance
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    written = [d / "main.latb", d / "tables.pmft"]
    save_latents(inst.main, inst.side_info, written[0])
    save_tables(inst.tables, written[1])
    if inst.side is not None:
        written.insert(1, d / "side.latb")
        save_latents(inst.side, None, written[1])
    for p in written:
        print(p, file=out)
    return 0


def _load_instance(args):
    main, side_info = load_latents(args.main)
    tables = load_tables(args.tables)
    side = None
    if side_info is not None:
        if args.side is None:
            raise EgapError(f"{args.main} carries side info; pass the side latent with --side")
        side, _ = load_latents(args.side)
        if side.role != "side":
            raise EgapError(f"{args.side} holds a {side.role!r} latent, expected a side latent")
    elif args.side is not None:
        raise EgapError(f"{args.main} has no side info, so --side cannot be used")
    if main.size == 0:
        raise EgapError(f"{args.main} holds an empty latent")
    return Instance(main, tables, side_info, side, _scale_table(args) if side_info is not None else None)


def cmd_gap(args, out):
    if args.rows:
        rep = report_from_percentages(args.rows, args.label)
    else:
        if not (args.main and args.tables):
            raise EgapError("gap needs --main and --tables (or --rows)")
        inst = _load_instance(args)
        rep = report(analyze(inst, _configs(args, inst.mode), args.precision), args.label)
    print(rep.format_table(), file=out)
    if args.csv:
        if args.csv == "-":
            out.write(rep.to_csv())
        else:
            Path(args.csv).write_text(rep.to_csv())
    return 0


def _configs(args, mode):
    """Method flags to per-model configs; no method flag means the defaults."""
    if getattr(args, "method", None) is None:
        cfgs = default_configs(mode)
    elif args.method == "none":
        cfgs = baseline_configs(mode)
    else:
        primary = "factorized" if mode == "factorized" else "hyperprior"
        cfgs = dict(default_configs(mode))
        cfgs[primary] = AdaptationConfig(args.method, args.K if args.method == "gmm" else 1, args.T, args.b or 8)
    if mode == "hyperprior" and getattr(args, "side_method", None) is not None:
        cfgs["factorized"] = AdaptationConfig(
            args.side_method, args.side_K if args.side_method == "gmm" else 1, args.side_T, args.b or 8
        )
    if getattr(args, "b", None) is not None:
        cfgs = {k: AdaptationConfig(c.method, c.K, c.T, args.b) for k, c in cfgs.items()}
    return cfgs


def cmd_encode(args, out):
    inst = _load_instance(args)
    res = encode_instance(inst, _configs(args, inst.mode), args.precision)
    Path(args.output).write_bytes(res.data)
    sizes = res.sizes
    print(f"container     {args.output}", file=out)
    for key, value in sizes.as_dict().items():
        print(f"{key:<14}{value}", file=out)
    for r in res.results:
        rec = r.record
        print(
            f"{r.name:<11} method={rec.config.method} K={rec.config.K} T={len(rec.choices)} "
            f"selected={sum(rec.flags)} ideal_bits={r.gap.learned_total:.2f} "
            f"adapted_bits={r.gap.learned_total - rec.saved_bits:.2f}",
            file=out,
        )
    return 0


def cmd_decode(args, out):
    data = Path(args.container).read_bytes()
    tables = load_tables(args.tables)
    source = args.side_info or args.main
    side_info = None
    if source is not None:
        _, side_info = load_latents(source)
    decoded = unpack_and_decode(data, tables, side_info)
    if decoded.side is not None and side_info is None:
        raise EgapError("hyperprior container: supply side info with --side-info or --main")
    if args.output:
        Path(args.output).write_bytes(latents_to_bytes(decoded.main, side_info if decoded.side is not None else None))
    if args.output_side and decoded.side is not None:
        save_latents(decoded.side, None, args.output_side)
    if args.verify:
        if args.main is None:
            raise EgapError("--verify needs the original latent via --main")
        original, _ = load_latents(args.main)
        if decoded.main != original:
            raise EgapError("decoded main latent differs from the original")
        if args.side is not None and decoded.side is not None:
            original_side, _ = load_latents(args.side)
            if decoded.side != original_side:
                raise EgapError("decoded side latent differs from the original")
        print("OK, lossless", file=out)
    return 0


BENCH_FIELDS = [
    "mismatch",
    "method",
    "K",
    "T",
    "gap_pct",
    "gain_pct",
    "param_bits",
    "signal_bits",
    "total_bits",
    "adapted_bits",
    "runtime_s",
]

BENCH_KEYS = {
    "levels",
    "methods",
    "K",
    "T",
    "shape",
    "seed",
    "mode",
    "true",
    "learned",
    "spread",
    "b",
    "precision",
}


def bench_rows(args):
    """One row per (mismatch level, method, K, T); the same config drives every model."""
    rows = []
    for level in args.levels:
        si = synth_instance(args.seed, args.shape, args.learned, args.learned, args.mode, scale_factor=1.0 / level,
                            spread=args.spread)
        inst = si.instance
        for method in args.methods:
            for K in args.K if method == "gmm" else [1]:
                for T in args.T if method != "none" else [0]:
                    cfg = AdaptationConfig(method, K, T, args.b)
                    t0 = time.perf_counter()
                    results = analyze(inst, {"factorized": cfg, "hyperprior": cfg}, args.precision)
                    rep = report(results)
                    elapsed = time.perf_counter() - t0
                    param = sum(r.record.param_bits for r in results)
                    signal = sum(r.record.signal_bits for r in results)
                    adapted = sum(r.gap.learned_total - r.record.saved_bits for r in results)
                    rows.append(
                        {
                            "mismatch": level,
                            "method": method,
                            "K": K,
                            "T": T,
                            "gap_pct": rep.total_gap,
                            "gain_pct": rep.total_gain,
                            "param_bits": param,
                            "signal_bits": signal,
                            "total_bits": rep.total_bits,
                            "adapted_bits": adapted,
                            "runtime_s": elapsed,
                        }
                    )
    return rows


def cmd_bench(args, out):
    rows = bench_rows(args)
    fh = open(args.output, "w", newline="") if args.output else out
    try:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if fh is not out:
            fh.close()
    return 0


# -- parser ----------------------------------------------------------------------


def _add_scale_flags(p):
    p.add_argument("--num-scales", type=int, default=DEFAULT_NUM_SCALES)
    p.add_argument("--sigma-min", type=_positive_float, default=DEFAULT_SIGMA_MIN)
    p.add_argument("--sigma-max", type=_positive_float, default=DEFAULT_SIGMA_MAX)


def _add_input_flags(p):
    p.add_argument("--main", required=True, help="main latent (LATB)")
    p.add_argument("--side", help="side latent (LATB), hyperprior mode only")
    p.add_argument("--tables", required=True, help="learned per-channel tables (PMFT)")
    p.add_argument("--precision", type=int, default=DEFAULT_PRECISION)
    _add_scale_flags(p)


def _add_method_flags(p):
    p.add_argument("--method", type=_method, help="adaptation method for the primary stream")
    p.add_argument("--K", type=int, default=2, help="mixture components (gmm)")
    p.add_argument("--T", type=_nonneg_int, default=64, help="number of targeted tables")
    p.add_argument("--b", type=int, default=None, help="bits per quantized parameter (default 8)")
    p.add_argument("--side-method", type=_method, help="method for the side stream (hyperprior mode)")
    p.add_argument("--side-K", type=int, default=1)
    p.add_argument("--side-T", type=_nonneg_int, default=32)


def build_parser():
    parser = argparse.ArgumentParser(prog="egap", description="Entropy-model amortization gap toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic latent instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=parse_shape, required=True)
    p.add_argument("--true", type=parse_dist, required=True, help="e.g. gauss:1.3")
    p.add_argument("--learned", type=parse_dist, required=True, help="e.g. gauss:2.0")
    p.add_argument("--mode", choices=["hyperprior", "factorized"], default="hyperprior")
    p.add_argument("--side-shape", type=parse_shape)
    p.add_argument("--side-true", type=parse_dist)
    p.add_argument("--side-learned", type=parse_dist)
    p.add_argument("--scale-factor", type=_positive_float, default=1.0)
    p.add_argument("--mean-offset", type=float, default=0.0)
    p.add_argument("--spread", type=float, default=1.0, help="per-channel scale spread factor (>= 1)")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gap", help="report amortization gap and gain")
    p.add_argument("--main")
    p.add_argument("--side")
    p.add_argument("--tables")
    p.add_argument("--precision", type=int, default=DEFAULT_PRECISION)
    _add_scale_flags(p)
    _add_method_flags(p)
    p.add_argument("--rows", type=parse_rows, help="rebuild totals from name:ratio:gap[:gain] rows")
    p.add_argument("--label", default="")
    p.add_argument("--csv", help="also write CSV to this path ('-' for stdout)")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("encode", help="adapt and encode an instance into a container")
    _add_input_flags(p)
    _add_method_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a container")
    p.add_argument("container")
    p.add_argument("--tables", required=True)
    p.add_argument("--main", help="original main latent; supplies side info and the --verify reference")
    p.add_argument("--side", help="original side latent for --verify")
    p.add_argument("--side-info", help="LATB file whose SIDE chunk feeds the hyperprior decoder")
    p.add_argument("-o", "--output", help="decoded main latent (LATB)")
    p.add_argument("--output-side", help="decoded side latent (LATB)")
    p.add_argument("--verify", action="store_true")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="gain-vs-mismatch sweep as CSV")
    p.add_argument("--config", help="TOML file with sweep keys")
    p.add_argument("--levels", type=_list_of(_positive_float), default=[1.0, 1.25, 1.5, 2.0],
                   help="learned/true scale ratios")
    p.add_argument("--methods", type=_list_of(_method), default=["none", "gmm", "zero-mean-gaussian", "center-bin"])
    p.add_argument("--K", type=_list_of(int), default=[1, 2])
    p.add_argument("--T", type=_list_of(_nonneg_int), default=[8, 32])
    p.add_argument("--shape", type=parse_shape, default=(16, 16, 32))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["hyperprior", "factorized"], default="factorized")
    p.add_argument("--learned", type=parse_dist, default=Dist("gaussian", 2.0))
    p.add_argument("--spread", type=float, default=2.0)
    p.add_argument("--b", type=int, default=8)
    p.add_argument("--precision", type=int, default=DEFAULT_PRECISION)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)
    return parser


def _from_toml(action, value):
    if action.type is None:
        return value
    if action.dest == "shape" and isinstance(value, list):
        value = "x".join(str(v) for v in value)
    return action.type(value if isinstance(value, list) else str(value))


def _apply_bench_config(parser, argv):
    """Re-parse with TOML values as defaults so explicit flags still win."""
    args = parser.parse_args(argv)
    if args.command != "bench" or not args.config:
        return args
    with open(args.config, "rb") as fh:
        cfg = tomllib.load(fh)
    cfg = cfg.get("bench", cfg)
    unknown = set(cfg) - BENCH_KEYS
    if unknown:
        parser.error(f"unknown bench config keys: {', '.join(sorted(unknown))}")
    bench = parser._subparsers._group_actions[0].choices["bench"]
    converted = {}
    for action in bench._actions:
        if action.dest in cfg:
            try:
                converted[action.dest] = _from_toml(action, cfg[action.dest])
            except argparse.ArgumentTypeError as exc:
                parser.error(f"config {action.dest}: {exc}")
    bench.set_defaults(**converted)
    return parser.parse_args(argv)


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = _apply_bench_config(parser, argv)
    try:
        return args.func(args, out)
    except (EgapError, ValueError, OSError) as exc:
        print(f"egap {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
