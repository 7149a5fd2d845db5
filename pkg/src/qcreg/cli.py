"""Command-line interface.

Subcommands: register, warp, metrics, features, lbs. Exit codes: 0 success,
1 usage error (bad flags/arguments), 2 runtime error (missing or malformed
files, dimension mismatches, solver failures).
"""

import argparse
import math
import os
import sys
from dataclasses import fields, replace

from . import fileio
from .errors import InvalidDimensionError, QCRegError, UsageError
from .features import extract_features, load_features, partition_patches, write_features
from .lbs import solve_lbs
from .metrics import compute_metrics
from .optimizer import RegistrationConfig, register_multires, write_trace

SWEEP_SET = (10, 12, 14, 16, 18)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="qcreg", description="Quasiconformal image registration")
    sub = parser.add_subparsers(dest="command")

    reg = sub.add_parser("register", help="register a moving image onto a static one")
    reg.add_argument("--moving", required=True)
    reg.add_argument("--static", required=True)
    reg.add_argument("--patches", type=int, default=None)
    reg.add_argument("--features", default="builtin:hog",
                     help="builtin:raw | builtin:hog | file:PATH[,PATH2]")
    reg.add_argument("--levels", type=int, default=None)
    reg.add_argument("--sweep-patches", action="store_true")
    reg.add_argument("--histogram-match", action="store_true")
    reg.add_argument("--config", default=None)
    reg.add_argument("--out-map", default=None)
    reg.add_argument("--out-warped", default=None)
    reg.add_argument("--out-grid", default=None)
    reg.add_argument("--out-metrics", default=None)
    reg.add_argument("--out-trace", default=None)

    wrp = sub.add_parser("warp", help="apply a stored map to an image")
    wrp.add_argument("--map", required=True)
    wrp.add_argument("--image", required=True)
    wrp.add_argument("--out", required=True)

    met = sub.add_parser("metrics", help="metrics for a stored map")
    met.add_argument("--moving", required=True)
    met.add_argument("--static", required=True)
    met.add_argument("--map", required=True)
    met.add_argument("--out", default=None)

    fea = sub.add_parser("features", help="export builtin descriptors as QCF1")
    fea.add_argument("--image", required=True)
    fea.add_argument("--patches", type=int, default=10)
    fea.add_argument("--descriptor", choices=("raw", "hog"), default="hog")
    fea.add_argument("--out", required=True)

    lbs_p = sub.add_parser("lbs", help="reconstruct a map from a QCB1 coefficient field")
    lbs_p.add_argument("--mu", required=True)
    lbs_p.add_argument("--out", required=True)
    return parser


def _check_threads_env():
    raw = os.environ.get("QCREG_THREADS")
    if raw is None:
        return
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"QCREG_THREADS must be a non-negative integer, got {raw!r}")
    if value < 0:
        raise UsageError(f"QCREG_THREADS must be >= 0, got {value}")
    # single-process implementation: any cap >= 0 is honored trivially


def _load_config_file(path):
    values = {}
    names = {f.name for f in fields(RegistrationConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in names:
                raise UsageError(f"{path}:{ln}: unknown config key {key!r}")
            if key == "descriptor":
                values[key] = raw
            else:
                try:
                    values[key] = int(raw) if raw.lstrip("+-").isdigit() else float(raw)
                except ValueError:
                    raise UsageError(f"{path}:{ln}: bad value {raw!r} for {key}")
    return values


def _make_config(args):
    values = _load_config_file(args.config) if args.config else {}
    if args.patches is not None:
        values["patches_per_side"] = args.patches
    if args.levels is not None:
        values["levels"] = args.levels
    try:
        return RegistrationConfig(**values)
    except InvalidDimensionError as exc:
        raise UsageError(str(exc))


def _parse_feature_spec(spec):
    if spec in ("builtin:raw", "builtin:hog"):
        return spec.split(":", 1)[1], None
    if spec.startswith("file:"):
        paths = spec[5:].split(",")
        if len(paths) == 1:
            paths = [paths[0], paths[0]]
        if len(paths) != 2 or not all(paths):
            raise UsageError(f"bad --features file spec {spec!r}")
        return None, paths
    raise UsageError(f"bad --features spec {spec!r}")


def _run_register(args):
    descriptor, feature_paths = _parse_feature_spec(args.features)
    if args.sweep_patches and feature_paths:
        raise UsageError("--sweep-patches cannot be combined with file features")
    config = _make_config(args)
    if descriptor is not None:
        config = replace(config, descriptor=descriptor)

    moving = fileio.read_image(args.moving)
    static = fileio.read_image(args.static)
    if moving.shape != static.shape:
        raise InvalidDimensionError(
            f"image sizes differ: {moving.shape} vs {static.shape}"
        )
    if args.histogram_match:
        from .intensity import histogram_match

        moving = histogram_match(moving, static)

    banks = None
    if feature_paths:
        banks = (load_features(feature_paths[0]), load_features(feature_paths[1]))
        m = banks[0].m
        p = math.isqrt(m)
        if p * p != m:
            raise InvalidDimensionError(f"feature bank has {m} patches, not a square count")
        if args.patches is not None and args.patches != p:
            raise InvalidDimensionError(
                f"--patches {args.patches} conflicts with bank patch count {m}"
            )
        config = replace(config, patches_per_side=p)

    if args.sweep_patches:
        best = None
        for p in SWEEP_SET:
            cfg = replace(config, patches_per_side=p)
            state = register_multires(moving, static, cfg)
            report = compute_metrics(moving, static, state.map)
            if best is None or report.e_total < best[1].e_total:
                best = (state, report, p)
        state, report, chosen = best
        print(f"sweep selected patches_per_side = {chosen} (e_total {report.e_total:.6f})")
    else:
        state = register_multires(moving, static, config, feature_banks=banks)
        report = compute_metrics(moving, static, state.map)

    if args.out_map:
        fileio.write_map(args.out_map, state.map)
    if args.out_warped:
        from .intensity import warp_image

        fileio.write_image(args.out_warped, warp_image(state.map, static))
    if args.out_grid:
        spacing = max(2, min(state.mesh.height, state.mesh.width) // 16)
        fileio.write_image(args.out_grid, fileio.render_grid(state.map, spacing))
    if args.out_metrics:
        with open(args.out_metrics, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    if args.out_trace:
        write_trace(args.out_trace, state.trace)
    print(report.to_json())
    return 0


def _run_warp(args):
    qcmap = fileio.read_map(args.map)
    image = fileio.read_image(args.image)
    from .intensity import warp_image

    fileio.write_image(args.out, warp_image(qcmap, image))
    return 0


def _run_metrics(args):
    moving = fileio.read_image(args.moving)
    static = fileio.read_image(args.static)
    qcmap = fileio.read_map(args.map)
    report = compute_metrics(moving, static, qcmap)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    print(report.to_json())
    return 0


def _run_features(args):
    image = fileio.read_image(args.image)
    grid = partition_patches(image, args.patches)
    bank = extract_features(image, grid, args.descriptor)
    write_features(args.out, bank)
    print(f"wrote {bank.m} x {bank.d} feature bank to {args.out}")
    return 0


def _run_lbs(args):
    mu, h, w = fileio.read_mu(args.mu)
    from .mesh import build_grid_mesh

    qcmap = solve_lbs(mu, build_grid_mesh(h, w))
    fileio.write_map(args.out, qcmap)
    return 0


_RUNNERS = {
    "register": _run_register,
    "warp": _run_warp,
    "metrics": _run_metrics,
    "features": _run_features,
    "lbs": _run_lbs,
}


def cli_main(argv):
    parser = _build_parser()
    try:
        _check_threads_env()
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no subcommand given")
        return _RUNNERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (QCRegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
