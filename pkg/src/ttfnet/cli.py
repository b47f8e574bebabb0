"""Command-line entry point: ``ttfnet <command> [options]``.

Commands::

    ttfnet encode    --annotations ann.json --out targets/ [--render]
    ttfnet decode    --heatmap h.ttft --regression r.ttft [--topk 100]
    ttfnet gradcheck --seed 0 [--trials 100]
    ttfnet roundtrip --annotations ann.json
    ttfnet lr-sweep  --betas 0.01,0.1,0.3,0.54 --lrs 1.2,2.4,3.6 [--steps 500]

Every option may also come from a JSON document passed with ``--config``;
keys are the option names with dashes replaced by underscores. A flag on
the command line beats the config value, which beats the built-in default.

Exit codes: 0 success, 1 validation or usage error, 2 tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .decoder import detect, ideal_roundtrip
from .encoder import EncoderConfig, encode_scene
from .gradcheck import TOLERANCE, run_gradcheck
from .ingest import load_annotations, load_scenes, read_tensor, write_pgm, write_tensor
from .loss import LossConfig
from .synthetic import standard_scenes
from .trainer import lr_sweep

EXIT_OK, EXIT_USAGE, EXIT_TOLERANCE = 0, 1, 2
ROUNDTRIP_TOL = 1e-6

ENCODER_DEFAULTS = {
    "alpha": 0.54,
    "beta": 0.54,
    "stride": 4,
    "scale": 16.0,
    "subarea": "gaussian",
    "weights": "gaussian-norm-log",
    "no_aspect": False,
}
LOSS_DEFAULTS = {"focal_alpha": 2.0, "focal_beta": 4.0, "w_loc": 1.0, "w_reg": 5.0, "reg_normalizer": "n-reg"}

DEFAULTS = {
    "encode": {**ENCODER_DEFAULTS, "classes": 80, "annotations": None, "out": None, "render": False},
    "decode": {
        "heatmap": None,
        "regression": None,
        "topk": 100,
        "score_thresh": 0.01,
        "stride": 4,
        "scale": 16.0,
        "window": 3,
        "image_size": None,
        "out": None,
    },
    "gradcheck": {**LOSS_DEFAULTS, "seed": 0, "trials": 100},
    "roundtrip": {**ENCODER_DEFAULTS, "classes": 80, "annotations": None},
    "lr-sweep": {
        **ENCODER_DEFAULTS,
        **LOSS_DEFAULTS,
        "classes": 3,
        "annotations": None,
        "betas": None,
        "lrs": None,
        "steps": 500,
        "seed": 0,
        "out": None,
    },
}
REQUIRED = {
    "encode": ("annotations", "out"),
    "decode": ("heatmap", "regression"),
    "gradcheck": (),
    "roundtrip": ("annotations",),
    "lr-sweep": ("betas", "lrs"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed number list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _size(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected W,H, got {text!r}")
    return vals[0], vals[1]


def _add_encoder_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--scale", type=float, help="regression scale s")
    p.add_argument("--classes", type=int)
    p.add_argument("--subarea", choices=("gaussian", "rectangle", "center-only"))
    p.add_argument("--weights", choices=("uniform", "norm", "norm-sqrt", "norm-log", "gaussian-norm-log"))
    p.add_argument("--no-aspect", action="store_const", const=True, help="isotropic kernels")


def _add_loss_flags(p):
    p.add_argument("--focal-alpha", type=float)
    p.add_argument("--focal-beta", type=float)
    p.add_argument("--w-loc", type=float)
    p.add_argument("--w-reg", type=float)
    p.add_argument("--reg-normalizer", choices=("n-reg", "weight-sum"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ttfnet", description="Training-target encoding, losses and decoding for box detection.")
    parser.add_argument("--config", help="JSON document with option values")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="write dense training targets for every scene")
    p.add_argument("--annotations")
    p.add_argument("--out")
    p.add_argument("--render", action="store_const", const=True, help="also write heatmap.pgm per scene")
    _add_encoder_flags(p)

    p = sub.add_parser("decode", help="turn heatmap and regression tensors into detections")
    p.add_argument("--heatmap")
    p.add_argument("--regression")
    p.add_argument("--topk", type=int)
    p.add_argument("--score-thresh", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--image-size", type=_size, help="W,H used to clamp boxes (default: grid x stride)")
    p.add_argument("--out", help="write detections here instead of stdout")

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradients")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    _add_loss_flags(p)

    p = sub.add_parser("roundtrip", help="encode then decode ideal targets and report box errors")
    p.add_argument("--annotations")
    _add_encoder_flags(p)

    p = sub.add_parser("lr-sweep", help="max stable learning rate per beta on the toy trainer")
    p.add_argument("--betas", type=_float_list)
    p.add_argument("--lrs", type=_float_list)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--annotations", help="scenes to train on (default: the seeded standard set)")
    p.add_argument("--out", help="write the CSV here instead of stdout")
    _add_encoder_flags(p)
    _add_loss_flags(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags, config document and defaults for ``args.command``."""
    defaults = DEFAULTS[args.command]
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config document must be a JSON object")
        unknown = sorted(set(config) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config key(s) for {args.command}: {', '.join(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else config.get(key, default)
    for key in ("betas", "lrs"):
        if key in out and isinstance(out[key], str):
            out[key] = _float_list(out[key])
    for key in REQUIRED[args.command]:
        if out[key] is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
    return out


def _encoder_config(opts: dict) -> EncoderConfig:
    return EncoderConfig(
        alpha=opts["alpha"],
        beta=opts["beta"],
        r=opts["stride"],
        num_classes=opts["classes"],
        s=opts["scale"],
        subarea_mode=opts["subarea"],
        weight_mode=opts["weights"],
        aspect_aware=not opts["no_aspect"],
    )


def _loss_config(opts: dict) -> LossConfig:
    return LossConfig(
        alpha_f=opts["focal_alpha"],
        beta_f=opts["focal_beta"],
        w_loc=opts["w_loc"],
        w_reg=opts["w_reg"],
        reg_normalizer=opts["reg_normalizer"],
    )


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_encode(opts: dict) -> int:
    cfg = _encoder_config(opts)
    ann = load_annotations(opts["annotations"])
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for sc in ann.scenes:
        t = encode_scene(sc, cfg)
        sdir = out / f"scene_{sc.image_id}"
        sdir.mkdir(exist_ok=True)
        files = {
            "heatmap": "heatmap.ttft",
            "regression": "reg.ttft",
            "weights": "weights.ttft",
            "owner": "owner.ttft",
        }
        write_tensor(t.heatmap, sdir / files["heatmap"])
        # stored on the prediction scale so decode can consume it directly
        write_tensor(t.reg_targets / cfg.s, sdir / files["regression"])
        write_tensor(t.weights, sdir / files["weights"])
        write_tensor(t.owner[None], sdir / files["owner"])
        if opts["render"]:
            write_pgm(t.heatmap.max(axis=0), sdir / "heatmap.pgm")
            files["render"] = "heatmap.pgm"
        entries.append(
            {
                "image_id": sc.image_id,
                "width": sc.width,
                "height": sc.height,
                "grid": list(t.grid_shape),
                "dir": sdir.name,
                "files": files,
                "num_annotations": t.num_annotations,
                "num_samples": t.num_samples,
            }
        )
    manifest = {
        "config": {k: opts[k] for k in ENCODER_DEFAULTS} | {"classes": cfg.num_classes},
        "regression_units": "pixels / scale",
        "dropped_annotations": ann.dropped,
        "clipped_annotations": ann.clipped,
        "scenes": entries,
    }
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    categories = {
        "index_to_category_id": list(ann.category_ids),
        "names": {str(k): v for k, v in sorted(ann.category_names.items())},
    }
    (out / "categories.json").write_text(_dump(categories), encoding="utf-8")
    print(f"encoded {len(entries)} scene(s) into {out}")
    return EXIT_OK


def cmd_decode(opts: dict) -> int:
    heat = read_tensor(opts["heatmap"])
    reg = read_tensor(opts["regression"])
    if opts["stride"] < 1 or not opts["scale"] > 0:
        raise UsageError("stride must be >= 1 and scale > 0")
    image_size = opts["image_size"]
    if image_size is None and heat.ndim == 3:
        image_size = (heat.shape[2] * opts["stride"], heat.shape[1] * opts["stride"])
    cfg = argparse.Namespace(r=opts["stride"], s=opts["scale"])
    if image_size is not None:
        image_size = tuple(image_size)
    dets = detect(heat, reg, cfg, opts["topk"], opts["score_thresh"], opts["window"], image_size)
    text = _dump([d.to_dict() for d in dets])
    if opts["out"]:
        Path(opts["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(opts: dict) -> int:
    if opts["trials"] < 1:
        raise UsageError(f"--trials must be >= 1, got {opts['trials']}")
    rep = run_gradcheck(opts["seed"], opts["trials"], _loss_config(opts))
    print(f"focal max relative error: {rep.focal_max_error:.6e}")
    print(f"giou max relative error: {rep.giou_max_error:.6e}")
    print(f"tolerance {TOLERANCE:g}: {'pass' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_TOLERANCE


def cmd_roundtrip(opts: dict) -> int:
    cfg = _encoder_config(opts)
    scenes = load_scenes(opts["annotations"])
    ok, flagged = True, 0
    for sc in scenes:
        rt = ideal_roundtrip(sc, cfg)
        status = "ok" if rt.max_error < ROUNDTRIP_TOL and not rt.missing else "FAIL"
        ok &= status == "ok"
        line = f"scene {sc.image_id}: max box error {rt.max_error:.3e} {status}"
        if rt.collisions:
            flagged += 1
            line += f" (collisions excluded: {','.join(map(str, rt.collisions))})"
        if rt.missing:
            line += f" (missing: {','.join(map(str, rt.missing))})"
        print(line)
    print(f"{len(scenes)} scenes, {flagged} with collisions, tolerance {ROUNDTRIP_TOL:g}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def cmd_lr_sweep(opts: dict) -> int:
    cfg = _encoder_config(opts)
    if opts["steps"] < 0:
        raise UsageError("--steps must be >= 0")
    if opts["annotations"]:
        scenes = load_scenes(opts["annotations"])
    else:
        scenes = standard_scenes(opts["seed"], num_classes=cfg.num_classes)
    res = lr_sweep(scenes, opts["betas"], opts["lrs"], opts["steps"], cfg, _loss_config(opts), opts["seed"])
    csv = res.to_csv()
    if opts["out"]:
        Path(opts["out"]).write_text(csv, encoding="utf-8")
    else:
        sys.stdout.write(csv)
    frontier = res.max_stable_lr()
    parts = [f"{b!r}={'none' if e is None else repr(e)}" for b, e in sorted(frontier.items())]
    monotone = res.is_monotone()
    trend = "non-decreasing" if monotone else "NOT non-decreasing"
    print(f"max stable lr per beta: {' '.join(parts)} ({trend})")
    return EXIT_OK if monotone else EXIT_TOLERANCE


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "gradcheck": cmd_gradcheck,
    "roundtrip": cmd_roundtrip,
    "lr-sweep": cmd_lr_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already printed
        return int(exc.code or 0)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except (UsageError, argparse.ArgumentTypeError, ValueError, TypeError, OSError) as exc:
        print(f"ttfnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
