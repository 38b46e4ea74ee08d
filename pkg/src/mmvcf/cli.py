"""Command line front end: ``mmvcf <subcommand> [options]``.

Exit codes: 0 success, 1 a ``verify`` check failed, 2 invalid
configuration, 3 I/O or parse error, 4 numerical, training or dimension
error.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ._exceptions import (
    ConfigError,
    DimensionError,
    FormatError,
    NumericalError,
    TensorIOError,
    TrainingError,
)
from ._validation import check_scalar
from .detect import (
    PyramidConfig,
    mine_hard_negatives,
    pyramid_detect,
    read_detections_jsonl,
    write_detections_jsonl,
)
from .evaluation import MethodMetrics, average_precision, emit_report, precision_recall, roc_auc
from .features import HOGTransformer, RawPixelTransformer, featurizer_from_config
from .tensorio import (
    MultiChannelImage,
    SynthConfig,
    draw_noise,
    generate_planted_dataset,
    load_image_gray,
    load_manifest,
    load_tensor,
    make_template,
    save_manifest,
    save_tensor,
)
from .trainers import FilterBank, TrainConfig, load_model, save_model
from .verify import FAULTS, run_checks

log = logging.getLogger("mmvcf")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4

# per-subcommand defaults; a JSON --config overrides these and explicit flags override both
DEFAULTS = {
    "synth": dict(k=3, h=16, w=16, pos=20, neg=20, noise=1.0, shift_range=0, outlier_frac=0.0,
                  template_seed=0, template_smoothing=0.0, noise_smoothing=0.0,
                  noise_white_fraction=1.0, scenes=0, empty_scenes=0,
                  scene_h=48, scene_w=48),
    "featurize": dict(features="hog", cell_size=3, orientations=5, signed=False, eps=1e-3),
    "train": dict(method="mmvcf", gamma=0.1, c=1.0, lam=1.0, sigma=2.0, solver="dual",
                  tol=1e-6, max_passes=None, features=None),
    "detect": dict(psr=False, scale_step=2.0 ** 0.125, min_scale=0.25, threshold=0.0,
                   nms_iou=0.5, psr_radius=5),
    "mine": dict(rounds=1, cap=100, scale_step=2.0 ** 0.125, min_scale=0.25, threshold=0.0,
                 nms_iou=0.5),
    "eval": dict(iou=0.5),
    "verify": dict(quick=False, inject_fault=None),
}
GLOBAL_DEFAULTS = dict(seed=0, threads=1, verbose=0)


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def build_parser():
    p = argparse.ArgumentParser(prog="mmvcf", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file of defaults, overridden by explicit flags")
    p.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
    p.add_argument("--threads", type=int, help="worker threads (1 is the determinism reference)")
    p.add_argument("-v", "--verbose", action="count", help="more logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a planted-template dataset")
    s.add_argument("--out", required=True)
    for flag, typ in (("--k", int), ("--h", int), ("--w", int), ("--pos", int), ("--neg", int),
                      ("--noise", _float), ("--shift-range", int), ("--outlier-frac", _float),
                      ("--template-seed", int), ("--template-smoothing", _float),
                      ("--noise-smoothing", _float), ("--noise-white-fraction", _float),
                      ("--scenes", int), ("--empty-scenes", int), ("--scene-h", int),
                      ("--scene-w", int)):
        s.add_argument(flag, type=typ)

    f = sub.add_parser("featurize", help="turn PGM images into MCF1 feature tensors")
    f.add_argument("images", nargs="+")
    f.add_argument("--out", required=True)
    f.add_argument("--features", choices=("hog", "raw"))
    f.add_argument("--cell-size", type=int)
    f.add_argument("--orientations", type=int)
    f.add_argument("--signed", action="store_true", default=None)
    f.add_argument("--eps", type=_float)

    t = sub.add_parser("train", help="train a filter from a manifest")
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--method", choices=("vcf", "svm", "mmvcf"))
    t.add_argument("--gamma", type=_float)
    t.add_argument("--c", type=_float)
    t.add_argument("--lam", type=_float)
    t.add_argument("--sigma", type=_float)
    t.add_argument("--solver", choices=("dual", "primal"))
    t.add_argument("--tol", type=_float)
    t.add_argument("--max-passes", type=int)
    t.add_argument("--features", help="JSON feature descriptor stored in the model header")

    d = sub.add_parser("detect", help="run a model over images or feature maps")
    d.add_argument("--model", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("images", nargs="+")
    d.add_argument("--psr", action="store_true", default=None)
    d.add_argument("--scale-step", type=_float)
    d.add_argument("--min-scale", type=_float)
    d.add_argument("--threshold", type=_float)
    d.add_argument("--nms-iou", type=_float)
    d.add_argument("--psr-radius", type=int)

    m = sub.add_parser("mine", help="hard-negative mining on object-free frames")
    m.add_argument("--model", required=True)
    m.add_argument("--manifest", required=True)
    m.add_argument("--out", required=True, help="output directory (model.mcfm + manifest)")
    m.add_argument("frames", nargs="+")
    m.add_argument("--rounds", type=int)
    m.add_argument("--cap", type=int)
    m.add_argument("--scale-step", type=_float)
    m.add_argument("--min-scale", type=_float)
    m.add_argument("--threshold", type=_float)
    m.add_argument("--nms-iou", type=_float)

    e = sub.add_parser("eval", help="ROC/AP report from detections or classifier scores")
    e.add_argument("--out", required=True)
    e.add_argument("--gt", help="ground-truth JSON mapping frame id to boxes")
    e.add_argument("--detections", action="append", default=[], metavar="[NAME=]PATH")
    e.add_argument("--model", action="append", default=[], metavar="[NAME=]PATH",
                   help="score the --manifest samples with this model")
    e.add_argument("--manifest")
    e.add_argument("--iou", type=_float)

    v = sub.add_parser("verify", help="run the oracle-backed self checks")
    v.add_argument("--quick", action="store_true", default=None)
    v.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    return p


def resolve(args):
    """Merge defaults, the JSON config, and explicit flags into one dict."""
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(DEFAULTS[args.command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise TensorIOError(args.config, exc.strerror or str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise FormatError(args.config, "json", str(exc)) from exc
        if not isinstance(doc, dict):
            raise ConfigError("config", "must be a JSON object")
        section = doc.get(args.command, {})
        flat = {k: v for k, v in doc.items() if k not in DEFAULTS}
        for key, value in {**flat, **section}.items():
            key = key.replace("-", "_")
            if key not in cfg and key not in vars(args):
                raise ConfigError(key, f"unknown option for '{args.command}'")
            cfg[key] = value
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            cfg[key] = value
    cfg["command"] = args.command
    check_scalar(cfg["threads"], "threads", low=1, integer=True)
    check_scalar(cfg["seed"], "seed", low=0, integer=True)
    return cfg


def _named(spec):
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name, path
    return Path(spec).stem, spec


def _load_frame(path):
    """A detection input: ``.pgm`` as a 2-D image, anything else as ``MCF1``."""
    if str(path).lower().endswith(".pgm"):
        return load_image_gray(path).data[0]
    return load_tensor(path)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_synth(cfg):
    sc = SynthConfig(k=cfg["k"], h=cfg["h"], w=cfg["w"], n_pos=cfg["pos"], n_neg=cfg["neg"],
                     template_seed=cfg["template_seed"], noise_sigma=cfg["noise"],
                     shift_range=cfg["shift_range"], outlier_fraction=cfg["outlier_frac"],
                     seed=cfg["seed"], template_smoothing=cfg["template_smoothing"],
                     noise_smoothing=cfg["noise_smoothing"],
                     noise_white_fraction=cfg["noise_white_fraction"]).validate()
    check_scalar(cfg["scenes"], "scenes", low=0, integer=True)
    check_scalar(cfg["empty_scenes"], "empty_scenes", low=0, integer=True)
    check_scalar(cfg["scene_h"], "scene_h", low=sc.h, integer=True)
    check_scalar(cfg["scene_w"], "scene_w", low=sc.w, integer=True)
    out = Path(cfg["out"])
    path = save_manifest(generate_planted_dataset(sc), out)
    print(path)
    if cfg["scenes"] or cfg["empty_scenes"]:
        gt_path = write_scenes(sc, out / "scenes", cfg["scenes"], cfg["empty_scenes"],
                               cfg["scene_h"], cfg["scene_w"])
        print(gt_path)
    return EXIT_OK


def write_scenes(sc, out_dir, n_scenes, n_empty, scene_h, scene_w):
    """Noise scenes with one planted template each (plus object-free frames).

    Boxes are ``(x, y, w, h)`` in cells. Returns the path of ``gt.json``.
    """
    rng = np.random.default_rng([sc.seed, 1])
    template = make_template(sc)
    noise = math.sqrt(1.0 + sc.noise_sigma ** 2)
    gt = {}
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_scenes + n_empty):
        scene = noise * draw_noise(rng, (sc.k, scene_h, scene_w), sc)
        name = f"scene_{i:04d}" if i < n_scenes else f"empty_{i - n_scenes:04d}"
        if i < n_scenes:
            r = int(rng.integers(0, scene_h - sc.h + 1))
            c = int(rng.integers(0, scene_w - sc.w + 1))
            scene[:, r:r + sc.h, c:c + sc.w] = template + sc.noise_sigma * draw_noise(
                rng, template.shape, sc)
            gt[name] = [[c, r, sc.w, sc.h]]
        else:
            gt[name] = []
        save_tensor(MultiChannelImage(scene.astype(np.float32).astype(np.float64)),
                    out_dir / f"{name}.mcf")
    path = out_dir / "gt.json"
    path.write_text(json.dumps(gt, indent=1, sort_keys=True) + "\n")
    return path


def cmd_featurize(cfg):
    if cfg["features"] == "hog":
        fz = HOGTransformer(cfg["cell_size"], cfg["orientations"], bool(cfg["signed"]), cfg["eps"])
        fz._config().validate()
    else:
        fz = RawPixelTransformer()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    for p in cfg["images"]:
        img = load_image_gray(p)
        path = out / (Path(p).stem + ".mcf")
        save_tensor(fz(img.data[0]), path)
        print(path)
    (out / "features.json").write_text(json.dumps(fz.describe(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_train(cfg):
    from .trainers import fit_linear_svm, fit_mmvcf, solve_vcf
    method = cfg["method"]
    if method == "mmvcf":
        TrainConfig(gamma=cfg["gamma"], C=cfg["c"], sigma=cfg["sigma"], smo_tolerance=cfg["tol"],
                    max_passes=cfg["max_passes"]).validate()
    elif method == "svm":
        TrainConfig(gamma=1.0, C=cfg["c"], smo_tolerance=cfg["tol"],
                    max_passes=cfg["max_passes"]).validate()
    else:
        check_scalar(cfg["lam"], "lam", low=0.0, include_low=False)
        check_scalar(cfg["sigma"], "sigma", low=0.0, include_low=False)
    features = cfg["features"]
    if isinstance(features, str):
        try:
            features = json.loads(features)
        except json.JSONDecodeError as exc:
            raise ConfigError("features", f"not valid JSON: {exc}") from exc
    features = features or {"kind": "none"}
    featurizer_from_config(features)

    data = load_manifest(cfg["manifest"])
    X, y, q, centers = data.X, data.y, data.targets, data.centers
    if method == "vcf":
        taps = solve_vcf(X, y, q, centers, cfg["lam"], cfg["sigma"])
        fb = FilterBank(taps, 0.0, "vcf", lam=float(cfg["lam"]), sigma=float(cfg["sigma"]))
        summary = f"method=vcf lambda={cfg['lam']:g} sigma={cfg['sigma']:g} n_sv=0 kkt=nan"
    else:
        if method == "svm":
            fb, sol = fit_linear_svm(X, y, q, cfg["c"], cfg["tol"], cfg["max_passes"])
            gamma = 1.0
        else:
            fb, sol = fit_mmvcf(X, y, q, cfg["gamma"], cfg["c"], cfg["tol"], cfg["max_passes"],
                                cfg["solver"])
            gamma = cfg["gamma"]
        if not sol.converged:
            log.warning("SMO stopped before convergence (kkt=%.3e)", sol.kkt_violation)
        summary = (f"method={method} gamma={gamma:g} n_sv={len(sol.support)} "
                   f"kkt={sol.kkt_violation:.3e}")
    fb.feature_config = features
    save_model(fb, cfg["out"])
    print(summary)
    return EXIT_OK


def _pyramid_cfg(cfg, psr_radius=5):
    return PyramidConfig(scale_step=cfg["scale_step"], min_scale=cfg["min_scale"],
                         score_threshold=cfg["threshold"], nms_iou=cfg["nms_iou"],
                         psr_mask_radius=psr_radius).validate()


def cmd_detect(cfg):
    pcfg = _pyramid_cfg(cfg, cfg["psr_radius"])
    fb = load_model(cfg["model"])
    featurizer = featurizer_from_config(fb.feature_config)
    records = []
    for path in cfg["images"]:
        frame = _load_frame(path)
        if featurizer is None and isinstance(frame, np.ndarray):
            frame = frame[None]
        dets = pyramid_detect(frame, fb, featurizer, pcfg, with_psr=bool(cfg["psr"]))
        records.extend((Path(path).stem, d) for d in dets)
        log.info("%s: %d detections", path, len(dets))
    write_detections_jsonl(records, cfg["out"])
    print(f"detections={len(records)} frames={len(cfg['images'])}")
    return EXIT_OK


def cmd_mine(cfg):
    check_scalar(cfg["rounds"], "rounds", low=1, integer=True)
    check_scalar(cfg["cap"], "cap", low=1, integer=True)
    pcfg = _pyramid_cfg(cfg)
    fb = load_model(cfg["model"])
    featurizer = featurizer_from_config(fb.feature_config)
    data = load_manifest(cfg["manifest"])
    frames = []
    for path in cfg["frames"]:
        frame = _load_frame(path)
        frames.append(frame[None] if featurizer is None and isinstance(frame, np.ndarray) else frame)
    res = mine_hard_negatives(fb, data, frames, featurizer, pcfg, rounds=cfg["rounds"],
                              cap=cfg["cap"], n_jobs=cfg["threads"])
    out = Path(cfg["out"])
    save_manifest(res.manifest, out)
    model = res.model.filter_
    model.feature_config = fb.feature_config
    save_model(model, out / "model.mcfm")
    print("false_positives=" + ",".join(str(n) for n in res.false_positive_counts)
          + f" samples={len(res.manifest)}")
    return EXIT_OK


def cmd_eval(cfg):
    if not cfg["detections"] and not cfg["model"]:
        raise ConfigError("eval", "give at least one --detections or --model input")
    metrics = {}
    if cfg["detections"]:
        if not cfg["gt"]:
            raise ConfigError("gt", "required with --detections")
        try:
            gt = json.loads(Path(cfg["gt"]).read_text())
        except OSError as exc:
            raise TensorIOError(cfg["gt"], exc.strerror or str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise FormatError(cfg["gt"], "json", str(exc)) from exc
        gt = {k: [tuple(b) for b in v] for k, v in gt.items()}
        for spec in cfg["detections"]:
            name, path = _named(spec)
            per_image = {}
            for frame, det in read_detections_jsonl(path):
                per_image.setdefault(frame, []).append(det)
            ap = average_precision(per_image, gt, cfg["iou"])
            recall, precision, _ = precision_recall(per_image, gt, cfg["iou"])
            psrs = [d.psr for ds in per_image.values() for d in ds if math.isfinite(d.psr)]
            metrics[name] = MethodMetrics(pr=list(zip(recall.tolist(), precision.tolist())), ap=ap,
                                          mean_psr=float(np.mean(psrs)) if psrs else None)
    if cfg["model"]:
        if not cfg["manifest"]:
            raise ConfigError("manifest", "required with --model")
        data = load_manifest(cfg["manifest"])
        for spec in cfg["model"]:
            name, path = _named(spec)
            fb = load_model(path)
            points, auc = roc_auc(fb.score(data.X), data.y)
            m = metrics.setdefault(name, MethodMetrics())
            m.roc, m.auc = points, auc
    for path in emit_report(metrics, cfg["out"]):
        print(path)
    return EXIT_OK


def cmd_verify(cfg):
    results = run_checks(quick=bool(cfg["quick"]), inject_fault=cfg["inject_fault"],
                         seed=cfg["seed"])
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "train": cmd_train,
    "detect": cmd_detect,
    "mine": cmd_mine,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def exit_code_for(exc):
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, (DimensionError, TrainingError, NumericalError, ArithmeticError)):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    raise exc


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        logging.basicConfig(level=logging.WARNING - 10 * min(cfg["verbose"], 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[cfg["command"]](cfg)
    except Exception as exc:
        code = exit_code_for(exc)
        print(f"mmvcf {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
