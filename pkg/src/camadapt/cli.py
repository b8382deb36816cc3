"""Command-line entry point.

Subcommands: analyze, distort, train-i2i, adapt, evaluate, grad-check.
Every run writes a manifest (command line, config hash, versions) and a
resolved-config snapshot next to its outputs, so a run can be replayed from
its output directory alone.
"""

import argparse
import hashlib
import os
import platform
import sys

import numpy as np

from . import __version__
from . import autodiff as ad
from . import cyclegan
from . import distortion
from . import harness
from . import nets
from . import ppm
from . import report


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# config files and run provenance


def load_config_file(path, allowed):
    """Line-oriented `key = value`; blank lines and # comments ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected `key = value`")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in allowed:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val
    return values


def _resolved_config_text(settings):
    lines = [f"{k} = {settings[k]}" for k in sorted(settings)]
    return "\n".join(lines) + "\n"


def write_run_records(out_dir, command, settings, argv):
    """Resolved-config snapshot + manifest with config hash and versions."""
    os.makedirs(out_dir, exist_ok=True)
    resolved = _resolved_config_text(settings)
    with open(os.path.join(out_dir, "config.resolved.txt"), "w") as fh:
        fh.write(resolved)
    digest = hashlib.sha256(resolved.encode()).hexdigest()
    manifest = [
        f"command {command}",
        f"argv {' '.join(argv)}",
        f"config_sha256 {digest}",
        f"camadapt {__version__}",
        f"python {platform.python_version()}",
        f"numpy {np.__version__}",
    ]
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(manifest) + "\n")


def _merge(args, keys, config_key="config"):
    """File values first, then any flag explicitly set overrides."""
    settings = {}
    if getattr(args, config_key, None):
        settings.update(load_config_file(getattr(args, config_key), set(keys)))
    for key in keys:
        attr = key.replace("-", "_")
        val = getattr(args, attr, None)
        if val is not None:
            settings[key] = str(val)
    return settings


# ---------------------------------------------------------------------------
# analyze


TABLE_EXPECT = {"BD": (70, 2_764_737), "SD": (34, 663_361), "ESD": (16, 136_513)}


def cmd_analyze(args, argv):
    specs = []
    for name in args.builtin or []:
        specs.append(nets.builtin_spec(name))
    for path in args.spec_file or []:
        with open(path) as fh:
            try:
                specs.append(nets.spec_from_text(fh.read()))
            except nets.SpecError as exc:
                raise CliError(f"{path}: {exc}") from exc
    if not specs:
        raise CliError("analyze: give --builtin names and/or --spec-file paths")
    print(f"{'name':<20}{'receptive_field':>16}{'params':>12}")
    failures = []
    for spec in specs:
        rf = nets.receptive_field(spec)
        n = nets.count_params(spec)
        print(f"{spec.name:<20}{rf:>16}{n:>12}")
        expect = TABLE_EXPECT.get(spec.name.upper())
        if args.check_table1 and expect is not None and (rf, n) != expect:
            failures.append(spec.name)
    if args.check_table1:
        missing = [k for k in TABLE_EXPECT
                   if k not in {s.name.upper() for s in specs}]
        if failures or missing:
            print(f"check failed: mismatched={failures} missing={missing}",
                  file=sys.stderr)
            return 1
    return 0


# ---------------------------------------------------------------------------
# distort


def cmd_distort(args, argv):
    chosen = [v is not None for v in (args.model, args.blur, args.noise, args.jpeg)]
    if sum(chosen) != 1:
        raise CliError("distort: choose exactly one of --model/--blur/--noise/--jpeg")
    image = ppm.read_ppm(args.input)
    if args.model is not None:
        params = distortion.CAMERA_MODELS.get(args.model.upper())
        if params is None:
            raise CliError(f"unknown camera model {args.model!r}")
        out = distortion.apply_camera_model(image, params, seed=args.seed)
        desc = (f"model = {args.model.upper()}\nsigma_blur = {params.sigma_blur}\n"
                f"sigma_noise = {params.sigma_noise}\n"
                f"compression_level = {params.compression_level}")
    elif args.blur is not None:
        out = distortion.blur(image, args.blur)
        desc = f"sigma_blur = {args.blur}"
    elif args.noise is not None:
        out = distortion.awgn(image, args.noise, seed=args.seed)
        desc = f"sigma_noise = {args.noise}"
    else:
        out = distortion.jpeg_roundtrip(image, args.jpeg)
        desc = f"compression_level = {args.jpeg}"
    ppm.write_ppm(args.output, out)
    out_dir = os.path.dirname(os.path.abspath(args.output)) or "."
    settings = {"input": args.input, "output": args.output,
                "seed": str(args.seed)}
    for line in desc.splitlines():
        key, _, val = line.partition(" = ")
        settings[key] = val
    write_run_records(out_dir, "distort", settings, argv)
    print(f"wrote {args.output} (PSNR vs input: "
          f"{distortion.psnr(image, out):.2f} dB)")
    return 0


# ---------------------------------------------------------------------------
# train-i2i


_TRAIN_KEYS = ("variant", "domain-x", "domain-y", "crop", "epochs-const",
               "epochs-decay", "lambda-c", "lambda-i", "pool-size", "seed",
               "checkpoint-every", "out")


def _load_image_dir(path):
    names = sorted(n for n in os.listdir(path) if n.endswith(".ppm"))
    if not names:
        raise CliError(f"no .ppm images in {path}")
    return [ppm.read_ppm(os.path.join(path, n)) for n in names]


def cmd_train_i2i(args, argv):
    settings = _merge(args, _TRAIN_KEYS)
    for key in ("domain-x", "domain-y", "out"):
        if key not in settings:
            raise CliError(f"train-i2i: missing required setting {key!r}")
    config = cyclegan.TrainConfig(
        discriminator_variant=settings.get("variant", "SD").upper(),
        crop=int(settings.get("crop", 64)),
        epochs_const=int(settings.get("epochs-const", 30)),
        epochs_decay=int(settings.get("epochs-decay", 30)),
        lambda_cycle=float(settings.get("lambda-c", 10.0)),
        lambda_identity=float(settings.get("lambda-i", 0.5)),
        pool_size=int(settings.get("pool-size", 50)),
        seed=int(settings.get("seed", 0)),
        checkpoint_every=int(settings.get("checkpoint-every", 10)),
    )
    out_dir = settings["out"]
    write_run_records(out_dir, "train-i2i", settings, argv)
    dataset_x = _load_image_dir(settings["domain-x"])
    dataset_y = _load_image_dir(settings["domain-y"])

    def progress(row):
        print(f"epoch {row['epoch']}: total {row['total']:.4f} "
              f"d_x {row['d_x']:.4f} d_y {row['d_y']:.4f}", flush=True)

    cyclegan.train(config, dataset_x, dataset_y, out_dir, progress)
    report.plot_loss_curves(os.path.join(out_dir, "losses.csv"),
                            os.path.join(out_dir, "loss_curves.png"))
    print(f"checkpoint and losses written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# adapt


def cmd_adapt(args, argv):
    state = cyclegan.load_checkpoint(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    names = sorted(n for n in os.listdir(args.input) if n.endswith(".ppm"))
    if not names:
        raise CliError(f"no .ppm images in {args.input}")
    for name in names:
        image = ppm.read_ppm(os.path.join(args.input, name))
        out = cyclegan.emulate(state.G, [image])[0]
        ppm.write_ppm(os.path.join(args.out, name), out)
    write_run_records(args.out, "adapt",
                      {"checkpoint": args.checkpoint, "input": args.input,
                       "out": args.out, "seed": str(args.seed)}, argv)
    print(f"adapted {len(names)} images into {args.out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


_EVAL_KEYS = ("distortion", "sigma", "compression-level", "model",
              "scenarios", "checkpoint", "seeds", "classes",
              "n-per-class-train", "n-per-class-test", "pretrain-steps",
              "finetune-steps", "out", "seed")


def _study_distortion(settings):
    kind = settings.get("distortion", "awgn")
    if kind == "none":
        return None, "none"
    if kind == "awgn":
        sigma = float(settings.get("sigma", 20.0))
        return harness.awgn_distortion(sigma), f"awgn:{sigma:g}"
    if kind == "camera":
        letter = settings.get("model", "F").upper()
        params = distortion.CAMERA_MODELS.get(letter)
        if params is None:
            raise CliError(f"unknown camera model {letter!r}")
        return harness.camera_distortion(params), f"camera:{letter}"
    raise CliError(f"unknown distortion kind {kind!r}")


def cmd_evaluate(args, argv):
    settings = _merge(args, _EVAL_KEYS)
    if "out" not in settings:
        raise CliError("evaluate: missing required setting 'out'")
    out_dir = settings["out"]
    write_run_records(out_dir, "evaluate", settings, argv)
    fn, dist_name = _study_distortion(settings)
    kinds = [k.strip() for k in
             settings.get("scenarios", "baseline,oracle").split(",") if k.strip()]
    scenarios = tuple(
        harness.Scenario(k, settings.get("checkpoint", "") if k == "adapted" else "")
        for k in kinds)
    seeds = [int(s) for s in settings.get("seeds", settings.get("seed", "0")).split(",")]
    pretrain_steps = int(settings.get("pretrain-steps", 2000))
    finetune_steps = int(settings.get("finetune-steps", 600))
    all_results = []
    for seed in seeds:
        config = harness.StudyConfig(
            distortion=fn, scenarios=scenarios, seed=seed,
            classes=int(settings.get("classes", 4)),
            n_per_class_train=int(settings.get("n-per-class-train", 100)),
            n_per_class_test=int(settings.get("n-per-class-test", 40)),
            pretrain_recipe=harness.TrainRecipe(steps=pretrain_steps, seed=seed),
            finetune_recipe=harness.TrainRecipe(steps=finetune_steps, lr=1e-4,
                                                seed=seed),
        )
        all_results += harness.run_scenarios(
            config, progress=lambda m: print(f"[seed {seed}] {m}", flush=True))
    csv_path = os.path.join(out_dir, "results.csv")
    harness.write_results_csv(csv_path, all_results, dist_name)
    report.plot_scenario_results(csv_path,
                                 os.path.join(out_dir, "results.png"))
    print(f"results written to {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# grad-check


def cmd_grad_check(args, argv):
    from . import gradsuite
    worst = gradsuite.run_gradient_suite(verbose=True)
    print(f"worst relative error {worst:.3e}")
    return 0 if worst < 1e-3 else 1


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="camadapt",
        description="Learn and apply camera-specific image distortions.")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("analyze", help="receptive field / parameter table")
    p.add_argument("--builtin", nargs="*", metavar="NAME",
                   help="built-in architecture names (bd sd esd resnet9_generator)")
    p.add_argument("--spec-file", nargs="*", metavar="PATH")
    p.add_argument("--check-table1", action="store_true",
                   help="exit nonzero unless BD/SD/ESD match the reference table")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("distort", help="apply a distortion to a PPM image")
    p.add_argument("--model", help="camera model letter A-F")
    p.add_argument("--blur", type=float, help="Gaussian blur sigma")
    p.add_argument("--noise", type=float, help="AWGN sigma")
    p.add_argument("--jpeg", type=int, help="JPEG compression level 1-100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("input", metavar="in.ppm")
    p.add_argument("output", metavar="out.ppm")
    p.set_defaults(fn=cmd_distort)

    p = sub.add_parser("train-i2i", help="unpaired distortion learning")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--variant", help="discriminator variant bd|sd|esd")
    p.add_argument("--domain-x", help="directory of pristine PPMs")
    p.add_argument("--domain-y", help="directory of distorted PPMs")
    p.add_argument("--crop", type=int)
    p.add_argument("--epochs-const", type=int)
    p.add_argument("--epochs-decay", type=int)
    p.add_argument("--lambda-c", type=float)
    p.add_argument("--lambda-i", type=float)
    p.add_argument("--pool-size", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train_i2i)

    p = sub.add_parser("adapt", help="apply a trained mapping to a directory")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint path prefix (without .bin/.manifest)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("input", metavar="IN_DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("evaluate", help="baseline/oracle/adapted study")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--distortion", help="awgn | camera | none")
    p.add_argument("--sigma", type=float)
    p.add_argument("--model")
    p.add_argument("--scenarios", help="comma list: baseline,oracle,adapted")
    p.add_argument("--checkpoint")
    p.add_argument("--seeds", help="comma list of seeds")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--n-per-class-train", type=int)
    p.add_argument("--n-per-class-test", type=int)
    p.add_argument("--pretrain-steps", type=int)
    p.add_argument("--finetune-steps", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.set_defaults(fn=cmd_grad_check)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args, argv)
    except (CliError, ad.AutodiffError, nets.SpecError, ppm.PpmError,
            distortion.DistortionError, cyclegan.TrainError,
            harness.HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
