"""Command-line surface: dataset generation, training, sampling, gradient
checks, evaluation and the ablation harness.

Artifacts are byte-deterministic for a fixed seed: CSV rows use a fixed
column schema, images are binary PPM, and run manifests echo the exact
configuration. Exit codes: 0 ok, 2 bad usage/config, 3 I/O or format
errors, 4 violated invariants (diverged training, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data as dat
from . import denoiser as dn
from . import metrics as met
from ._kernel import backend_name
from .geometry import ViewRing
from .tensor import MvtError, Tensor, grad_check, load_mvt, save_mvt
from .scan import SCAN_STRATEGIES

CSV_HEADER = "run_id,stack,scan_strategy,seed,step,train_loss,consistency,psnr_vs_gt"
STACK_TOKENS = ("aa", "dr", "rg", "air")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _deterministic():
    return os.environ.get("MV_TEST_DETERMINISTIC", "") == "1"


def _fmt(x):
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _csv_row(run_id, stack, scan, seed, step="", train_loss="",
             consistency="", psnr_vs_gt=""):
    cells = [run_id, stack, scan, seed, step, train_loss, consistency, psnr_vs_gt]
    return ",".join(_fmt(c) for c in cells)


def _write_csv(path, rows):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(r + "\n")


def _write_manifest(path, payload):
    payload = dict(payload)
    payload["deterministic"] = _deterministic()
    payload["scan_backend"] = backend_name()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def parse_stack(text):
    """'aa+dr+rg+air' (or 'none') -> operator enable flags."""
    text = text.strip()
    tokens = [] if text in ("", "none") else text.split("+")
    for t in tokens:
        if t not in STACK_TOKENS:
            raise CliError(f"unknown stack token {t!r}; allowed: "
                           f"{'+'.join(STACK_TOKENS)} or 'none'", EXIT_CONFIG)
    if len(set(tokens)) != len(tokens):
        raise CliError(f"duplicate stack token in {text!r}", EXIT_CONFIG)
    return {f"enable_{t}": (t in tokens) for t in STACK_TOKENS}


def _load_dataset(path):
    try:
        return dat.load_dataset(path)
    except dat.DatasetError as exc:
        raise CliError(str(exc), EXIT_IO)


def _build_config(manifest, args, stack_flags, scan):
    if manifest["W"] % dn.LATENT_FACTOR or manifest["H"] % dn.LATENT_FACTOR:
        raise CliError(f"image dims {manifest['W']}x{manifest['H']} are not "
                       f"divisible by the latent factor {dn.LATENT_FACTOR}",
                       EXIT_CONFIG)
    try:
        return dn.ModelConfig(
            f=manifest["f"],
            latent_h=manifest["H"] // dn.LATENT_FACTOR,
            latent_w=manifest["W"] // dn.LATENT_FACTOR,
            channels=args.channels,
            blocks=args.blocks,
            elevation_deg=manifest["elevation_deg"],
            distance=manifest["distance"],
            scan_strategy=scan,
            lr=args.lr,
            **stack_flags,
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)


def _training_batch(rset, manifest):
    scene = dat.make_scene(manifest["seed"])
    encoder = dn.ToyTextEncoder()
    prompt = dn.prompt_template(scene.prompt)
    return {
        "z0": dn.encode_images(rset.images),
        "text": encoder.embed_prompt(prompt),
        "null": encoder.null,
        "prompt": scene.prompt,
    }


def _train_one(rset, manifest, args, stack_flags, scan, seed):
    config = _build_config(manifest, args, stack_flags, scan)
    model = dn.MvDenoiser(config, seed=seed)
    batch = _training_batch(rset, manifest)
    rng = np.random.default_rng(seed)
    try:
        history = dn.train_loop(batch, model, max_steps=args.steps,
                                stop_loss=args.stop_loss,
                                log_every=args.log_every, rng=rng)
    except dn.TrainingDiverged as exc:
        raise CliError(str(exc), EXIT_INVARIANT)
    return model, batch, history, rng


def _sample_stack(model, batch, steps, guidance, seed):
    encoder = dn.ToyTextEncoder()
    text = encoder.embed_prompt(dn.prompt_template(batch["prompt"]))
    return dn.ddim_sample(model, text, encoder.null, steps=steps,
                          guidance=guidance, seed=seed)


def _dump_views(out_dir, z):
    os.makedirs(out_dir, exist_ok=True)
    images = dn.decode_latents(z)
    for i in range(images.shape[0]):
        met.write_ppm(os.path.join(out_dir, f"view_{i:02d}.ppm"), images[i])
    save_mvt(os.path.join(out_dir, "latents.mvt"), z)
    return images


# -- subcommands -------------------------------------------------------------------


def cmd_gen_data(args):
    if args.views < 2:
        raise CliError(f"need at least 2 views, got {args.views}", EXIT_CONFIG)
    if args.elevation == "random":
        elev = float(np.random.default_rng(args.seed).uniform(-30.0, 30.0))
    else:
        try:
            elev = float(args.elevation)
        except ValueError:
            raise CliError(f"bad --elevation {args.elevation!r}", EXIT_CONFIG)
    ring = ViewRing(f=args.views, elevation_deg=elev, distance=2.0,
                    W=args.res, H=args.res)
    scene = dat.make_scene(args.seed)
    rset = dat.render_views(scene, ring)
    dat.save_dataset(rset, args.out, seed=args.seed)
    print(f"wrote {ring.f} views of scene {args.seed} "
          f"({scene.prompt!r}) to {args.out}")
    return EXIT_OK


def cmd_train(args):
    rset, manifest = _load_dataset(args.dataset)
    stack_flags = parse_stack(args.stack)
    if args.scan not in SCAN_STRATEGIES:
        raise CliError(f"unknown scan strategy {args.scan!r}", EXIT_CONFIG)
    model, batch, history, rng = _train_one(rset, manifest, args, stack_flags,
                                            args.scan, args.seed)
    stack = model.config.stack
    run_id = f"train__{stack}__{args.scan}__s{args.seed}"
    rows = [_csv_row(run_id, stack, args.scan, args.seed, step=s, train_loss=ma)
            for s, _, ma in history]
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "train_log.csv"), rows)
    dn.save_checkpoint(model, args.out, step=history[-1][0],
                       extra={"dataset_seed": manifest["seed"],
                              "prompt": batch["prompt"],
                              "train_seed": args.seed,
                              "final_loss_ma": history[-1][2],
                              "rng_state": rng.bit_generator.state})
    print(f"trained {stack} for {history[-1][0]} steps, "
          f"final smoothed loss {history[-1][2]:.4f}; checkpoint in {args.out}")
    return EXIT_OK


def cmd_sample(args):
    try:
        model, manifest = dn.load_checkpoint(args.checkpoint)
    except dn.CheckpointError as exc:
        raise CliError(str(exc), EXIT_IO)
    prompt = args.prompt or manifest["extra"].get("prompt")
    if not prompt:
        raise CliError("checkpoint carries no prompt; pass --prompt", EXIT_CONFIG)
    batch = {"prompt": prompt}
    z = _sample_stack(model, batch, args.steps, args.guidance, args.seed)
    _dump_views(args.out, z)
    _write_manifest(os.path.join(args.out, "run.json"), {
        "command": "sample",
        "checkpoint": os.path.abspath(args.checkpoint),
        "config": manifest["config"],
        "prompt": prompt,
        "steps": args.steps,
        "guidance": args.guidance,
        "seed": args.seed,
    })
    print(f"sampled {model.config.f} views ({args.steps} DDIM steps, "
          f"guidance {args.guidance}) into {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    config = dn.ModelConfig(f=2, latent_h=4, latent_w=4, channels=8, blocks=1,
                            text_dim=8, d_state=2, tau=2, rho=4)
    model = dn.MvDenoiser(config, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    z0 = rng.standard_normal((2, dn.LATENT_CHANNELS, 4, 4)) * 0.5
    eps = rng.standard_normal(z0.shape)
    text = dn.ToyTextEncoder(dim=8).embed_prompt("a checker cube")
    t = 321
    z_t = dn.add_noise(z0, t, eps, model.sched)
    target = Tensor(eps)

    def loss():
        diff = model.denoise(z_t, t, text) - target
        return (diff * diff).mean()

    report = grad_check(loss, model.params(), eps=args.eps, tol=args.tol,
                        max_entries=args.max_entries)
    print(f"gradcheck: {report.n_checked} coordinates, max rel err "
          f"{report.max_rel_err:.3e} (tol {report.tol:g}) -> "
          f"{'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_eval(args):
    rset, _ = _load_dataset(args.dataset)
    lpath = os.path.join(args.samples, "latents.mvt")
    try:
        z = load_mvt(lpath)
    except (FileNotFoundError, MvtError) as exc:
        raise CliError(f"cannot read sampled latents: {exc}", EXIT_IO)
    images = dn.decode_latents(z)
    if images.shape != rset.images.shape:
        raise CliError(f"samples decode to {images.shape}, dataset is "
                       f"{rset.images.shape}", EXIT_CONFIG)
    cons = met.consistency_metric(images, rset)
    p = met.psnr(images, dn.decode_latents(dn.encode_images(rset.images)))
    row = _csv_row("eval", "", "", "", consistency=cons, psnr_vs_gt=p)
    if args.out:
        _write_csv(args.out, [row])
    print(f"consistency {cons:.6f}  psnr_vs_gt {p:.3f} dB")
    return EXIT_OK


def cmd_ablate(args):
    rset, manifest = _load_dataset(args.dataset)
    stacks = [s.strip() for s in args.stacks.split(",") if s.strip()]
    scans = [s.strip() for s in args.scans.split(",") if s.strip()]
    for s in scans:
        if s not in SCAN_STRATEGIES:
            raise CliError(f"unknown scan strategy {s!r}", EXIT_CONFIG)
    if not stacks or not scans:
        raise CliError("need at least one stack and one scan strategy", EXIT_CONFIG)
    sample_seeds = [int(s) for s in args.sample_seeds.split(",")]
    os.makedirs(args.out, exist_ok=True)
    gt_decoded = dn.decode_latents(dn.encode_images(rset.images))
    rows = []
    results = {}
    for stack_text in stacks:
        flags = parse_stack(stack_text)
        for scan in scans:
            model, batch, history, _ = _train_one(rset, manifest, args, flags,
                                                  scan, args.seed)
            stack = model.config.stack
            run_id = f"{stack}__{scan}__s{args.seed}"
            cons, psnrs = [], []
            for s in sample_seeds:
                z = _sample_stack(model, batch, args.sample_steps,
                                  args.guidance, s)
                images = _dump_views(os.path.join(args.out, run_id, f"seed{s}"), z)
                cons.append(met.consistency_metric(images, rset))
                psnrs.append(met.psnr(images, gt_decoded))
            rows.append(_csv_row(run_id, stack, scan, args.seed,
                                 step=history[-1][0], train_loss=history[-1][2],
                                 consistency=float(np.median(cons)),
                                 psnr_vs_gt=float(np.median(psnrs))))
            results[run_id] = float(np.median(cons))
            print(f"{run_id}: steps={history[-1][0]} loss={history[-1][2]:.4f} "
                  f"consistency={np.median(cons):.4f}", flush=True)
    _write_csv(os.path.join(args.out, "ablation.csv"), rows)
    _write_manifest(os.path.join(args.out, "run.json"), {
        "command": "ablate",
        "dataset": os.path.abspath(args.dataset),
        "stacks": stacks,
        "scans": scans,
        "seed": args.seed,
        "sample_seeds": sample_seeds,
        "steps": args.steps,
        "stop_loss": args.stop_loss,
        "sample_steps": args.sample_steps,
        "guidance": args.guidance,
        "channels": args.channels,
        "blocks": args.blocks,
        "lr": args.lr,
    })
    return EXIT_OK


# -- argument surface --------------------------------------------------------------


def _add_train_args(p):
    p.add_argument("--steps", type=int, default=20000,
                   help="max optimisation steps")
    p.add_argument("--stop-loss", type=float, default=0.04,
                   help="early stop once the 50-step loss average dips below")
    p.add_argument("--log-every", type=int, default=200)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--seed", type=int, default=0, help="training seed")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mvring",
        description="Multiview ring denoiser: synthetic data, training, "
                    "sampling and consistency ablations.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="render a seeded multiview dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", type=int, default=12)
    p.add_argument("--res", type=int, default=32)
    p.add_argument("--elevation", default="0",
                   help="camera elevation in degrees, or 'random'")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="overfit the denoiser on one dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--stack", default="aa+dr+rg+air")
    p.add_argument("--scan", default="spiral-bidirectional",
                   choices=SCAN_STRATEGIES)
    _add_train_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="DDIM-sample views from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prompt", default=None)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the miniature model")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-entries", type=int, default=None,
                   help="cap checked coordinates per parameter")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("eval", help="score sampled views against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", default=None, help="optional CSV path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train/sample/score a stack lattice")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stacks", "--stack", dest="stacks",
                   default="aa,aa+dr+rg+air",
                   help="comma-separated operator stacks")
    p.add_argument("--scans", "--scan", dest="scans",
                   default="spiral-bidirectional",
                   help="comma-separated scan strategies")
    p.add_argument("--sample-steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--sample-seeds", default="0,1,2")
    _add_train_args(p)
    p.set_defaults(fn=cmd_ablate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (dat.DatasetError, dn.CheckpointError, MvtError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except dn.TrainingDiverged as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
