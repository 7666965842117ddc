"""Command-line entry point: ``deskdiff <subcommand> ...``.

Exit codes: 0 success, 1 usage / config / IO error, 2 numerical check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as gc
from .conditioning import CondBatch
from .config import ConfigError, load_config
from .experiment import LOSS_FILE, build_datasets, load_run, save_run, train_from_config
from .io import (read_samples_csv, write_loss_csv, write_pgm_grid, write_samples_csv,
                 write_trajectory_csv)
from .latent import LatentPipeline
from .metrics import class_purity, median_bandwidth, mmd, mode_coverage, moments
from .netgraph import tensor as tensor_mod
from .netgraph.checkpoint import CheckpointError
from .netgraph.denoiser import DenoiserModel
from .rng import stream
from .sampling import SamplerConfig, ancestral_sample
from .schedule import build_linear_schedule

log = logging.getLogger("deskdiff")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.latent:
        cfg.latent.enabled = True
        cfg.validate()
    run = train_from_config(cfg)
    ckpt_dir = cfg.resolve(cfg.paths.checkpoint_dir)
    out_dir = cfg.resolve(cfg.paths.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = save_run(run, ckpt_dir)
    write_loss_csv(out_dir / LOSS_FILE, run.reports)
    final = run.reports[-1].loss if run.reports else float("nan")
    print(f"checkpoint: {path}")
    print(f"loss log: {out_dir / LOSS_FILE}")
    print(f"steps: {cfg.train.total_steps} final loss: {final:.6g}")
    if run.ae_mse is not None:
        print(f"autoencoder reconstruction mse: {run.ae_mse:.6g}")
    return EXIT_OK


def _condition(run, args, n: int):
    vocab = run.config.vocab()
    try:
        cls = None if args.class_ is None else vocab.class_id(args.class_)
        sty = None if args.style is None else vocab.style_id(args.style)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cls is None and sty is None:
        return None, None
    return CondBatch.make(n, cls, sty), cls


def cmd_sample(args) -> int:
    run = load_run(args.checkpoint)
    cfg = run.config
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    guidance = cfg.sampler.guidance_scale if args.guidance is None else args.guidance
    scfg = SamplerConfig(guidance_scale=guidance, n_samples=args.n, seed=args.seed,
                         record_trajectory=args.record_trajectory,
                         variance_choice=args.variance or cfg.sampler.variance_choice)
    cond, cls = _condition(run, args, args.n)
    schedule = cfg.build_schedule()
    rng = stream(args.seed, "sample")
    if run.autoencoder is not None:
        pipe = LatentPipeline(run.autoencoder, run.model, run.stats, schedule)
        samples, res = pipe.sample(cond, scfg, rng)
    else:
        res = ancestral_sample(run.model, schedule, cond, scfg, rng)
        samples = res.samples
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".pgm":
        if cfg.data.generator != "sprites":
            raise UsageError("PGM output is only available for sprite data")
        write_pgm_grid(out, samples, cfg.data.size)
    else:
        write_samples_csv(out, samples, cls)
    print(f"wrote {args.n} samples to {out}")
    if args.record_trajectory:
        traj_path = out.with_name(out.stem + "_trajectory.csv")
        write_trajectory_csv(traj_path, res.trajectory)
        print(f"wrote trajectory to {traj_path}")
    return EXIT_OK


def evaluate(samples: np.ndarray, classes, cfg, threshold: float | None = None) -> dict:
    """Report comparing generated samples against the config's held-out set."""
    sets = build_datasets(cfg)
    ref = sets.heldout.samples
    if samples.shape[1] != ref.shape[1]:
        raise UsageError(f"samples have width {samples.shape[1]}, reference has {ref.shape[1]}")
    if threshold is None:
        threshold = 3.0 * cfg.data.sigma if cfg.data.generator == "ring" else 1.0
    half = ref.shape[0] // 2
    report = {"n": int(samples.shape[0]), "n_reference": int(ref.shape[0])}
    if samples.shape[0] >= 2 and half >= 2:
        report["bandwidth"] = median_bandwidth(ref)
        report["mmd"] = mmd(samples, ref)
        report["mmd_threshold"] = 2.0 * mmd(ref[:half], ref[half:2 * half])
    report["coverage"] = mode_coverage(samples, sets.centers, threshold)
    report["n_modes"] = int(sets.centers.shape[0])
    report["threshold"] = threshold
    if classes is not None and samples.shape[0]:
        nearest = sets.center_classes[np.argmin(
            ((samples[:, None, :] - sets.centers[None]) ** 2).sum(-1), axis=1)]
        report["purity"] = float(np.mean(nearest == classes))
    if samples.shape[0]:
        report["moments"] = moments(samples)
    return report


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    path = Path(args.samples)
    if not path.is_file():
        raise UsageError(f"samples file not found: {path}")
    samples, classes = read_samples_csv(path)
    print(json.dumps(evaluate(samples, classes, cfg, args.threshold), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.train.seed
    model = DenoiserModel.init(cfg.denoiser_config(), stream(seed, "init"))
    probe = gc.denoiser_probe(model, stream(seed, "gradcheck"), batch=args.batch)
    old = tensor_mod._silu_grad_scale
    if args.corrupt_backward:
        tensor_mod._silu_grad_scale = 1.01
    try:
        report = gc.check_gradients(model.params, probe)
    finally:
        tensor_mod._silu_grad_scale = old
    failed = False
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["group", "max_rel_error", "status"])
    for name, err in report.items():
        ok = err < gc.TOLERANCE
        failed |= not ok
        w.writerow([name, f"{err:.3e}", "ok" if ok else "FAIL"])
    print(f"# {len(report)} groups, tolerance {gc.TOLERANCE:g}: {'FAILED' if failed else 'passed'}")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_schedule_inspect(args) -> int:
    if args.config:
        s = load_config(args.config).build_schedule()
    else:
        s = build_linear_schedule(args.T, args.beta_start, args.beta_end)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "beta", "alpha", "alpha_bar", "posterior_variance"])
        for row in s.as_rows():
            w.writerow([row[0], *(repr(v) for v in row[1:])])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deskdiff", description="Desk-scale diffusion toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a denoiser from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--latent", action="store_true", help="train in autoencoder latent space")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw samples from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--guidance", type=float, default=None)
    s.add_argument("--class", dest="class_", default=None, help="class id or name")
    s.add_argument("--style", default=None, help="style id or name")
    s.add_argument("--variance", choices=("posterior", "beta"), default=None)
    s.add_argument("--out", required=True, help="CSV path, or .pgm for sprite grids")
    s.add_argument("--record-trajectory", action="store_true")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="score generated samples against the reference data")
    e.add_argument("--samples", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--threshold", type=float, default=None)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of all parameter gradients")
    g.add_argument("--config", required=True)
    g.add_argument("--batch", type=int, default=6)
    g.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    si = sub.add_parser("schedule-inspect", help="print the schedule tables as CSV")
    si.add_argument("--config")
    si.add_argument("--T", type=int, default=1000)
    si.add_argument("--beta-start", type=float, default=1e-4)
    si.add_argument("--beta-end", type=float, default=0.02)
    si.add_argument("--out")
    si.set_defaults(func=cmd_schedule_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
