"""Command-line entry point.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.

Files written (all under --out):

  plan        plan.csv            pan,tilt,entropy,ball_visible,is_best
  train       metrics.csv         step,episode,ep_reward,loss,epsilon
              episodes.csv        one EpisodeRecord per training episode
              epochs.csv          per-300-step means of the three criteria
              checkpoint.avqn     final network (see dqn.checkpoint for layout)
              training.png
  eval        eval_episodes.csv, episode_log.csv
              (episode,t,action,reward,pan,tilt,goal_pan,goal_tilt,outcome), eval_summary.json
  robustness  robustness.csv      sigma,method,mean_success_rate,n,stderr
              robustness.json, robustness.png
  render      frame.pgm           binary portable graymap (P5, maxval 255)
  selftest    selftest.txt
  field       field.csv           id,kind,x,y

Every run also writes config.resolved, the full configuration in the
same key = value format that --config reads.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from .config import RunConfig, echo_config, load_config, parse_overrides
from .errors import ConfigurationError, NumericalError, ResetError, TrainingError, UsageError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _add_globals(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="key = value configuration file")
    p.add_argument("--seed", type=int, default=d(None), help="master seed (unsigned 64-bit), overrides config")
    p.add_argument("--out", default=d("activevision-out"), help="output directory (created if missing)")
    p.add_argument("--set", dest="overrides", action="append", default=d([]), metavar="KEY=VALUE",
                   help="override one configuration key; repeatable")


def build_parser():
    parser = _Parser(prog="activevision", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        _add_globals(p, suppress=True)
        return p

    p = cmd("plan", "score all grid viewpoints for one pose and ball, print the table as CSV")
    p.add_argument("--pose", nargs=3, type=float, default=(0.0, 0.0, 0.0), metavar=("X", "Y", "THETA"))
    p.add_argument("--ball", nargs=2, type=float, default=(1.5, 0.0), metavar=("X", "Y"))

    cmd("train", "train the double-DQN policy; writes metrics, checkpoint and figures")

    p = cmd("eval", "run seeded evaluation episodes and summarise them")
    p.add_argument("--checkpoint", help="network checkpoint for the learned policy")
    p.add_argument("--policy", choices=("learned", "random", "planner", "oracle"), default="learned")
    p.add_argument("--episodes", type=int, help="number of episodes (default: eval_episodes)")

    p = cmd("robustness", "success rate against localisation error, planner vs learned policy")
    p.add_argument("--checkpoint", help="network checkpoint for the learned policy")
    p.add_argument("--episodes", type=int, help="episodes per error level (default: robustness_episodes)")
    p.add_argument("--sigmas", help="comma-separated error levels (default: robustness_sigmas)")

    p = cmd("render", "write one synthetic camera frame as a portable graymap")
    p.add_argument("--pose", nargs=3, type=float, default=(0.0, 0.0, 0.0), metavar=("X", "Y", "THETA"))
    p.add_argument("--cam", nargs=2, type=float, default=(0.0, math.pi / 6), metavar=("PAN", "TILT"))
    p.add_argument("--ball", nargs=2, type=float, default=(1.5, 0.0), metavar=("X", "Y"))
    p.add_argument("--name", default="frame.pgm")

    p = cmd("selftest", "compare production routines against independent oracles")
    p.add_argument("--check", action="append", help="run only the named check; repeatable")
    p.add_argument("--list", action="store_true", help="list check names and exit")

    p = cmd("plot", "render figures from CSV/JSON already present in a run directory")
    p.add_argument("--dir", help="run directory (default: --out)")

    cmd("field", "export the landmark table")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = parse_overrides(args.overrides, cfg)
    if args.seed is not None:
        cfg = parse_overrides([("seed", str(args.seed))], cfg)
    return cfg.validate()


def _say(*parts):
    print(*parts, flush=True)


def _note(msg):
    print(msg, file=sys.stderr, flush=True)


def _make_env(cfg: RunConfig, seed=None):
    from .env import HeadControlEnv
    return HeadControlEnv(cfg.field_model(), cfg.intrinsics(), cfg.thresholds(), cfg.grid(), cfg.ukf_params(),
                          cfg.noise(), cfg.env_config(), seed=seed)


def _load_params(cfg, path):
    from .dqn.checkpoint import load_checkpoint
    from .dqn.network import Architecture
    from .env import action_count
    if not path:
        raise UsageError("this command needs --checkpoint")
    if not Path(path).is_file():
        raise UsageError(f"checkpoint {path} does not exist")
    arch = Architecture(cfg.image_height, cfg.image_width, cfg.stack, action_count(cfg.env_config()))
    params, _ = load_checkpoint(path, expect=arch)
    return params


# -- subcommands ---------------------------------------------------------

def cmd_plan(args, cfg, out):
    from .belief import GaussianBelief
    from .geometry import Pose2D
    from .metrics import write_rows
    from .planner import best_viewpoint
    belief = GaussianBelief.around(Pose2D(*args.pose), cfg.initial_sigma_xy, cfg.initial_sigma_theta)
    res = best_viewpoint(belief, tuple(args.ball), cfg.field_model(), cfg.grid(), cfg.thresholds(),
                         cfg.intrinsics(), cfg.ukf_params(), cfg.noise(), cfg.ball_margin)
    rows = [(c.cam.pan, c.cam.tilt, c.entropy, int(c.ball_visible), int(i == res.best_index))
            for i, c in enumerate(res.per_candidate)]
    header = ("pan", "tilt", "entropy", "ball_visible", "is_best")
    path = write_rows(out / "plan.csv", header, rows)
    sys.stdout.write(path.read_text())
    if res.fallback:
        _note("no candidate keeps the ball in view; best is the fallback viewpoint")
    return EXIT_OK


def cmd_train(args, cfg, out):
    import csv

    from .dqn.agent import Trainer
    from .dqn.checkpoint import save_checkpoint
    from .metrics import epoch_aggregate, write_epochs_csv, write_records_csv, _fmt
    from .plotting import plot_training
    from .seeding import stream, stream_seed

    seed = cfg.seed
    env = _make_env(cfg, stream_seed(seed, "env"))
    trainer = Trainer(env, cfg.trainer_config(), stream(seed, "weights"), stream(seed, "explore"),
                      stream(seed, "buffer"))
    t0 = time.perf_counter()
    with (out / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "episode", "ep_reward", "loss", "epsilon"])

        def on_episode(log, rec):
            w.writerow([_fmt(v) for v in (log.step, log.episode, log.ep_reward, log.loss, log.epsilon)])
            if log.episode % 100 == 0:
                fh.flush()
                _note(f"step {log.step + 1}/{cfg.total_steps} episode {log.episode} "
                      f"epsilon {log.epsilon:.3f} ({time.perf_counter() - t0:.0f}s)")

        def on_step(step):
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_{step + 1:07d}.avqn", trainer.params, trainer.arch)

        history = trainer.run(on_episode, on_step)
    save_checkpoint(out / "checkpoint.avqn", trainer.params, trainer.arch)
    write_records_csv(out / "episodes.csv", history.records)
    epochs = epoch_aggregate(history.records, cfg.epoch_steps, math.ceil(cfg.total_steps / cfg.epoch_steps))
    write_epochs_csv(out / "epochs.csv", epochs)
    plot_training(out / "epochs.csv", out / "training.png", out / "metrics.csv")
    tail = [e.mean_success_rate for e in epochs[-5:] if not e.empty]
    _say(f"episodes: {len(history.records)}")
    _say(f"updates: {trainer.updates}")
    _say(f"stale_priority_updates: {trainer.buffer.stale_updates}")
    _say(f"final_5_epoch_success_rate: {sum(tail) / len(tail) if tail else float('nan'):.4f}")
    _note(f"trained {cfg.total_steps} steps in {time.perf_counter() - t0:.0f}s")
    return EXIT_OK


def _policy(args, cfg):
    from .robustness import EntropyPlannerPolicy, LearnedPolicy, OraclePolicy, RandomPolicy
    from .seeding import stream
    if args.policy == "learned":
        return LearnedPolicy(_load_params(cfg, args.checkpoint))
    if args.policy == "random":
        return RandomPolicy(stream(cfg.seed, "explore"))
    if args.policy == "planner":
        return EntropyPlannerPolicy(0.0, stream(cfg.seed, "noise"), cfg.robustness_replan)
    return OraclePolicy()


def cmd_eval(args, cfg, out):
    from .metrics import records_summary, write_records_csv, write_rows
    from .robustness import EPISODE_LOG_HEADER, evaluate
    n = args.episodes if args.episodes is not None else cfg.eval_episodes
    if n < 1:
        raise UsageError("--episodes must be >= 1")
    policy = _policy(args, cfg)
    env = _make_env(cfg)
    log = []
    records = evaluate(env, policy, n, cfg.seed, log)
    write_records_csv(out / "eval_episodes.csv", records)
    write_rows(out / "episode_log.csv", EPISODE_LOG_HEADER, log)
    summary = {"policy": args.policy, **records_summary(records)}
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for k, v in summary.items():
        _say(f"{k}: {v:.4f}" if isinstance(v, float) else f"{k}: {v}")
    return EXIT_OK


def cmd_robustness(args, cfg, out):
    from .plotting import plot_robustness
    from .robustness import run_robustness
    params = _load_params(cfg, args.checkpoint)
    n = args.episodes if args.episodes is not None else cfg.robustness_episodes
    if n < 2:
        raise UsageError("--episodes must be >= 2")
    sigmas = cfg.robustness_sigmas
    if args.sigmas:
        sigmas = parse_overrides([("robustness_sigmas", args.sigmas)], cfg).validate().robustness_sigmas
    env = _make_env(cfg)
    curve = run_robustness(env, params, sigmas, n, cfg.seed, cfg.robustness_replan,
                           progress=lambda p: _note(f"sigma {p.sigma:g} {p.method}: "
                                                    f"{p.mean_success_rate:.3f} +/- {p.stderr:.3f}"))
    curve.write_csv(out / "robustness.csv")
    curve.write_json(out / "robustness.json")
    plot_robustness(out / "robustness.json", out / "robustness.png")
    sys.stdout.write((out / "robustness.csv").read_text())
    return EXIT_OK


def cmd_render(args, cfg, out):
    from .camera import CameraPosition, render
    from .geometry import Pose2D
    from .seeding import stream_seed
    img = render(Pose2D(*args.pose), CameraPosition(*args.cam), cfg.intrinsics(), cfg.field_model(),
                 tuple(args.ball), cfg.render_noise, stream_seed(cfg.seed, "noise"))
    name = Path(args.name).name
    path = img.write_pgm(out / name)
    _say(str(path))
    return EXIT_OK


def cmd_selftest(args, cfg, out):
    from .selftest import CHECKS, run_checks
    if args.list:
        _say("\n".join(CHECKS))
        return EXIT_OK
    names = args.check or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s) {unknown}; choose from {list(CHECKS)}")
    results = run_checks(names, cfg.seed, emit=lambda r: _say(r.line()))
    (out / "selftest.txt").write_text("".join(r.line() + "\n" for r in results))
    failed = [r.name for r in results if not r.passed]
    _say(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_plot(args, cfg, out):
    from .plotting import plot_directory
    target = Path(args.dir) if args.dir else out
    written = plot_directory(target)
    if not written:
        raise UsageError(f"{target}: nothing to plot (need epochs.csv or robustness.json)")
    for p in written:
        _say(str(p))
    return EXIT_OK


def cmd_field(args, cfg, out):
    from .field import export_landmarks_csv
    _say(str(export_landmarks_csv(cfg.field_model(), out / "field.csv")))
    return EXIT_OK


COMMANDS = {"plan": cmd_plan, "train": cmd_train, "eval": cmd_eval, "robustness": cmd_robustness,
            "render": cmd_render, "selftest": cmd_selftest, "plot": cmd_plot, "field": cmd_field}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        echo_config(cfg, out)
        return COMMANDS[args.command](args, cfg, out)
    except (UsageError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ResetError, TrainingError, OSError, ValueError) as e:
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
