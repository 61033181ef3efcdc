"""Command-line entry point: train, eval, compare, verify, rerun.

Exit codes: 0 success, 1 usage error, 2 verification failure (including a
re-run whose outputs differ from the recorded ones).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness, verify
from .config import ConfigError, Scheme, SimConfig

log = logging.getLogger("gfnoma")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _policies(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    for n in names:
        if n not in harness.POLICIES:
            raise argparse.ArgumentTypeError(f"unknown policy {n!r}; choose from {harness.POLICIES}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file layered over the profile")
    common.add_argument("--profile", choices=harness.PROFILES, default="desk")
    common.add_argument("--scheme", choices=[s.value for s in Scheme])
    common.add_argument("--mode", choices=harness.MODES)
    common.add_argument("--seed", type=int)
    common.add_argument("--episodes", type=int)
    common.add_argument("--out-dir", type=Path)
    common.add_argument("--workers", type=int, default=1, help="parallel evaluation episodes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="gfnoma", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train a single or CMA controller")
    t.add_argument("--policy", type=_policies, help="must match --mode when given")

    e = sub.add_parser("eval", parents=[common], help="greedy evaluation of one policy")
    e.add_argument("--policy", type=_policies, default=["fixed"])
    e.add_argument("--checkpoint", help="directory holding the agent checkpoints")

    c = sub.add_parser("compare", parents=[common], help="served UEs of several policies")
    c.add_argument("--policy", type=_policies, required=True, help="comma list, first is the reference")
    c.add_argument("--checkpoint", help="directory holding the agent checkpoints")

    v = sub.add_parser("verify", help="run the oracle suites")
    v.add_argument("--suite", action="append", choices=sorted(verify.SUITES))

    r = sub.add_parser("rerun", help="repeat a run from its manifest and diff the outputs")
    r.add_argument("--manifest", type=Path, required=True)
    r.add_argument("--out-dir", type=Path, required=True)
    return p


def _mode(args) -> str:
    if args.mode:
        return args.mode
    policies = getattr(args, "policy", None) or []
    return "cma" if "cma" in policies else "single"


def _config(args, mode: str) -> SimConfig:
    cfg = harness.resolve_config(args.profile, mode, args.config, args.seed)
    if args.scheme:
        cfg = cfg.replace(scheme=Scheme(args.scheme))
    return cfg


def _finish(command: str, cfg: SimConfig, out_dir: Path, policies: list[str], extra: dict,
            artifacts: list[str]) -> None:
    text = harness.save_run_config(cfg, out_dir)
    manifest = harness.RunManifest(
        command=command,
        config=text,
        seed=cfg.seed,
        scheme=cfg.scheme.value,
        policy=policies,
        args=extra,
        artifacts=artifacts,
    )
    manifest.save(out_dir)
    for a in artifacts:
        print(out_dir / a)


def run_command(command: str, cfg: SimConfig, opts: dict, out_dir: Path) -> list[str]:
    """Execute a train/eval/compare run from resolved inputs; returns artifact names."""
    if command == "train":
        _, _, artifacts = harness.train_run(cfg, opts["mode"], out_dir)
    elif command == "eval":
        _, artifacts = harness.eval_run(
            cfg, opts["policy"][0], out_dir, opts["episodes"], opts.get("checkpoint"), opts["workers"]
        )
    elif command == "compare":
        rows, artifacts = harness.compare_run(
            cfg, opts["policy"], out_dir, opts["episodes"], opts.get("checkpoint"), opts["workers"]
        )
        for name, mean, std, n, ratio in rows:
            print(f"{name:<8} served {mean:10.2f} +- {std:8.2f} (n={n})  ratio {ratio:.3f}")
    else:
        raise harness.UsageError(f"cannot run {command!r}")
    return artifacts


def cmd_run(args) -> int:
    mode = _mode(args)
    policies = args.policy or [mode]
    if args.command == "train":
        if policies != [mode]:
            raise harness.UsageError(f"--policy {','.join(policies)} does not match --mode={mode}")
    elif args.command == "eval" and len(policies) != 1:
        raise harness.UsageError("eval takes exactly one policy")
    learned = [p for p in policies if p in harness.LEARNED]
    if args.command != "train" and any(p != mode for p in learned):
        raise harness.UsageError(f"--mode={mode} cannot evaluate {learned} checkpoints")
    cfg = _config(args, mode)
    if args.command == "train" and args.episodes is not None:
        cfg = cfg.replace(learn=dataclasses.replace(cfg.learn, episodes=args.episodes))
    episodes = args.episodes or harness.DEFAULT_EVAL_EPISODES
    checkpoint = getattr(args, "checkpoint", None)
    opts = {
        "mode": mode,
        "policy": policies,
        "episodes": episodes,
        "checkpoint": str(Path(checkpoint).resolve()) if checkpoint else None,
        "workers": args.workers,
    }
    out_dir = args.out_dir or Path("runs") / args.command
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = run_command(args.command, cfg, opts, out_dir)
    _finish(args.command, cfg, out_dir, policies, opts, artifacts)
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_all(args.suite)
    for r in results:
        print(r.line())
        for f in r.failures[:5]:
            print(f"    {f}")
    ok = all(r.passed for r in results)
    print("verify:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_rerun(args) -> int:
    manifest = harness.RunManifest.load(args.manifest)
    cfg = manifest.resolved_config()
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = run_command(manifest.command, cfg, manifest.args, out_dir)
    _finish(manifest.command, cfg, out_dir, manifest.policy, manifest.args, artifacts)
    src = args.manifest.parent
    differ = [a for a in manifest.artifacts if not harness.same_bytes(src / a, out_dir / a)]
    for a in manifest.artifacts:
        print(f"{'DIFF' if a in differ else 'same'}  {a}")
    return EXIT_VERIFY if differ else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "rerun":
            return cmd_rerun(args)
        return cmd_run(args)
    except (harness.UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"gfnoma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
