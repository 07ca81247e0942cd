"""Command line entry point: ``bisonet <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from .config import ConfigError, PipelineConfig, load_config
from .pipeline import STAGES, Pipeline, PipelineError, StageError, cmd_inspect_topic, cmd_report


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.corpus:
        cfg = cfg.override("corpus.path", args.corpus)
    if args.seed is not None:
        cfg = cfg.override("seed", args.seed)
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        cfg = cfg.override(key.strip(), yaml.safe_load(value))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bisonet", description="Find bridging topics between text domains and build a BisoNet."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in STAGES + ("run",):
        p = sub.add_parser(name, help="run all stages" if name == "run" else f"run the {name} stage")
        p.add_argument("-c", "--config", help="YAML or JSON config file")
        p.add_argument("--corpus", help="override corpus.path")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("-o", "--output-dir", help="run directory (overrides config and env)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. topics.n_topics=50")
        p.add_argument("--force", action="store_true", help="rerun stages even if up to date")

    p = sub.add_parser("report", help="write Markdown/CSV reports for a completed run")
    p.add_argument("run_dir")

    p = sub.add_parser("inspect-topic", help="show a topic's words, score and top documents")
    p.add_argument("run_dir")
    p.add_argument("--domain", required=True, help="domain name or index")
    p.add_argument("--topic", type=int, required=True)
    p.add_argument("--top-n", type=int, default=5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "report":
            paths = cmd_report(args.run_dir)
            for p in paths.values():
                print(p)
            return 0
        if args.command == "inspect-topic":
            sys.stdout.write(cmd_inspect_topic(args.run_dir, args.domain, args.topic, args.top_n))
            return 0
        cfg = _config_from_args(args)
        pipe = Pipeline(cfg, run_dir=args.output_dir, force=args.force)
        stages = STAGES if args.command == "run" else (args.command,)
        pipe.run(stages)
        print(pipe.run_dir / "manifest.json")
        return 0
    except StageError as exc:
        print(f"bisonet: error [{exc.stage}]: {exc.cause}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"bisonet: config error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, KeyError, OSError, ValueError) as exc:
        print(f"bisonet: error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
