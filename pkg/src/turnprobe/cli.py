"""Command-line entry point.

Subcommands: ``build-dataset``, ``synth``, ``run``, ``score``. Exit codes:
0 success, 1 usage error, 2 data error, 3 provider error. ``run`` accepts a
YAML or JSON config file whose keys mirror RunConfig; any flag overrides
the corresponding config key. The API key is never a flag: only the name
of the environment variable holding it is configured.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .conllu import ConlluParseError
from .llm_gateway import GatewayError, ProviderConfig
from .probe_dataset import ProbeSchemaError, load, stats
from .runner import (
    DataError,
    RunConfig,
    build_dataset_file,
    config_from_dict,
    format_stats_table,
    run_experiment,
    score_run,
    synthesize_corpus,
)
from .synth_corpus import InjectionSpec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="turnprobe",
                     description="Probe LLM extraction of well-structured "
                                 "utterances from noisy dialogue turns.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_build = sub.add_parser("build-dataset",
                             help="derive a probing dataset from a CoNLL-U corpus")
    p_build.add_argument("conllu", help="input CoNLL-U dialogue corpus")
    p_build.add_argument("out", help="output .probe.json path")

    p_synth = sub.add_parser("synth", help="generate a synthetic noisy corpus")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--turns", type=int, default=100)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--discourse-rate", type=float, default=0.1)
    p_synth.add_argument("--reparandum-rate", type=float, default=0.25)
    p_synth.add_argument("--restart-rate", type=float, default=0.2)
    p_synth.add_argument("--templates", help="clean-turn CoNLL-U inventory "
                                             "(defaults to the shipped one)")

    p_run = sub.add_parser("run", help="prompt a provider over a corpus")
    p_run.add_argument("--config", help="YAML/JSON run config; flags override it")
    p_run.add_argument("--corpus", help="noisy corpus CoNLL-U path")
    p_run.add_argument("--dataset", help="probing dataset path")
    p_run.add_argument("--run-dir", help="output run directory")
    p_run.add_argument("--template", help="prompt template id or path")
    p_run.add_argument("--task", choices=("well-structure", "discourse",
                                          "reparandum", "restart", "all"))
    p_run.add_argument("--provider", help="provider kind: http-chat, mock-gold, "
                                          "mock-identity, mock-scripted")
    p_run.add_argument("--model")
    p_run.add_argument("--base-url")
    p_run.add_argument("--auth-env", help="name of the env var holding the API key")
    p_run.add_argument("--timeout", type=float)
    p_run.add_argument("--max-retries", type=int)
    p_run.add_argument("--max-parallel", type=int)
    p_run.add_argument("--max-tokens", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--script", help="JSON file mapping turn addresses to "
                                        "mock-scripted transformations")

    p_score = sub.add_parser("score", help="score a finished run")
    p_score.add_argument("--run-dir", required=True)
    p_score.add_argument("--dataset", required=True)
    p_score.add_argument("--task", default="well-structure",
                         choices=("well-structure", "discourse", "reparandum",
                                  "restart", "all"))
    return parser


def _cmd_build_dataset(args) -> int:
    dataset = build_dataset_file(args.conllu, args.out)
    print(f"wrote {args.out}")
    print(format_stats_table(dataset))
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        spec = InjectionSpec(seed=args.seed, discourse_rate=args.discourse_rate,
                             reparandum_rate=args.reparandum_rate,
                             restart_rate=args.restart_rate)
    except ValueError as exc:
        print(f"turnprobe synth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    corpus_path, dataset_path = synthesize_corpus(args.out, args.turns, spec,
                                                  args.templates)
    print(f"wrote {corpus_path}")
    print(f"wrote {dataset_path}")
    print(format_stats_table(load(dataset_path)))
    return EXIT_OK


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(text)
    return yaml.safe_load(text)


def _cmd_run(args) -> int:
    raw: dict = {}
    if args.config:
        raw = _load_config_file(args.config) or {}
    provider_raw = dict(raw.get("provider", {}))
    for flag, key in (("provider", "kind"), ("model", "model"), ("base_url", "base_url"),
                      ("auth_env", "auth_env"), ("timeout", "timeout"),
                      ("max_retries", "max_retries"), ("max_parallel", "max_parallel")):
        value = getattr(args, flag)
        if value is not None:
            provider_raw[key] = value
    for flag, key in (("corpus", "corpus_path"), ("dataset", "dataset_path"),
                      ("run_dir", "run_dir"), ("template", "template_id"),
                      ("task", "task"), ("max_tokens", "max_tokens"),
                      ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            raw[key] = value
    if args.script:
        raw["script"] = json.loads(Path(args.script).read_text(encoding="utf-8"))
    raw["provider"] = provider_raw
    missing = [k for k in ("corpus_path", "dataset_path", "run_dir") if not raw.get(k)]
    if missing:
        print(f"turnprobe run: error: missing {', '.join(missing)} "
              "(flag or config key)", file=sys.stderr)
        return EXIT_USAGE
    try:
        config: RunConfig = config_from_dict(raw)
    except (TypeError, ValueError) as exc:
        print(f"turnprobe run: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path_key in ("corpus_path", "dataset_path"):
        if not Path(getattr(config, path_key)).exists():
            raise DataError(f"{path_key} {getattr(config, path_key)!r} does not exist")
    manifest = run_experiment(config)
    cached = sum(1 for r in manifest["turns"] if r["cached"])
    print(f"run complete: {len(manifest['turns'])} turns "
          f"({cached} cached) in {config.run_dir}")
    return EXIT_OK


def _cmd_score(args) -> int:
    payload = score_run(args.run_dir, args.dataset, args.task)
    m = payload["metrics"]

    def fmt(v):
        return "n/a" if v is None else (f"{v:.4f}" if isinstance(v, float) else str(v))

    print(f"scored {len(payload['per_turn'])} turns -> {Path(args.run_dir) / 'reports'}")
    print("  " + "  ".join(f"{k}={fmt(m[k])}" for k in
                           ("accuracy", "precision", "recall", "f1", "tnr", "cpt")))
    print("  oov=" + fmt(m["oov_total"]))
    return EXIT_OK


_HANDLERS = {
    "build-dataset": _cmd_build_dataset,
    "synth": _cmd_synth,
    "run": _cmd_run,
    "score": _cmd_score,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except (ConlluParseError, ProbeSchemaError, DataError, FileNotFoundError) as exc:
        print(f"turnprobe {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GatewayError as exc:
        print(f"turnprobe {args.command}: provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
