"""End-to-end orchestration: dataset building, synthesis, runs, scoring.

A run directory is self-contained and resumable::

    runs/<name>/
        manifest.json      # config snapshot + one record per turn
        responses/         # per-turn hypothesis records
        cache/             # content-addressed raw completions
        reports/           # written by the scoring step

The manifest plus response records suffice to re-score without touching any
provider. JSON-mode batches whose estimated completion size exceeds the
configured token budget are transparently split into per-turn string-mode
requests (using the same-language string template) and logged as such.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .align import align, tokenize_hypothesis
from .conllu import Dialogue, parse_conllu, serialize_conllu
from .llm_gateway import (
    AuthMissingError,
    GenerationRequest,
    MockOracle,
    Provider,
    ProviderConfig,
    ProviderRequestError,
    ProviderTransientError,
    build_provider,
    generate,
)
from .metrics import (
    aggregate,
    category_omissions,
    cpt,
    macro_scores,
    oov_report,
    phenomenon_ratios,
    score_turn,
)
from .probe_dataset import ProbeDataset, build, load, save, stats, turn_tokens
from .prompt_kit import (
    PromptTemplate,
    TurnBatch,
    dialogue_batch,
    load_template,
    parse_response,
    render,
    single_turn_batch,
)
from .reports import (
    build_report_payload,
    render_categories_csv,
    render_markdown,
    render_metrics_csv,
    render_phenomena_csv,
)
from .speech_filter import detokenize, join_forms
from .synth_corpus import InjectionSpec, clean_turns, generate_corpus

log = logging.getLogger(__name__)

TASKS = ("well-structure", "discourse", "reparandum", "restart", "all")


class DataError(ValueError):
    """Inputs exist but are unusable (missing turns, bad schema, bad paths)."""


@dataclass(slots=True)
class RunConfig:
    corpus_path: str
    dataset_path: str
    run_dir: str
    provider: ProviderConfig = dataclasses.field(default_factory=ProviderConfig)
    template_id: str = "extract-en-string"
    task: str = "well-structure"
    seed: int = 0
    max_tokens: int | None = None
    script: dict[str, str] | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")

    @property
    def run_name(self) -> str:
        return Path(self.run_dir).name


def config_from_dict(raw: dict) -> RunConfig:
    provider = ProviderConfig(**raw.get("provider", {}))
    fields = {k: v for k, v in raw.items() if k != "provider"}
    return RunConfig(provider=provider, **fields)


def _safe_name(address: str) -> str:
    return re.sub(r"[^\w.-]", "_", address)


def _write_text(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    tmp.replace(path)


def build_dataset_file(conllu_path: str | Path, out_path: str | Path) -> ProbeDataset:
    text = Path(conllu_path).read_text(encoding="utf-8")
    dialogues = parse_conllu(text)
    dataset = build(dialogues)
    save(dataset, out_path)
    return dataset


def synthesize_corpus(out_dir: str | Path, turns: int, spec: InjectionSpec,
                      templates_path: str | Path | None = None,
                      ) -> tuple[Path, Path]:
    templates = None
    if templates_path is not None:
        parsed = parse_conllu(Path(templates_path).read_text(encoding="utf-8"))
        templates = [turn for dialogue in parsed for turn in dialogue.turns]
    base = clean_turns(turns, spec.seed, templates)
    dialogues, dataset = generate_corpus(base, spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_path = out / "corpus.conllu"
    dataset_path = out / "corpus.probe.json"
    _write_text(corpus_path, serialize_conllu(dialogues))
    save(dataset, dataset_path)
    return corpus_path, dataset_path


def format_stats_table(dataset: ProbeDataset) -> str:
    s = stats(dataset)
    lines = [
        f"turns            {s.turn_count}",
        f"tokens           {s.total_tokens}",
        f"status true      {s.true_tokens}",
        f"status false     {s.false_tokens}",
        f"avg true / turn  {s.avg_true_per_turn:.2f}",
        "",
        "phenomenon   labels  tokens  single  tokens/label",
    ]
    for name, row in s.phenomena.items():
        per_label = f"{row.tokens_per_label:.2f}" if row.tokens_per_label is not None else "n/a"
        lines.append(f"{name:<12} {row.labels:>6}  {row.tokens:>6}  {row.single:>6}  "
                     f"{per_label:>12}")
    return "\n".join(lines)


def _estimate_completion_tokens(texts: list[str]) -> int:
    # Rough chat-model budget: ~4 chars per token plus per-turn JSON overhead.
    return sum(len(t) // 4 + 8 for t in texts)


@dataclass(slots=True)
class _PlannedBatch:
    batch: TurnBatch
    template: PromptTemplate
    split: bool


def _plan_batches(dialogues: list[Dialogue], template: PromptTemplate,
                  config: RunConfig) -> list[_PlannedBatch]:
    planned: list[_PlannedBatch] = []
    string_template: PromptTemplate | None = None
    for dialogue in dialogues:
        texts = [(t.turn_index, detokenize(list(t.tokens))) for t in dialogue.turns]
        if template.mode == "string":
            planned.extend(
                _PlannedBatch(single_turn_batch(dialogue.id, idx, text), template, False)
                for idx, text in texts
            )
            continue
        estimate = _estimate_completion_tokens([text for _, text in texts])
        if config.max_tokens is not None and estimate > config.max_tokens:
            if string_template is None:
                sibling = template.id.replace("json", "string")
                string_template = load_template(sibling)
            log.info("dialogue %s: estimated %d completion tokens exceed %d; "
                     "split into per-turn string requests",
                     dialogue.id, estimate, config.max_tokens)
            planned.extend(
                _PlannedBatch(single_turn_batch(dialogue.id, idx, text),
                              string_template, True)
                for idx, text in texts
            )
        else:
            planned.append(_PlannedBatch(dialogue_batch(dialogue.id, texts), template, False))
    return planned


def run_experiment(config: RunConfig) -> dict:
    """Query the provider for every turn and persist responses + manifest."""
    dialogues = parse_conllu(Path(config.corpus_path).read_text(encoding="utf-8"))
    dataset = load(config.dataset_path)
    template = load_template(config.template_id)
    oracle = None
    if config.provider.kind in ("mock-gold", "mock-scripted"):
        oracle = MockOracle(dataset, dialogues)
    provider = build_provider(config.provider, oracle=oracle, script=config.script)

    run_dir = Path(config.run_dir)
    (run_dir / "responses").mkdir(parents=True, exist_ok=True)
    cache_dir = run_dir / "cache"
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    planned = _plan_batches(dialogues, template, config)
    records: list[dict] = []
    fatal: Exception | None = None
    try:
        _execute_batches(planned, provider, config, cache_dir, records)
    except (AuthMissingError, ProviderRequestError) as exc:
        fatal = exc

    manifest = {
        "tool_version": __version__,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "complete": fatal is None,
        "config": dataclasses.asdict(config),
        "turns": sorted(records, key=lambda r: (r["dialogue_id"], r["turn_index"])),
    }
    for record in manifest["turns"]:
        _write_text(run_dir / "responses" / f"{_safe_name(record['address'])}.json",
                    json.dumps(record, ensure_ascii=False, indent=2))
    _write_text(run_dir / "manifest.json",
                json.dumps(manifest, ensure_ascii=False, indent=2))
    if fatal is not None:
        raise fatal
    return manifest


def _execute_batches(planned: list[_PlannedBatch], provider: Provider,
                     config: RunConfig, cache_dir: Path,
                     records: list[dict]) -> None:
    prompts = [render(p.template, p.batch) for p in planned]
    requests_ = [
        GenerationRequest(model=config.provider.model, prompt=prompt,
                          max_tokens=config.max_tokens)
        for prompt in prompts
    ]
    max_parallel = max(1, config.provider.max_parallel)
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        futures = [pool.submit(generate, provider, req, cache_dir) for req in requests_]
        for plan, request, future in zip(planned, requests_, futures):
            try:
                result = future.result()
            except ProviderTransientError as exc:
                log.warning("batch %s: no response (%s)", plan.batch.dialogue_id, exc)
                for idx, _ in plan.batch.items:
                    records.append(_turn_record(plan, idx, "", degraded=True,
                                                cached=False, request_hash="",
                                                note=f"no response: {exc}"))
                continue
            parsed = parse_response(plan.template, plan.batch, result.text)
            for idx, hypothesis in parsed.items:
                records.append(_turn_record(plan, idx, hypothesis,
                                            degraded=parsed.degraded,
                                            cached=result.cached,
                                            request_hash=result.request_hash,
                                            note=parsed.note))


def _turn_record(plan: _PlannedBatch, turn_index: int, hypothesis: str, *,
                 degraded: bool, cached: bool, request_hash: str, note: str) -> dict:
    d_id = plan.batch.dialogue_id
    return {
        "address": f"{d_id}-{turn_index}",
        "dialogue_id": d_id,
        "turn_index": turn_index,
        "hypothesis": hypothesis,
        "degraded": degraded,
        "split": plan.split,
        "cached": cached,
        "request_hash": request_hash,
        "provider": plan.template.mode,
        "note": note,
    }


def score_run(run_dir: str | Path, dataset_path: str | Path,
              task: str = "well-structure") -> dict:
    """Score a finished run against the probing dataset and write reports."""
    if task not in TASKS:
        raise DataError(f"task must be one of {TASKS}, got {task!r}")
    run_dir = Path(run_dir)
    dataset = load(dataset_path)
    responses_dir = run_dir / "responses"

    alignments = []
    counts = []
    hyp_texts = []
    gold_texts = []
    input_token_lists = []
    hyp_token_lists = []
    per_turn = []
    for d_id, idx, turn in dataset.turns():
        address = f"{d_id}-{idx}"
        path = responses_dir / f"{_safe_name(address)}.json"
        if not path.exists():
            raise DataError(f"turn {address} has no response record in {responses_dir}")
        record = json.loads(path.read_text(encoding="utf-8"))
        tokens = turn_tokens(turn)
        input_tokens = [t.token for t in tokens]
        statuses = [t.status for t in tokens]
        hyp_tokens = tokenize_hypothesis(record["hypothesis"])
        alignment = align(input_tokens, hyp_tokens)
        turn_counts = score_turn(alignment, statuses)
        alignments.append(alignment)
        counts.append(turn_counts)
        hyp_texts.append(record["hypothesis"])
        gold_texts.append(join_forms([t.token for t in tokens if t.status]))
        input_token_lists.append(input_tokens)
        hyp_token_lists.append(hyp_tokens)
        per_turn.append({
            "address": address,
            "dialogue_id": d_id,
            "turn_index": idx,
            "tp": turn_counts.tp, "fp": turn_counts.fp,
            "tn": turn_counts.tn, "fn": turn_counts.fn,
            "hypothesis_chars": len(record["hypothesis"].strip()),
            "degraded": record.get("degraded", False),
            "split": record.get("split", False),
        })

    metrics = aggregate(counts)
    metrics.cpt = cpt(hyp_texts)
    metrics.gold_cpt = cpt(gold_texts)
    oov = oov_report(alignments, input_token_lists, hyp_token_lists)
    metrics.oov_total = oov.total
    payload = build_report_payload(
        run_name=run_dir.name,
        task=task,
        metrics=metrics,
        macro=macro_scores(counts),
        phenomena=phenomenon_ratios(alignments, dataset, task),
        categories=category_omissions(alignments, dataset),
        oov=oov,
        per_turn=per_turn,
    )
    reports_dir = run_dir / "reports"
    _write_text(reports_dir / "report.json",
                json.dumps(payload, ensure_ascii=False, indent=2))
    _write_text(reports_dir / "metrics.csv", render_metrics_csv(payload))
    _write_text(reports_dir / "phenomena.csv", render_phenomena_csv(payload))
    _write_text(reports_dir / "categories.csv", render_categories_csv(payload))
    _write_text(reports_dir / "report.md", render_markdown(payload))
    return payload
