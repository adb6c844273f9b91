"""Few-shot prompt rendering and LLM-response recovery.

Templates live in text files with a YAML front-matter header (id, language,
mode, origin, examples) followed by the prompt body. The body carries two
placeholders: ``{EXAMPLES}`` for the rendered few-shot pairs and ``{INPUT}``
for the turn text under test, which always appears as a final
``INPUT: ... / OUTPUT:`` section so providers and mocks can locate it.

String-mode templates process one turn per request; JSON-mode templates
batch all turns of a dialogue into one JSON object. Response parsing is
tolerant: markdown fences are stripped, bare JSON keys are re-quoted, and
when JSON recovery fails the response is line-split, padding with empty
hypotheses so the output always covers the whole batch. Any such repair
marks the batch as degraded.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

MODES = ("string", "json")
LANGUAGES = ("en", "pl")


@dataclass(frozen=True, slots=True)
class PromptExample:
    input: str
    output: str
    label: str | None = None


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    id: str
    language: str
    mode: str
    body: str
    examples: tuple[PromptExample, ...]
    origin: str = "canonical"


@dataclass(frozen=True, slots=True)
class TurnBatch:
    """The turns one request covers: exactly one in string mode, a whole
    dialogue in JSON mode."""

    dialogue_id: str
    items: tuple[tuple[int, str], ...]
    mode: str


@dataclass(slots=True)
class ParsedResponse:
    items: list[tuple[int, str]]
    degraded: bool
    note: str = ""


def single_turn_batch(dialogue_id: str, turn_index: int, text: str) -> TurnBatch:
    return TurnBatch(dialogue_id=dialogue_id, items=((turn_index, text),), mode="string")


def dialogue_batch(dialogue_id: str, items: list[tuple[int, str]]) -> TurnBatch:
    return TurnBatch(dialogue_id=dialogue_id, items=tuple(items), mode="json")


def parse_template_text(text: str, source: str = "<memory>") -> PromptTemplate:
    match = re.match(r"\s*---\n(.*?)\n---\n(.*)\Z", text, re.DOTALL)
    if not match:
        raise ValueError(f"{source}: template needs a --- delimited front-matter header")
    header = yaml.safe_load(match.group(1))
    body = match.group(2)
    for key in ("id", "language", "mode"):
        if key not in header:
            raise ValueError(f"{source}: front matter lacks {key!r}")
    if header["mode"] not in MODES:
        raise ValueError(f"{source}: mode must be one of {MODES}")
    if header["language"] not in LANGUAGES:
        raise ValueError(f"{source}: language must be one of {LANGUAGES}")
    for placeholder in ("{EXAMPLES}", "{INPUT}"):
        if placeholder not in body:
            raise ValueError(f"{source}: body lacks the {placeholder} placeholder")
    examples = tuple(
        PromptExample(input=e["input"], output=e["output"], label=e.get("label"))
        for e in header.get("examples", ())
    )
    if header["mode"] == "json":
        for example in examples:
            for side in (example.input, example.output):
                try:
                    json.loads(side)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{source}: JSON-mode example is not valid JSON: "
                                     f"{exc}") from exc
    return PromptTemplate(
        id=header["id"],
        language=header["language"],
        mode=header["mode"],
        body=body,
        examples=examples,
        origin=header.get("origin", "canonical"),
    )


def available_templates() -> list[str]:
    ids = []
    for entry in resources.files("turnprobe").joinpath("templates").iterdir():
        if entry.name.endswith(".txt"):
            ids.append(entry.name[:-len(".txt")])
    return sorted(ids)


def load_template(source: str) -> PromptTemplate:
    """Load a template by shipped id or by filesystem path."""
    path = Path(source)
    if path.suffix and path.exists():
        return parse_template_text(path.read_text(encoding="utf-8"), source=str(path))
    candidate = resources.files("turnprobe").joinpath(f"templates/{source}.txt")
    if candidate.is_file():
        return parse_template_text(candidate.read_text(encoding="utf-8"), source=source)
    raise ValueError(f"unknown template {source!r}; shipped: {', '.join(available_templates())}")


def render(template: PromptTemplate, batch: TurnBatch) -> str:
    """Substitute the few-shot examples and the batch input into the body."""
    if template.mode != batch.mode:
        raise ValueError(f"template mode {template.mode!r} does not match "
                         f"batch mode {batch.mode!r}")
    if batch.mode == "string" and len(batch.items) != 1:
        raise ValueError("string-mode batches carry exactly one turn")
    if template.mode == "string":
        examples_block = "\n\n".join(
            (f"{ex.label}\n" if ex.label else "") + f"INPUT: {ex.input}\nOUTPUT: {ex.output}"
            for ex in template.examples
        )
        input_block = batch.items[0][1]
    else:
        examples_block = "\n\n".join(
            f"INPUT:\n```json\n{ex.input}\n```\n\nOUTPUT:\n```json\n{ex.output}\n```"
            for ex in template.examples
        )
        payload = {batch.dialogue_id: [text for _, text in batch.items]}
        input_block = "```json\n" + json.dumps(payload, ensure_ascii=False, indent=4) + "\n```"
    return template.body.replace("{EXAMPLES}", examples_block).replace("{INPUT}", input_block)


def extract_input_block(prompt: str) -> str:
    """The text under the final INPUT: section of a rendered prompt."""
    marker = prompt.rfind("\nINPUT:")
    if marker == -1:
        raise ValueError("prompt has no INPUT section")
    after = prompt[marker + len("\nINPUT:"):]
    cut = after.find("\nOUTPUT:")
    if cut != -1:
        after = after[:cut]
    return strip_fences(after.strip())


def strip_fences(text: str) -> str:
    t = text.strip()
    if not t.startswith("```"):
        return t
    first_nl = t.find("\n")
    if first_nl == -1:
        return t.strip("`").strip()
    inner = t[first_nl + 1:]
    if inner.rstrip().endswith("```"):
        inner = inner.rstrip()[:-3]
    return inner.strip("\n").strip()


def _strip_quotes(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def parse_response(template: PromptTemplate, batch: TurnBatch,
                   raw_text: str) -> ParsedResponse:
    """Recover per-turn hypotheses; always one entry per batch turn."""
    indexes = [idx for idx, _ in batch.items]
    if not raw_text or not raw_text.strip():
        return ParsedResponse([(i, "") for i in indexes], degraded=True,
                              note="empty response")
    if template.mode == "string":
        text = _strip_quotes(strip_fences(raw_text).strip())
        return ParsedResponse([(indexes[0], text)], degraded=False)

    stripped = strip_fences(raw_text)
    obj, malformed = _parse_json_payload(stripped)
    if obj is not None:
        turns = _turn_list(obj, batch.dialogue_id)
        if turns is not None and len(turns) == len(indexes) \
                and all(isinstance(t, str) for t in turns):
            note = "re-quoted bare JSON keys" if malformed else ""
            return ParsedResponse(list(zip(indexes, turns)), degraded=malformed, note=note)
    lines = _line_split(stripped, batch.dialogue_id)
    items = [(idx, lines[pos] if pos < len(lines) else "")
             for pos, idx in enumerate(indexes)]
    return ParsedResponse(items, degraded=True, note="line-splitting fallback")


def _parse_json_payload(text: str) -> tuple[dict | None, bool]:
    start = text.find("{")
    if start == -1:
        return None, True
    candidate = text[start:_balanced_end(text, start)]
    try:
        return json.loads(candidate), False
    except json.JSONDecodeError:
        pass
    requoted = re.sub(r'([{,]\s*)([A-Za-z_][A-Za-z0-9_.-]*)(\s*:)', r'\1"\2"\3', candidate)
    try:
        return json.loads(requoted), True
    except json.JSONDecodeError:
        return None, True


def _balanced_end(text: str, start: int) -> int:
    depth = 0
    in_string = False
    escaped = False
    for pos in range(start, len(text)):
        ch = text[pos]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return pos + 1
    return len(text)


def _turn_list(obj, dialogue_id: str) -> list | None:
    if not isinstance(obj, dict):
        return None
    if isinstance(obj.get(dialogue_id), list):
        return obj[dialogue_id]
    lists = [v for v in obj.values() if isinstance(v, list)]
    return lists[0] if len(lists) == 1 else None


_STRUCTURAL_LINES = {"{", "}", "[", "]", "{}", "[]", "```"}


def _line_split(text: str, dialogue_id: str) -> list[str]:
    out = []
    for line in text.splitlines():
        core = line.strip().rstrip(",").strip()
        if not core or core in _STRUCTURAL_LINES:
            continue
        if re.fullmatch(r'["\']?' + re.escape(dialogue_id) + r'["\']?\s*:\s*\[?', core):
            continue
        if re.fullmatch(r'(["\'][^"\']*["\']|[\w.-]+)\s*:\s*\[', core):
            continue
        out.append(_strip_quotes(core))
    return out
