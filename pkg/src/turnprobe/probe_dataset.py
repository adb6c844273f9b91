"""The probing dataset: per-token gold statuses in a canonical JSON layout.

The on-disk form (extension ``.probe.json``) maps each dialogue id to a list
of turns; a turn maps 1-based token indexes (decimal string keys, contiguous
``"1"``..``"n"``) to token records::

    {"token": "...", "status": false,
     "speech_type": {"discourse": true, "reparandum": false, "restart": false},
     "dep_type": "discourse"}

``speech_type`` is null exactly when ``status`` is true; when present, at
least one of its three booleans is true. The canonical serialization is
UTF-8, 4-space indented, with that key order, so fixtures can be diffed
byte-wise. A JSON-Schema copy of the layout ships in ``schema/``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .conllu import Dialogue, TurnTree, validate
from .speech_filter import (
    PHENOMENON_LABELS,
    PHENOMENON_NAMES,
    PhenomenonFlags,
    token_status,
)


class ProbeSchemaError(ValueError):
    """A probing-dataset file violates the schema; names the exact location."""


@dataclass(frozen=True, slots=True)
class ProbeToken:
    token: str
    status: bool
    speech_type: PhenomenonFlags | None
    dep_type: str

    def __post_init__(self):
        if self.status and self.speech_type is not None:
            raise ValueError("status-true token cannot carry speech_type flags")
        if not self.status and self.speech_type is None:
            raise ValueError("status-false token must carry speech_type flags")
        if self.speech_type is not None and not self.speech_type.any():
            raise ValueError("speech_type must set at least one flag")


ProbeTurn = dict[str, ProbeToken]


@dataclass(slots=True)
class ProbeDataset:
    """Gold statuses for every token of every turn, addressed positionally."""

    dialogues: dict[str, list[ProbeTurn]] = field(default_factory=dict)

    def turns(self):
        """Yield (dialogue_id, turn_index, turn) over the whole dataset."""
        for d_id, turn_list in self.dialogues.items():
            for idx, turn in enumerate(turn_list):
                yield d_id, idx, turn

    def turn(self, dialogue_id: str, turn_index: int) -> ProbeTurn:
        return self.dialogues[dialogue_id][turn_index]

    def __eq__(self, other):
        return isinstance(other, ProbeDataset) and self.dialogues == other.dialogues


def turn_tokens(turn: ProbeTurn) -> list[ProbeToken]:
    """Tokens of a turn in surface order."""
    return [turn[str(i)] for i in range(1, len(turn) + 1)]


@dataclass(frozen=True, slots=True)
class PhenomenonStat:
    labels: int
    tokens: int
    single: int

    @property
    def tokens_per_label(self) -> float | None:
        return self.tokens / self.labels if self.labels else None


@dataclass(frozen=True, slots=True)
class CorpusStats:
    true_tokens: int
    false_tokens: int
    turn_count: int
    phenomena: dict[str, PhenomenonStat]

    @property
    def total_tokens(self) -> int:
        return self.true_tokens + self.false_tokens

    @property
    def avg_true_per_turn(self) -> float:
        return self.true_tokens / self.turn_count if self.turn_count else 0.0


def build(dialogues: list[Dialogue]) -> ProbeDataset:
    """Derive the probing dataset from gold dependency trees."""
    dataset = ProbeDataset()
    for dialogue in dialogues:
        turn_list = []
        for tree in dialogue.turns:
            turn_list.append(build_turn(tree))
        dataset.dialogues[dialogue.id] = turn_list
    return dataset


def build_turn(tree: TurnTree) -> ProbeTurn:
    diags = validate(tree)
    if diags:
        d = diags[0]
        raise ValueError(f"invalid tree {tree.sent_id}: {d.rule} (token {d.token_id})")
    turn: ProbeTurn = {}
    for tok, st in zip(tree.tokens, token_status(tree)):
        turn[str(tok.id)] = ProbeToken(
            token=tok.form,
            status=st.status,
            speech_type=None if st.status else st.flags,
            dep_type=tok.deprel,
        )
    return turn


def to_jsonable(dataset: ProbeDataset) -> dict:
    payload: dict = {}
    for d_id, turn_list in dataset.dialogues.items():
        payload[d_id] = []
        for turn in turn_list:
            turn_obj = {}
            for i in range(1, len(turn) + 1):
                tok = turn[str(i)]
                speech_type = None
                if tok.speech_type is not None:
                    speech_type = {
                        "discourse": tok.speech_type.discourse,
                        "reparandum": tok.speech_type.reparandum,
                        "restart": tok.speech_type.restart,
                    }
                turn_obj[str(i)] = {
                    "token": tok.token,
                    "status": tok.status,
                    "speech_type": speech_type,
                    "dep_type": tok.dep_type,
                }
            payload[d_id].append(turn_obj)
    return payload


def dumps(dataset: ProbeDataset) -> str:
    """Canonical serialization: stable key order, 4-space indent, UTF-8."""
    return json.dumps(to_jsonable(dataset), ensure_ascii=False, indent=4) + "\n"


def save(dataset: ProbeDataset, path: str | Path) -> None:
    Path(path).write_text(dumps(dataset), encoding="utf-8")


def load(path: str | Path) -> ProbeDataset:
    """Load and schema-check a probing-dataset file."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProbeSchemaError(f"{path}: not valid JSON: {exc}") from exc
    return from_jsonable(payload, source=str(path))


def from_jsonable(payload, source: str = "<memory>") -> ProbeDataset:
    if not isinstance(payload, dict):
        raise ProbeSchemaError(f"{source}: top level must be an object of dialogues")
    dataset = ProbeDataset()
    for d_id, turn_list in payload.items():
        if not isinstance(turn_list, list):
            raise ProbeSchemaError(f"{source}: dialogue {d_id!r} must map to a list of turns")
        parsed_turns = []
        for t_idx, turn_obj in enumerate(turn_list):
            parsed_turns.append(_parse_turn(turn_obj, d_id, t_idx, source))
        dataset.dialogues[d_id] = parsed_turns
    return dataset


def _parse_turn(turn_obj, d_id: str, t_idx: int, source: str) -> ProbeTurn:
    where = f"{source}: dialogue {d_id!r} turn {t_idx}"
    if not isinstance(turn_obj, dict):
        raise ProbeSchemaError(f"{where}: turn must be an object keyed by token index")
    expected = {str(i) for i in range(1, len(turn_obj) + 1)}
    if set(turn_obj) != expected:
        raise ProbeSchemaError(f"{where}: token keys must be contiguous \"1\"..\"{len(turn_obj)}\""
                               f" (found {sorted(turn_obj)})")
    turn: ProbeTurn = {}
    for key in sorted(turn_obj, key=int):
        rec = turn_obj[key]
        turn[key] = _parse_token(rec, f"{where} token {key}")
    return turn


def _parse_token(rec, where: str) -> ProbeToken:
    if not isinstance(rec, dict):
        raise ProbeSchemaError(f"{where}: token record must be an object")
    missing = {"token", "status", "speech_type", "dep_type"} - set(rec)
    if missing:
        raise ProbeSchemaError(f"{where}: missing fields {sorted(missing)}")
    if not isinstance(rec["token"], str) or not isinstance(rec["dep_type"], str):
        raise ProbeSchemaError(f"{where}: token and dep_type must be strings")
    if not isinstance(rec["status"], bool):
        raise ProbeSchemaError(f"{where}: status must be a boolean")
    speech_type = rec["speech_type"]
    flags = None
    if speech_type is not None:
        if not isinstance(speech_type, dict) or set(speech_type) != set(PHENOMENON_NAMES) \
                or not all(isinstance(v, bool) for v in speech_type.values()):
            raise ProbeSchemaError(f"{where}: speech_type must be null or an object with "
                                   "boolean discourse/reparandum/restart")
        flags = PhenomenonFlags(**speech_type)
    try:
        return ProbeToken(token=rec["token"], status=rec["status"],
                          speech_type=flags, dep_type=rec["dep_type"])
    except ValueError as exc:
        raise ProbeSchemaError(f"{where}: {exc}") from exc


def stats(dataset: ProbeDataset) -> CorpusStats:
    """Corpus-level counts: status totals and per-phenomenon label/token tallies.

    ``labels`` counts tokens carrying the phenomenon's dependency label
    itself; ``tokens`` counts tokens flagged with the phenomenon; ``single``
    counts flagged tokens whose flag set is exactly that one phenomenon.
    """
    true_tokens = 0
    false_tokens = 0
    turn_count = 0
    label_of = {PHENOMENON_LABELS[name]: name for name in PHENOMENON_NAMES}
    labels = dict.fromkeys(PHENOMENON_NAMES, 0)
    tokens = dict.fromkeys(PHENOMENON_NAMES, 0)
    single = dict.fromkeys(PHENOMENON_NAMES, 0)
    for _, _, turn in dataset.turns():
        turn_count += 1
        for tok in turn_tokens(turn):
            if tok.status:
                true_tokens += 1
            else:
                false_tokens += 1
            if tok.dep_type in label_of:
                labels[label_of[tok.dep_type]] += 1
            if tok.speech_type is not None:
                flag_values = {
                    "discourse": tok.speech_type.discourse,
                    "reparandum": tok.speech_type.reparandum,
                    "restart": tok.speech_type.restart,
                }
                set_count = sum(flag_values.values())
                for name, is_set in flag_values.items():
                    if is_set:
                        tokens[name] += 1
                        if set_count == 1:
                            single[name] += 1
    return CorpusStats(
        true_tokens=true_tokens,
        false_tokens=false_tokens,
        turn_count=turn_count,
        phenomena={name: PhenomenonStat(labels[name], tokens[name], single[name])
                   for name in PHENOMENON_NAMES},
    )
