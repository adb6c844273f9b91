"""CoNLL-U dialogue treebank parsing and dependency-tree primitives.

Dialogue corpora are stored as plain 10-column CoNLL-U. Each sentence block
is one dialogue turn; its ``# sent_id`` comment carries the address in the
form ``<dialogue_id>-<turn_index>`` (turn indexes are 0-based and contiguous
per dialogue). An optional ``# speaker = X`` comment is preserved. Multiword
token ranges and empty nodes are skipped with a warning: the corpora handled
here consist of plain surface tokens only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


class ConlluParseError(ValueError):
    """Raised for malformed CoNLL-U input; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, slots=True)
class SurfaceToken:
    """One surface token of a turn.

    ``id`` is the 1-based position within the turn, ``head`` the id of the
    governing token (0 for the root). ``space_after`` is None when the source
    carried no spacing information; renderers then fall back to punctuation
    heuristics (see :func:`turnprobe.speech_filter.detokenize`).
    """

    id: int
    form: str
    head: int
    deprel: str
    space_after: bool | None = True


@dataclass(frozen=True, slots=True)
class TurnTree:
    """One dialogue turn as a dependency tree over surface tokens."""

    dialogue_id: str
    turn_index: int
    tokens: tuple[SurfaceToken, ...]
    speaker: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def sent_id(self) -> str:
        return f"{self.dialogue_id}-{self.turn_index}"

    def token(self, token_id: int) -> SurfaceToken:
        """Token by 1-based id (valid only on trees with contiguous ids)."""
        if not 1 <= token_id <= len(self.tokens):
            raise ValueError(f"token id {token_id} out of range 1..{len(self.tokens)}")
        return self.tokens[token_id - 1]

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]


@dataclass(frozen=True, slots=True)
class Dialogue:
    """An ordered sequence of turns sharing a dialogue id."""

    id: str
    turns: tuple[TurnTree, ...]


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """A single structural violation found by :func:`validate`."""

    rule: str
    token_id: int | None
    message: str


def children_map(tree: TurnTree) -> dict[int, list[int]]:
    """Map each token id (plus 0 for the virtual root) to its dependents."""
    children: dict[int, list[int]] = {0: []}
    for tok in tree.tokens:
        children.setdefault(tok.id, [])
    for tok in tree.tokens:
        children.setdefault(tok.head, []).append(tok.id)
    return children


def subtree(tree: TurnTree, token_id: int) -> set[int]:
    """Ids of ``token_id`` plus all of its transitive dependents."""
    n = len(tree.tokens)
    if not 1 <= token_id <= n:
        raise ValueError(f"token id {token_id} out of range 1..{n}")
    children = children_map(tree)
    result: set[int] = set()
    stack = [token_id]
    while stack:
        node = stack.pop()
        if node in result:
            continue
        result.add(node)
        stack.extend(children.get(node, ()))
    return result


def validate(tree: TurnTree) -> list[Diagnostic]:
    """Check the structural invariants of a turn tree.

    Returns one diagnostic per violation: non-contiguous ids, head out of
    range, self-headed token, zero or multiple roots, cycles, and tokens
    unreachable from the root. An empty list means the tree is sound.
    """
    diags: list[Diagnostic] = []
    n = len(tree.tokens)
    for pos, tok in enumerate(tree.tokens, start=1):
        if tok.id != pos:
            diags.append(Diagnostic("id-contiguity", tok.id, f"expected id {pos}, found {tok.id}"))
    for tok in tree.tokens:
        if not 0 <= tok.head <= n:
            diags.append(Diagnostic("head-range", tok.id, f"head {tok.head} outside [0, {n}]"))
        elif tok.head == tok.id:
            diags.append(Diagnostic("self-head", tok.id, "token is its own head"))
    roots = [t.id for t in tree.tokens if t.head == 0]
    if n > 0 and not roots:
        diags.append(Diagnostic("no-root", None, "no token has head 0"))
    for extra in roots[1:]:
        diags.append(Diagnostic("multiple-roots", extra, "more than one token has head 0"))
    if any(d.rule in ("id-contiguity", "head-range") for d in diags):
        # Reachability needs positionally indexable tokens and in-range heads.
        return diags

    reachable: set[int] = set()
    children = children_map(tree)
    stack = list(children[0])
    while stack:
        node = stack.pop()
        if node in reachable:
            continue
        reachable.add(node)
        stack.extend(children.get(node, ()))
    for tok in tree.tokens:
        if tok.id not in reachable:
            diags.append(Diagnostic("cycle" if _on_cycle(tree, tok.id) else "unreachable",
                                    tok.id, "token not reachable from the root"))
    return diags


def _on_cycle(tree: TurnTree, token_id: int) -> bool:
    node = tree.tokens[token_id - 1].head
    steps = 0
    while node != 0 and steps <= len(tree.tokens):
        if node == token_id:
            return True
        node = tree.tokens[node - 1].head
        steps += 1
    return False


def parse_conllu(text: str) -> list[Dialogue]:
    """Parse CoNLL-U text into dialogues grouped by id, turns ordered by index.

    Every returned tree satisfies the turn-tree invariants; violations raise
    :class:`ConlluParseError` naming the offending line.
    """
    blocks = _split_blocks(text)
    turns: list[TurnTree] = []
    block_lines: list[int] = []
    for start_line, lines in blocks:
        turn = _parse_block(start_line, lines)
        if turn is not None:
            turns.append(turn)
            block_lines.append(start_line)

    by_dialogue: dict[str, list[tuple[int, TurnTree]]] = {}
    seen: dict[tuple[str, int], int] = {}
    for line_no, turn in zip(block_lines, turns):
        key = (turn.dialogue_id, turn.turn_index)
        if key in seen:
            raise ConlluParseError(line_no, f"duplicate turn index {turn.turn_index} "
                                            f"in dialogue {turn.dialogue_id!r}")
        seen[key] = line_no
        by_dialogue.setdefault(turn.dialogue_id, []).append((line_no, turn))

    dialogues = []
    for d_id, entries in by_dialogue.items():
        entries.sort(key=lambda e: e[1].turn_index)
        for expected, (line_no, turn) in enumerate(entries):
            if turn.turn_index != expected:
                raise ConlluParseError(line_no, f"dialogue {d_id!r} turn indexes not "
                                                f"contiguous from 0 (found {turn.turn_index})")
        dialogues.append(Dialogue(id=d_id, turns=tuple(t for _, t in entries)))
    return dialogues


def _split_blocks(text: str) -> list[tuple[int, list[tuple[int, str]]]]:
    blocks = []
    current: list[tuple[int, str]] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "":
            if current:
                blocks.append((current[0][0], current))
                current = []
        else:
            current.append((line_no, line))
    if current:
        blocks.append((current[0][0], current))
    return blocks


def _parse_block(start_line: int, lines: list[tuple[int, str]]) -> TurnTree | None:
    sent_id: str | None = None
    speaker: str | None = None
    tokens: list[SurfaceToken] = []
    for line_no, line in lines:
        if line.startswith("#"):
            if "=" in line:
                key, value = line[1:].split("=", 1)
                key = key.strip()
                if key == "sent_id":
                    sent_id = value.strip()
                elif key == "speaker":
                    speaker = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(line_no, f"expected 10 tab-separated columns, got {len(cols)}")
        raw_id = cols[0]
        if "-" in raw_id or "." in raw_id:
            log.warning("line %d: skipping multiword-token range or empty node %r", line_no, raw_id)
            continue
        try:
            tok_id = int(raw_id)
        except ValueError:
            raise ConlluParseError(line_no, f"non-integer token id {raw_id!r}") from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(line_no, f"non-integer head {cols[6]!r}") from None
        misc = cols[9]
        space_after = not any(kv.strip() == "SpaceAfter=No" for kv in misc.split("|"))
        tokens.append(SurfaceToken(id=tok_id, form=cols[1], head=head,
                                   deprel=cols[7], space_after=space_after))
    if not tokens and sent_id is None:
        return None
    if sent_id is None:
        raise ConlluParseError(start_line, "sentence block lacks a # sent_id comment")
    if not tokens:
        raise ConlluParseError(start_line, f"turn {sent_id!r} has no tokens")
    dialogue_id, sep, idx_str = sent_id.rpartition("-")
    if not sep or not dialogue_id:
        raise ConlluParseError(start_line, f"sent_id {sent_id!r} does not match "
                                           "<dialogue_id>-<turn_index>")
    try:
        turn_index = int(idx_str)
    except ValueError:
        raise ConlluParseError(start_line, f"sent_id {sent_id!r} has non-integer "
                                           "turn index") from None
    tree = TurnTree(dialogue_id=dialogue_id, turn_index=turn_index,
                    tokens=tuple(tokens), speaker=speaker)
    diags = validate(tree)
    if diags:
        d = diags[0]
        raise ConlluParseError(start_line, _describe(d))
    return tree


def _describe(d: Diagnostic) -> str:
    names = {
        "head-range": "head out of range",
        "self-head": "token is its own head",
        "multiple-roots": "multiple roots",
        "no-root": "no root",
        "cycle": "cyclic tree",
        "unreachable": "token unreachable from root",
        "id-contiguity": "token ids not contiguous",
    }
    base = names.get(d.rule, d.rule)
    return f"{base} (token {d.token_id}: {d.message})" if d.token_id else f"{base}: {d.message}"


def serialize_conllu(dialogues: list[Dialogue]) -> str:
    """Inverse writer for :func:`parse_conllu`; round-trips structurally."""
    out: list[str] = []
    for dialogue in dialogues:
        for turn in dialogue.turns:
            out.append(f"# sent_id = {turn.sent_id}")
            if turn.speaker is not None:
                out.append(f"# speaker = {turn.speaker}")
            for tok in turn.tokens:
                misc = "_" if tok.space_after in (True, None) else "SpaceAfter=No"
                out.append("\t".join([str(tok.id), tok.form, "_", "_", "_", "_",
                                      str(tok.head), tok.deprel, "_", misc]))
            out.append("")
    return "\n".join(out) + ("\n" if out else "")
