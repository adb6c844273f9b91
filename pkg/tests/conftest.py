from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import strategies as st

from turnprobe.conllu import SurfaceToken, TurnTree, parse_conllu

DATA_DIR = Path(__file__).parent / "data"

# Gold annotation of the 18-token reference turn: a false start covering
# tokens 1-4 (the pause doubling as a discourse filler), an abandoned "to"
# with its own pause (5-6), and a standalone filler at 13.
REFERENCE_EXPECTED = {
    1: ("To", False, (False, False, True), "advmod:emph"),
    2: ("niech", False, (False, False, True), "aux:imp"),
    3: ("pani", False, (False, False, True), "root"),
    4: ("...", False, (True, False, True), "discourse"),
    5: ("to", False, (False, True, False), "reparandum"),
    6: ("...", False, (True, True, False), "discourse"),
    7: ("to", True, None, "advmod:emph"),
    8: ("ja", True, None, "nsubj"),
    9: ("pani", True, None, "iobj"),
    10: ("podam", True, None, "parataxis:restart"),
    11: ("maila", True, None, "obj"),
    12: (",", True, None, "punct"),
    13: ("(yy)", False, (True, False, False), "discourse"),
    14: ("a", True, None, "cc"),
    15: ("pani", True, None, "nsubj"),
    16: ("mi", True, None, "iobj"),
    17: ("prześle", True, None, "conj"),
    18: ("szczegóły", True, None, "obj"),
}

REFERENCE_CLEAN_TEXT = "to ja pani podam maila, a pani mi prześle szczegóły"


@pytest.fixture(scope="session")
def reference_conllu_path() -> Path:
    return DATA_DIR / "reference_turn.conllu"


@pytest.fixture(scope="session")
def reference_tree(reference_conllu_path) -> TurnTree:
    dialogues = parse_conllu(reference_conllu_path.read_text(encoding="utf-8"))
    assert len(dialogues) == 1 and len(dialogues[0].turns) == 1
    return dialogues[0].turns[0]


def make_tree(heads_deprels: list[tuple[str, int, str]],
              dialogue_id: str = "t", turn_index: int = 0) -> TurnTree:
    """Build a turn from (form, head, deprel) triples."""
    tokens = tuple(
        SurfaceToken(id=i, form=form, head=head, deprel=deprel)
        for i, (form, head, deprel) in enumerate(heads_deprels, start=1)
    )
    return TurnTree(dialogue_id=dialogue_id, turn_index=turn_index, tokens=tokens)


@st.composite
def random_trees(draw, max_tokens: int = 12,
                 deprels: tuple[str, ...] = ("nsubj", "obj", "advmod", "punct",
                                             "discourse", "reparandum",
                                             "parataxis:restart", "discourse:interj"),
                 forms: tuple[str, ...] = ("wa", "re", "mo", "...", "(yy)", "ka")):
    """Valid random turn trees: every new token attaches to an earlier one."""
    n = draw(st.integers(min_value=1, max_value=max_tokens))
    rng = random.Random(draw(st.integers(min_value=0, max_value=2**32 - 1)))
    order = list(range(1, n + 1))
    rng.shuffle(order)
    heads = {order[0]: 0}
    for pos, tok_id in enumerate(order[1:], start=1):
        heads[tok_id] = order[rng.randrange(pos)]
    tokens = tuple(
        SurfaceToken(
            id=i,
            form=rng.choice(forms),
            head=heads[i],
            deprel="root" if heads[i] == 0 else rng.choice(deprels),
        )
        for i in range(1, n + 1)
    )
    return TurnTree(dialogue_id="rand", turn_index=0, tokens=tokens)
