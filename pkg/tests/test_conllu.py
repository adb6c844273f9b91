from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnprobe.conllu import (
    ConlluParseError,
    Dialogue,
    SurfaceToken,
    TurnTree,
    parse_conllu,
    serialize_conllu,
    subtree,
    validate,
)

from conftest import make_tree, random_trees


def row(i, form, head, deprel, misc="_"):
    return f"{i}\t{form}\t_\t_\t_\t_\t{head}\t{deprel}\t_\t{misc}"


def block(sent_id, rows, speaker=None):
    lines = [f"# sent_id = {sent_id}"]
    if speaker:
        lines.append(f"# speaker = {speaker}")
    lines.extend(rows)
    return "\n".join(lines) + "\n"


class TestParse:
    def test_reference_turn(self, reference_tree):
        assert len(reference_tree.tokens) == 18
        root = [t for t in reference_tree.tokens if t.head == 0]
        assert [t.id for t in root] == [3]
        assert root[0].form == "pani"
        assert root[0].deprel == "root"
        assert reference_tree.dialogue_id == "call_01"
        assert reference_tree.turn_index == 0
        assert reference_tree.speaker == "A"
        assert reference_tree.token(11).space_after is False
        assert reference_tree.token(10).space_after is True

    def test_empty_input(self):
        assert parse_conllu("") == []
        assert parse_conllu("\n\n") == []

    def test_head_out_of_range(self):
        rows = [row(i, "w", i - 1 if i > 1 else 0, "dep") for i in range(1, 11)]
        rows[4] = row(5, "w", 25, "dep")
        with pytest.raises(ConlluParseError, match="head out of range"):
            parse_conllu(block("d-0", rows))

    def test_bad_column_count(self):
        text = "# sent_id = d-0\n1\tw\t_\t_\t0\troot\n"
        with pytest.raises(ConlluParseError, match="line 2.*columns"):
            parse_conllu(text)

    def test_non_integer_head(self):
        with pytest.raises(ConlluParseError, match="non-integer head"):
            parse_conllu(block("d-0", [row(1, "w", "x", "root")]))

    def test_cycle_rejected(self):
        rows = [row(1, "a", 2, "dep"), row(2, "b", 1, "dep"), row(3, "c", 0, "root")]
        with pytest.raises(ConlluParseError, match="cyclic|unreachable"):
            parse_conllu(block("d-0", rows))

    def test_duplicate_turn_index(self):
        text = block("d-0", [row(1, "a", 0, "root")]) + "\n" \
            + block("d-0", [row(1, "b", 0, "root")])
        with pytest.raises(ConlluParseError, match="duplicate turn index"):
            parse_conllu(text)

    def test_turn_indexes_must_be_contiguous(self):
        text = block("d-0", [row(1, "a", 0, "root")]) + "\n" \
            + block("d-2", [row(1, "b", 0, "root")])
        with pytest.raises(ConlluParseError, match="contiguous"):
            parse_conllu(text)

    def test_multiword_ranges_and_empty_nodes_skipped(self, caplog):
        rows = [
            "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_",
            row(1, "de", 2, "case"),
            row(2, "la", 0, "root"),
            "2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_",
        ]
        with caplog.at_level("WARNING"):
            dialogues = parse_conllu(block("d-0", rows))
        assert [t.form for t in dialogues[0].turns[0].tokens] == ["de", "la"]
        assert "skipping" in caplog.text

    def test_dashed_dialogue_ids(self):
        text = block("cbiz-tc-53-4", [row(1, "a", 0, "root")])
        # Only the trailing -<int> is the turn index.
        with pytest.raises(ConlluParseError, match="contiguous"):
            parse_conllu(text)
        text = block("cbiz-tc-53-0", [row(1, "a", 0, "root")])
        dialogue = parse_conllu(text)[0]
        assert dialogue.id == "cbiz-tc-53"

    def test_missing_sent_id(self):
        with pytest.raises(ConlluParseError, match="sent_id"):
            parse_conllu(row(1, "a", 0, "root") + "\n")

    def test_dialogue_grouping_and_order(self):
        text = (block("b-0", [row(1, "x", 0, "root")]) + "\n"
                + block("a-1", [row(1, "y", 0, "root")]) + "\n"
                + block("a-0", [row(1, "z", 0, "root")]))
        dialogues = parse_conllu(text)
        assert [d.id for d in dialogues] == ["b", "a"]
        assert [t.turn_index for t in dialogues[1].turns] == [0, 1]


class TestSubtree:
    def test_reference_restart_clause(self, reference_tree):
        assert subtree(reference_tree, 10) == set(range(5, 19))

    def test_reference_root_covers_everything(self, reference_tree):
        assert subtree(reference_tree, 3) == set(range(1, 19))

    def test_leaf(self, reference_tree):
        assert subtree(reference_tree, 18) == {18}

    def test_out_of_range(self, reference_tree):
        with pytest.raises(ValueError):
            subtree(reference_tree, 19)
        with pytest.raises(ValueError):
            subtree(reference_tree, 0)

    @staticmethod
    def brute_force_reachable(tree, token_id):
        ids = {token_id}
        grew = True
        while grew:
            grew = False
            for tok in tree.tokens:
                if tok.head in ids and tok.id not in ids:
                    ids.add(tok.id)
                    grew = True
        return ids

    @given(random_trees())
    @settings(max_examples=80, deadline=None)
    def test_matches_brute_force_reachability(self, tree):
        for tok in tree.tokens:
            assert subtree(tree, tok.id) == self.brute_force_reachable(tree, tok.id)

    @given(random_trees())
    @settings(max_examples=80, deadline=None)
    def test_contains_self_and_nests(self, tree):
        sets = {tok.id: subtree(tree, tok.id) for tok in tree.tokens}
        for tok_id, members in sets.items():
            assert tok_id in members
        for a in sets.values():
            for b in sets.values():
                assert not (a & b) or a <= b or b <= a


class TestValidate:
    def test_clean_tree(self, reference_tree):
        assert validate(reference_tree) == []

    def test_multiple_roots(self):
        tree = make_tree([("a", 0, "root"), ("b", 0, "root")])
        assert any(d.rule == "multiple-roots" for d in validate(tree))

    def test_two_token_cycle(self):
        tree = make_tree([("a", 2, "dep"), ("b", 1, "dep")])
        rules = {d.rule for d in validate(tree)}
        assert "cycle" in rules

    def test_dangler_off_cycle_is_unreachable(self):
        tree = make_tree([("a", 2, "dep"), ("b", 1, "dep"),
                          ("c", 1, "dep"), ("d", 0, "root")])
        by_rule = {d.token_id: d.rule for d in validate(tree)}
        assert by_rule[1] == "cycle"
        assert by_rule[2] == "cycle"
        assert by_rule[3] == "unreachable"

    def test_self_head(self):
        tree = make_tree([("a", 1, "dep"), ("b", 0, "root")])
        assert any(d.rule == "self-head" for d in validate(tree))

    def test_gap_in_ids(self):
        tokens = (SurfaceToken(id=1, form="a", head=0, deprel="root"),
                  SurfaceToken(id=3, form="b", head=1, deprel="dep"))
        tree = TurnTree(dialogue_id="t", turn_index=0, tokens=tokens)
        assert any(d.rule == "id-contiguity" for d in validate(tree))


class TestRoundTrip:
    @given(st.lists(random_trees(), min_size=1, max_size=4))
    @settings(max_examples=60, deadline=None)
    def test_parse_inverts_serialize(self, trees):
        dialogues = [
            Dialogue(id=f"d{n}", turns=(TurnTree(dialogue_id=f"d{n}", turn_index=0,
                                                 tokens=t.tokens, speaker="A"),))
            for n, t in enumerate(trees)
        ]
        text = serialize_conllu(dialogues)
        assert parse_conllu(text) == dialogues

    def test_space_after_survives(self, reference_conllu_path):
        text = reference_conllu_path.read_text(encoding="utf-8")
        dialogues = parse_conllu(text)
        again = parse_conllu(serialize_conllu(dialogues))
        assert again == dialogues
