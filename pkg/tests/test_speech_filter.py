from __future__ import annotations

import pytest
from hypothesis import given, settings

from turnprobe.conllu import SurfaceToken, subtree
from turnprobe.speech_filter import (
    DISCOURSE,
    REPARANDUM,
    RESTART,
    PhenomenonFlags,
    detokenize,
    extract_clean,
    join_forms,
    phenomenon_flags,
    token_status,
)

from conftest import REFERENCE_CLEAN_TEXT, REFERENCE_EXPECTED, make_tree, random_trees


def brute_force_flags(tree):
    """Region membership by explicit ancestor-path enumeration."""
    def ancestors_or_self(token_id):
        chain = []
        node = token_id
        while node != 0:
            chain.append(node)
            node = tree.tokens[node - 1].head
        return chain

    out = []
    restart_ids = {t.id for t in tree.tokens if t.deprel == RESTART}
    for tok in tree.tokens:
        chain = ancestors_or_self(tok.id)
        discourse = any(tree.tokens[a - 1].deprel == DISCOURSE for a in chain)
        reparandum = any(tree.tokens[a - 1].deprel == REPARANDUM for a in chain)
        restart = False
        for r in restart_ids:
            head = tree.tokens[r - 1].head
            if head == 0 or head not in chain:
                continue
            # Walk from the token up to the false-start head; any other
            # restart-labelled token on the way shields this token.
            shielded = False
            for node in chain:
                if node == head:
                    break
                if node in restart_ids:
                    shielded = True
                    break
            if not shielded:
                restart = True
        out.append(PhenomenonFlags(discourse, reparandum, restart))
    return out


class TestPhenomenonFlags:
    def test_reference_turn(self, reference_tree):
        flags = phenomenon_flags(reference_tree)
        for i, f in enumerate(flags, start=1):
            _, _, expected, _ = REFERENCE_EXPECTED[i]
            got = (f.discourse, f.reparandum, f.restart)
            assert got == (expected or (False, False, False)), f"token {i}"

    def test_unlabelled_tree_is_all_clean(self):
        tree = make_tree([("a", 2, "nsubj"), ("b", 0, "root"), ("c", 2, "obj")])
        assert all(not f.any() for f in phenomenon_flags(tree))

    def test_discourse_interj_not_removed(self):
        tree = make_tree([("tak", 2, "discourse:interj"), ("b", 0, "root")])
        assert all(not f.any() for f in phenomenon_flags(tree))

    def test_chained_restarts(self):
        # Two stacked false starts: the final clause (7..9) survives.
        tree = make_tree([
            ("a1", 2, "dep"),          # 1 under first false-start root
            ("h", 0, "root"),          # 2 first false-start root
            ("...", 2, "discourse"),   # 3 pause inside first region
            ("b1", 5, "dep"),          # 4 under second false-start root
            ("r1", 2, RESTART),        # 5 second clause root, abandoned too
            ("...", 5, "discourse"),   # 6 pause inside second region
            ("c1", 8, "nsubj"),        # 7..9 the completed clause
            ("r2", 5, RESTART),        # 8
            ("c2", 8, "obj"),          # 9
        ])
        flags = phenomenon_flags(tree)
        expected_restart = {1: True, 2: True, 3: True, 4: True, 5: True, 6: True,
                            7: False, 8: False, 9: False}
        assert {i: f.restart for i, f in enumerate(flags, 1)} == expected_restart
        assert flags == brute_force_flags(tree)
        # Region algebra: subtree(2)\subtree(5) plus subtree(5)\subtree(8).
        region = (subtree(tree, 2) - subtree(tree, 5)) | (subtree(tree, 5) - subtree(tree, 8))
        assert {i for i, f in enumerate(flags, 1) if f.restart} == region

    @given(random_trees())
    @settings(max_examples=120, deadline=None)
    def test_matches_brute_force(self, tree):
        assert phenomenon_flags(tree) == brute_force_flags(tree)


class TestTokenStatus:
    def test_reference_statuses(self, reference_tree):
        statuses = token_status(reference_tree)
        true_ids = {i for i, s in enumerate(statuses, 1) if s.status}
        assert true_ids == {7, 8, 9, 10, 11, 12, 14, 15, 16, 17, 18}

    def test_status_complements_flags(self, reference_tree):
        for st_ in token_status(reference_tree):
            assert st_.status == (not st_.flags.any())

    def test_single_filler_turn(self):
        # A turn consisting of one filler: head 0, discourse label.
        tree = make_tree([("(yy)", 0, "discourse")])
        statuses = token_status(tree)
        assert [s.status for s in statuses] == [False]
        assert extract_clean(tree) == []

    def test_all_clean_identity(self):
        tree = make_tree([("a", 2, "nsubj"), ("b", 0, "root")])
        assert [t.form for t in extract_clean(tree)] == ["a", "b"]


class TestExtractClean:
    def test_reference_clean_text(self, reference_tree):
        assert detokenize(extract_clean(reference_tree)) == REFERENCE_CLEAN_TEXT

    def test_root_inside_false_start(self):
        # The surviving clause hangs off an abandoned root; everything else goes.
        tree = make_tree([
            ("no", 3, "dep"),
            ("...", 3, "discourse"),
            ("więc", 0, "root"),
            ("ja", 5, "nsubj"),
            ("dam", 3, RESTART),
            ("znać", 5, "xcomp"),
        ])
        clean = [t.form for t in extract_clean(tree)]
        assert clean == ["ja", "dam", "znać"]

    @given(random_trees())
    @settings(max_examples=80, deadline=None)
    def test_clean_is_ordered_subsequence(self, tree):
        clean_ids = [t.id for t in extract_clean(tree)]
        assert clean_ids == sorted(clean_ids)
        assert set(clean_ids) <= {t.id for t in tree.tokens}

    @given(random_trees())
    @settings(max_examples=80, deadline=None)
    def test_reparandum_regions_closed_under_dependents(self, tree):
        flags = phenomenon_flags(tree)
        flagged = {i for i, f in enumerate(flags, 1) if f.reparandum}
        for tok in tree.tokens:
            if tok.deprel == REPARANDUM:
                assert subtree(tree, tok.id) <= flagged

    def test_new_root_is_only_outward_edge(self, reference_tree):
        clean = extract_clean(reference_tree)
        clean_ids = {t.id for t in clean}
        outward = [t.id for t in clean if t.head not in clean_ids]
        assert outward == [10]


class TestDetokenize:
    def test_metadata_controls_spacing(self, reference_tree):
        text = detokenize(list(reference_tree.tokens))
        assert text == ("To niech pani ... to ... to ja pani podam maila, "
                        "(yy) a pani mi prześle szczegóły")

    def test_empty(self):
        assert detokenize([]) == ""
        assert join_forms([]) == ""

    def test_fallback_punctuation_rules(self):
        assert join_forms(["a", ",", "b"]) == "a, b"
        assert join_forms(["a", "b", "."]) == "a b."
        assert join_forms(["czy", "tak", "?"]) == "czy tak?"
        assert join_forms(["(", "a", ")"]) == "(a)"

    def test_fallback_glues_ellipsis(self):
        assert join_forms(["dzień", "...", "dzień", "dobry"]) == "dzień... dzień dobry"

    def test_explicit_space_wins_over_fallback(self):
        tokens = [
            SurfaceToken(id=1, form="pani", head=0, deprel="root", space_after=True),
            SurfaceToken(id=2, form="...", head=1, deprel="discourse", space_after=True),
            SurfaceToken(id=3, form="to", head=1, deprel="dep", space_after=True),
        ]
        assert detokenize(tokens) == "pani ... to"
