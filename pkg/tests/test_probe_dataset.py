from __future__ import annotations

import json

import jsonschema
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turnprobe.conllu import Dialogue, TurnTree
from turnprobe.probe_dataset import (
    ProbeDataset,
    ProbeSchemaError,
    ProbeToken,
    build,
    dumps,
    from_jsonable,
    load,
    save,
    stats,
    to_jsonable,
    turn_tokens,
)
from turnprobe.speech_filter import PhenomenonFlags, token_status

from conftest import REFERENCE_EXPECTED, make_tree, random_trees

SCHEMA_PATH = "src/turnprobe/schema/probe_dataset.schema.json"


@pytest.fixture
def reference_dataset(reference_tree) -> ProbeDataset:
    return build([Dialogue(id="call_01", turns=(reference_tree,))])


class TestBuild:
    def test_reference_fragment(self, reference_dataset):
        turn = reference_dataset.turn("call_01", 0)
        assert len(turn) == 18
        for i in range(1, 19):
            form, status, flags, dep = REFERENCE_EXPECTED[i]
            tok = turn[str(i)]
            assert tok.token == form, f"token {i}"
            assert tok.status == status, f"token {i}"
            assert tok.dep_type == dep, f"token {i}"
            if flags is None:
                assert tok.speech_type is None
            else:
                assert (tok.speech_type.discourse, tok.speech_type.reparandum,
                        tok.speech_type.restart) == flags, f"token {i}"

    def test_all_clean_turn(self):
        tree = make_tree([("a", 2, "nsubj"), ("b", 0, "root")])
        ds = build([Dialogue(id="d", turns=(tree,))])
        assert all(t.status and t.speech_type is None
                   for t in turn_tokens(ds.turn("d", 0)))

    def test_rejects_invalid_tree(self):
        tree = make_tree([("a", 0, "root"), ("b", 0, "root")])
        with pytest.raises(ValueError, match="invalid tree"):
            build([Dialogue(id="d", turns=(tree,))])

    @given(random_trees())
    @settings(max_examples=60, deadline=None)
    def test_statuses_mirror_speech_filter(self, tree):
        ds = build([Dialogue(id="rand", turns=(tree,))])
        per_token = turn_tokens(ds.turn("rand", 0))
        assert len(per_token) == len(tree.tokens)
        for tok, st_ in zip(per_token, token_status(tree)):
            assert tok.status == st_.status
            if not tok.status:
                assert tok.speech_type == st_.flags


class TestCanonicalJson:
    def test_key_order_and_layout(self, reference_dataset):
        text = dumps(reference_dataset)
        obj = json.loads(text)
        turn = obj["call_01"][0]
        assert list(turn) == [str(i) for i in range(1, 19)]
        assert list(turn["1"]) == ["token", "status", "speech_type", "dep_type"]
        assert list(turn["1"]["speech_type"]) == ["discourse", "reparandum", "restart"]
        assert '"token": "szczegóły"' in text  # UTF-8, not escaped
        assert text.endswith("\n")

    def test_round_trip(self, reference_dataset, tmp_path):
        path = tmp_path / "ds.probe.json"
        save(reference_dataset, path)
        assert load(path) == reference_dataset
        save(load(path), tmp_path / "again.probe.json")
        assert (tmp_path / "again.probe.json").read_bytes() == path.read_bytes()

    def test_validates_against_shipped_schema(self, reference_dataset):
        schema = json.loads(open(SCHEMA_PATH, encoding="utf-8").read())
        jsonschema.validate(to_jsonable(reference_dataset), schema)


class TestSchemaEnforcement:
    def base_token(self):
        return {"token": "a", "status": True, "speech_type": None, "dep_type": "root"}

    def test_status_true_with_flags_rejected(self):
        tok = self.base_token()
        tok["speech_type"] = {"discourse": True, "reparandum": False, "restart": False}
        with pytest.raises(ProbeSchemaError, match="dialogue 'd' turn 0 token 1"):
            from_jsonable({"d": [{"1": tok}]})

    def test_status_false_needs_flags(self):
        tok = self.base_token()
        tok["status"] = False
        with pytest.raises(ProbeSchemaError, match="speech_type"):
            from_jsonable({"d": [{"1": tok}]})

    def test_all_false_flags_rejected(self):
        tok = self.base_token()
        tok["status"] = False
        tok["speech_type"] = {"discourse": False, "reparandum": False, "restart": False}
        with pytest.raises(ProbeSchemaError, match="at least one"):
            from_jsonable({"d": [{"1": tok}]})

    def test_gap_in_token_keys(self):
        tokens = {"1": self.base_token(), "3": self.base_token()}
        with pytest.raises(ProbeSchemaError, match="contiguous"):
            from_jsonable({"d": [tokens]})

    def test_missing_field(self):
        tok = self.base_token()
        del tok["dep_type"]
        with pytest.raises(ProbeSchemaError, match="missing fields"):
            from_jsonable({"d": [{"1": tok}]})

    def test_invalid_json_file(self, tmp_path):
        path = tmp_path / "broken.probe.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ProbeSchemaError, match="not valid JSON"):
            load(path)

    def test_error_names_location(self):
        good = {"1": self.base_token()}
        bad_tok = self.base_token()
        bad_tok["status"] = "yes"
        with pytest.raises(ProbeSchemaError, match="dialogue 'd' turn 1 token 1"):
            from_jsonable({"d": [good, {"1": bad_tok}]})


class TestStats:
    def test_reference_counts(self, reference_dataset):
        s = stats(reference_dataset)
        assert s.true_tokens == 11
        assert s.false_tokens == 7
        assert s.total_tokens == 18
        assert s.turn_count == 1
        assert s.avg_true_per_turn == pytest.approx(11.0)
        assert (s.phenomena["discourse"].labels, s.phenomena["discourse"].tokens,
                s.phenomena["discourse"].single) == (3, 3, 1)
        assert (s.phenomena["reparandum"].labels, s.phenomena["reparandum"].tokens,
                s.phenomena["reparandum"].single) == (1, 2, 1)
        assert (s.phenomena["restart"].labels, s.phenomena["restart"].tokens,
                s.phenomena["restart"].single) == (1, 4, 3)

    def test_empty_dataset(self):
        s = stats(ProbeDataset())
        assert s.true_tokens == 0 and s.false_tokens == 0
        assert s.avg_true_per_turn == 0.0
        assert all(v.labels == 0 and v.tokens == 0 for v in s.phenomena.values())
        assert s.phenomena["restart"].tokens_per_label is None

    def test_labels_never_exceed_tokens(self, reference_dataset):
        s = stats(reference_dataset)
        for row in s.phenomena.values():
            assert row.labels <= row.tokens

    @given(st.lists(random_trees(), min_size=1, max_size=5))
    @settings(max_examples=40, deadline=None)
    def test_token_conservation(self, trees):
        dialogues = [
            Dialogue(id=f"d{n}", turns=(TurnTree(dialogue_id=f"d{n}", turn_index=0,
                                                 tokens=t.tokens),))
            for n, t in enumerate(trees)
        ]
        ds = build(dialogues)
        s = stats(ds)
        assert s.total_tokens == sum(len(t.tokens) for t in trees)


class TestProbeTokenInvariants:
    def test_constructor_guards(self):
        with pytest.raises(ValueError):
            ProbeToken(token="a", status=True,
                       speech_type=PhenomenonFlags(True, False, False), dep_type="x")
        with pytest.raises(ValueError):
            ProbeToken(token="a", status=False, speech_type=None, dep_type="x")
        with pytest.raises(ValueError):
            ProbeToken(token="a", status=False,
                       speech_type=PhenomenonFlags(False, False, False), dep_type="x")
