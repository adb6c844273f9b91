"""Synthetic noisy dialogues with known ground truth.

Clean turns are degraded by three injectors, applied per turn in the order
restart -> reparandum -> discourse so that pause fillers can land inside
previously injected regions and produce multi-flag tokens:

* restart: a short abandoned clause (with a trailing "..." pause) is
  prepended; the old root re-attaches to it via ``parataxis:restart``.
* reparandum: a 1-3 token prefix of some target's subtree is cloned in
  front of it and attached via ``reparandum``. Repetitions keep the cloned
  words and append "..." to the last one ("dzien..." before "dzien dobry");
  substitutions and reformulations truncate the last form to a prefix plus
  "..." ("sytu..." before "sytuacja").
* discourse: pause fillers are dropped into word gaps and attached to the
  next content token (or the turn root at the end of the turn), inheriting
  that token's phenomenon flags.

Every injected token's intended flags are recorded at injection time; the
emitted probing dataset is that record, never a recomputation. Filtering a
generated turn always recovers the original clean token sequence.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources

from .conllu import Dialogue, SurfaceToken, TurnTree, parse_conllu, subtree
from .probe_dataset import ProbeDataset, ProbeToken, ProbeTurn
from .speech_filter import DISCOURSE, REPARANDUM, RESTART, PhenomenonFlags, phenomenon_flags

DEFAULT_FILLERS = ("...", "(yy)", "(...)")

# Abandoned-clause word templates; the last word heads the clause, and a
# trailing "..." pause child is always added (region sizes 2..8).
DEFAULT_RESTART_TEMPLATES = (
    "Może",
    "Bo to",
    "No więc ja",
    "To niech pani",
    "A czy pan by",
    "To ja może zaraz",
    "No i wtedy by pan mógł",
    "A więc gdyby pan mógł jeszcze dzisiaj",
)

_PUNCT_FORMS = set(',.?!:;"()[]{}-')


@dataclass(frozen=True, slots=True)
class InjectionSpec:
    """Rates and inventories steering injection; the seed fixes everything."""

    seed: int = 0
    discourse_rate: float = 0.1
    reparandum_rate: float = 0.25
    restart_rate: float = 0.2
    filler_inventory: tuple[str, ...] = DEFAULT_FILLERS
    restart_templates: tuple[str, ...] = DEFAULT_RESTART_TEMPLATES

    def __post_init__(self):
        for name in ("discourse_rate", "reparandum_rate", "restart_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {rate}")


@dataclass(frozen=True, slots=True)
class InjectionRecord:
    """Final 1-based positions of injected tokens and their intended flags."""

    entries: dict[int, PhenomenonFlags]


@dataclass(slots=True, eq=False)
class _Work:
    # eq=False: tokens are compared by identity; duplicated forms are routine.
    form: str
    deprel: str
    head: "_Work | None"
    space_after: bool | None
    discourse: bool = False
    reparandum: bool = False
    restart: bool = False
    injected_by: str | None = None

    @property
    def flagged(self) -> bool:
        return self.discourse or self.reparandum or self.restart

    def flags(self) -> PhenomenonFlags:
        return PhenomenonFlags(self.discourse, self.reparandum, self.restart)


def _is_content(work: _Work, spec: InjectionSpec) -> bool:
    form = work.form
    return form not in spec.filler_inventory and not all(c in _PUNCT_FORMS for c in form)


def _from_tree(tree: TurnTree) -> list[_Work]:
    flags = phenomenon_flags(tree)
    works = [
        _Work(form=t.form, deprel=t.deprel, head=None, space_after=t.space_after,
              discourse=f.discourse, reparandum=f.reparandum, restart=f.restart)
        for t, f in zip(tree.tokens, flags)
    ]
    for work, tok in zip(works, tree.tokens):
        work.head = None if tok.head == 0 else works[tok.head - 1]
    return works


def _materialize(works: list[_Work], dialogue_id: str, turn_index: int,
                 speaker: str | None) -> TurnTree:
    position = {id(w): i + 1 for i, w in enumerate(works)}
    tokens = tuple(
        SurfaceToken(
            id=i + 1,
            form=w.form,
            head=0 if w.head is None else position[id(w.head)],
            deprel=w.deprel,
            space_after=w.space_after,
        )
        for i, w in enumerate(works)
    )
    return TurnTree(dialogue_id=dialogue_id, turn_index=turn_index,
                    tokens=tokens, speaker=speaker)


def _record(works: list[_Work], phase: str) -> InjectionRecord:
    return InjectionRecord(entries={
        i + 1: w.flags() for i, w in enumerate(works) if w.injected_by == phase
    })


def _ground_truth_turn(works: list[_Work]) -> ProbeTurn:
    turn: ProbeTurn = {}
    for i, w in enumerate(works, start=1):
        turn[str(i)] = ProbeToken(
            token=w.form,
            status=not w.flagged,
            speech_type=w.flags() if w.flagged else None,
            dep_type=w.deprel,
        )
    return turn


def _work_subtree(works: list[_Work], root: _Work) -> list[_Work]:
    members = [root]
    frontier = [root]
    while frontier:
        nxt = [w for w in works if w.head in frontier]
        members.extend(nxt)
        frontier = nxt
    order = {id(w): i for i, w in enumerate(works)}
    members.sort(key=lambda w: order[id(w)])
    return members


def _inject_restart_work(works: list[_Work], spec: InjectionSpec,
                         rng: random.Random) -> None:
    if rng.random() >= spec.restart_rate:
        return
    template = spec.restart_templates[rng.randrange(len(spec.restart_templates))]
    words = template.split()
    old_root = next(w for w in works if w.head is None)
    clause_root = _Work(form=words[-1], deprel="root", head=None,
                        space_after=True, restart=True, injected_by="restart")
    clause = [
        _Work(form=word, deprel="dep", head=clause_root, space_after=True,
              restart=True, injected_by="restart")
        for word in words[:-1]
    ]
    clause.append(clause_root)
    clause.append(_Work(form="...", deprel=DISCOURSE, head=clause_root,
                        space_after=True, discourse=True, restart=True,
                        injected_by="restart"))
    old_root.head = clause_root
    old_root.deprel = RESTART
    works[0:0] = clause


def _inject_reparandum_work(works: list[_Work], spec: InjectionSpec,
                            rng: random.Random) -> None:
    anchors = [
        w for w in works
        if not w.flagged and (w.head is None or w.deprel.split(":", 1)[0] in ("conj", "parataxis"))
    ]
    for anchor in anchors:
        if rng.random() >= spec.reparandum_rate:
            continue
        candidates = [w for w in _work_subtree(works, anchor)
                      if not w.flagged and _is_content(w, spec)]
        if not candidates:
            continue
        target = candidates[rng.randrange(len(candidates))]
        span = _work_subtree(works, target)
        usable = [w for w in span if not w.flagged and _is_content(w, spec)]
        k = rng.randint(1, 3)
        prefix = usable[:k]
        if not prefix:
            continue
        kind = ("repetition", "substitution", "reformulation")[rng.randrange(3)]
        forms = [w.form for w in prefix]
        if kind == "repetition":
            forms[-1] = forms[-1] + "..."
        else:
            stem = forms[-1]
            cut = rng.randint(1, max(1, len(stem) - 1))
            forms[-1] = stem[:cut] + "..."
        clone_root = _Work(form=forms[-1], deprel=REPARANDUM, head=target,
                           space_after=True, reparandum=True, injected_by="reparandum")
        clones = [
            _Work(form=form, deprel=src.deprel, head=clone_root, space_after=True,
                  reparandum=True, injected_by="reparandum")
            for form, src in zip(forms[:-1], prefix[:-1])
        ]
        clones.append(clone_root)
        insert_at = works.index(span[0])
        if insert_at > 0 and works[insert_at - 1].space_after is False:
            works[insert_at - 1].space_after = True
        works[insert_at:insert_at] = clones


def _inject_discourse_work(works: list[_Work], spec: InjectionSpec,
                           rng: random.Random) -> None:
    if not works:
        return
    # A gap is eligible when nothing glues across it (no SpaceAfter=No).
    decisions = []
    for gap in range(len(works) + 1):
        if gap > 0 and works[gap - 1].space_after is False:
            continue
        if rng.random() < spec.discourse_rate:
            form = spec.filler_inventory[rng.randrange(len(spec.filler_inventory))]
            decisions.append((gap, form))
    if not decisions:
        return
    root = next(w for w in works if w.head is None)
    out: list[_Work] = []
    pending = dict(decisions)
    for gap, work in enumerate(works):
        if gap in pending:
            out.append(_make_filler(pending[gap], works, gap, root, spec))
        out.append(work)
    if len(works) in pending:
        out.append(_make_filler(pending[len(works)], works, len(works), root, spec))
    works[:] = out


def _make_filler(form: str, works: list[_Work], gap: int, root: _Work,
                 spec: InjectionSpec) -> _Work:
    target = next((w for w in works[gap:] if _is_content(w, spec)), root)
    return _Work(form=form, deprel=DISCOURSE, head=target, space_after=True,
                 discourse=True, reparandum=target.reparandum,
                 restart=target.restart, injected_by="discourse")


def inject_restart(tree: TurnTree, spec: InjectionSpec,
                   rng: random.Random) -> tuple[TurnTree, InjectionRecord]:
    """Prepend an abandoned clause with probability ``restart_rate``."""
    works = _from_tree(tree)
    _inject_restart_work(works, spec, rng)
    return (_materialize(works, tree.dialogue_id, tree.turn_index, tree.speaker),
            _record(works, "restart"))


def inject_reparandum(tree: TurnTree, spec: InjectionSpec,
                      rng: random.Random) -> tuple[TurnTree, InjectionRecord]:
    """Clone disfluent prefixes in front of clause material, one draw per clause."""
    works = _from_tree(tree)
    _inject_reparandum_work(works, spec, rng)
    return (_materialize(works, tree.dialogue_id, tree.turn_index, tree.speaker),
            _record(works, "reparandum"))


def inject_discourse(tree: TurnTree, spec: InjectionSpec,
                     rng: random.Random) -> tuple[TurnTree, InjectionRecord]:
    """Drop pause fillers into eligible word gaps, one draw per gap."""
    works = _from_tree(tree)
    _inject_discourse_work(works, spec, rng)
    return (_materialize(works, tree.dialogue_id, tree.turn_index, tree.speaker),
            _record(works, "discourse"))


def generate_corpus(templates: list[TurnTree], spec: InjectionSpec,
                    turns_per_dialogue: int = 8) -> tuple[list[Dialogue], ProbeDataset]:
    """Degrade clean template turns into a noisy corpus plus its ground truth."""
    rng = random.Random(spec.seed)
    dataset = ProbeDataset()
    dialogues: list[Dialogue] = []
    pending_turns: list[TurnTree] = []
    pending_probe: list[ProbeTurn] = []

    def flush():
        if not pending_turns:
            return
        d_id = f"synth_{len(dialogues):03d}"
        turns = tuple(
            TurnTree(dialogue_id=d_id, turn_index=i, tokens=t.tokens, speaker=t.speaker)
            for i, t in enumerate(pending_turns)
        )
        dialogues.append(Dialogue(id=d_id, turns=turns))
        dataset.dialogues[d_id] = list(pending_probe)
        pending_turns.clear()
        pending_probe.clear()

    for n, template in enumerate(templates):
        works = _from_tree(template)
        _inject_restart_work(works, spec, rng)
        _inject_reparandum_work(works, spec, rng)
        _inject_discourse_work(works, spec, rng)
        speaker = "A" if n % 2 == 0 else "B"
        tree = _materialize(works, "pending", 0, speaker)
        pending_turns.append(tree)
        pending_probe.append(_ground_truth_turn(works))
        if len(pending_turns) == turns_per_dialogue:
            flush()
    flush()
    return dialogues, dataset


def load_clean_templates() -> list[TurnTree]:
    """The shipped hand-built inventory of clean Polish turns."""
    text = resources.files("turnprobe").joinpath("data/clean_turns_pl.conllu") \
        .read_text(encoding="utf-8")
    return [turn for dialogue in parse_conllu(text) for turn in dialogue.turns]


_SYLLABLES = ("ba", "de", "ki", "lo", "mu", "na", "po", "ru", "se", "ta", "vi", "zo")


def _pseudo_word(rng: random.Random) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(1, 3)))


def _clause_parts(rng: random.Random) -> tuple[list[tuple[str, str]], int]:
    parts: list[tuple[str, str]] = []
    if rng.random() < 0.5:
        parts.append((_pseudo_word(rng), "det"))
    if rng.random() < 0.4:
        parts.append((_pseudo_word(rng), "amod"))
    parts.append((_pseudo_word(rng), "nsubj"))
    if rng.random() < 0.3:
        parts.append((_pseudo_word(rng), "aux"))
    root_local = len(parts)
    parts.append((_pseudo_word(rng), "root"))
    if rng.random() < 0.4:
        parts.append((_pseudo_word(rng), "advmod"))
    parts.append((_pseudo_word(rng), "obj"))
    if rng.random() < 0.3:
        parts.append((_pseudo_word(rng), "iobj"))
    if rng.random() < 0.4:
        parts.append((_pseudo_word(rng), "case"))
        parts.append((_pseudo_word(rng), "obl"))
    return parts, root_local


def grammar_turns(count: int, rng: random.Random) -> list[TurnTree]:
    """Language-neutral clean turns from a tiny clause grammar, for volume."""
    turns = []
    for _ in range(count):
        # entries: [form, head position (0-based) or None for the root, deprel]
        entries: list[list] = []

        def add_clause(parts, root_local, head_of_root, root_deprel):
            offset = len(entries)
            nsubj_local = next(i for i, (_, d) in enumerate(parts) if d == "nsubj")
            for local, (form, deprel) in enumerate(parts):
                if local == root_local:
                    entries.append([form, head_of_root, root_deprel])
                elif deprel in ("det", "amod"):
                    entries.append([form, offset + nsubj_local, deprel])
                elif deprel == "case":
                    entries.append([form, offset + local + 1, deprel])
                else:
                    entries.append([form, offset + root_local, deprel])
            return offset + root_local

        parts, root_local = _clause_parts(rng)
        main_root = add_clause(parts, root_local, None, "root")
        if rng.random() < 0.35:
            comma_pos = len(entries)
            entries.append([",", None, "punct"])
            cc_pos = len(entries)
            entries.append([rng.choice(("i", "ale", "a")), None, "cc"])
            parts2, root_local2 = _clause_parts(rng)
            conj_root = add_clause(parts2, root_local2, main_root, "conj")
            entries[comma_pos][1] = conj_root
            entries[cc_pos][1] = conj_root
        entries.append([".", main_root, "punct"])

        surface = []
        for i, (form, head, deprel) in enumerate(entries):
            nxt = entries[i + 1][0] if i + 1 < len(entries) else None
            surface.append(SurfaceToken(
                id=i + 1,
                form=form,
                head=0 if head is None else head + 1,
                deprel=deprel,
                space_after=nxt not in (",", "."),
            ))
        turns.append(TurnTree(dialogue_id="grammar", turn_index=len(turns),
                              tokens=tuple(surface), speaker=None))
    return turns


def clean_turns(count: int, seed: int, templates: list[TurnTree] | None = None) -> list[TurnTree]:
    """The first ``count`` clean turns: shipped templates first, grammar after."""
    base = list(templates) if templates is not None else load_clean_templates()
    if count <= len(base):
        return base[:count]
    rng = random.Random(seed ^ 0x5EED)
    return base + grammar_turns(count - len(base), rng)
