"""Per-token speech-phenomenon flags and clean-utterance extraction.

Three dependency labels mark material that does not belong to the
well-structured utterance:

* ``discourse`` -- silent pauses ("...") and inarticulate sounds ("(yy)");
  the whole subtree of each such token is excluded. Subtyped labels such as
  ``discourse:interj`` mark meaningful interjections and are NOT excluded.
* ``reparandum`` -- abandoned material later corrected by the speaker,
  attached as a dependent of its correction; its whole subtree is excluded
  (this covers pause tokens nested inside the abandoned span).
* ``parataxis:restart`` -- a fresh clause replacing a false start. The
  excluded region is the subtree of the false start's root minus every
  restart clause hanging below it.

A token may belong to several regions at once; it is part of the clean
utterance exactly when it belongs to none.
"""

from __future__ import annotations

from dataclasses import dataclass

from .conllu import SurfaceToken, TurnTree, subtree

DISCOURSE = "discourse"
REPARANDUM = "reparandum"
RESTART = "parataxis:restart"

PHENOMENON_NAMES = ("discourse", "reparandum", "restart")
PHENOMENON_LABELS = {"discourse": DISCOURSE, "reparandum": REPARANDUM, "restart": RESTART}

# Forms that never take surrounding-space heuristics apart.
NO_SPACE_BEFORE = {",", ".", "?", "!", "...", ":"}
OPENING_BRACKETS = {"(", "[", "{"}
CLOSING_BRACKETS = {")", "]", "}"}


@dataclass(frozen=True, slots=True)
class PhenomenonFlags:
    discourse: bool = False
    reparandum: bool = False
    restart: bool = False

    def any(self) -> bool:
        return self.discourse or self.reparandum or self.restart


@dataclass(frozen=True, slots=True)
class TokenStatus:
    """Whether a token belongs to the well-structured utterance."""

    status: bool
    flags: PhenomenonFlags


def phenomenon_flags(tree: TurnTree) -> list[PhenomenonFlags]:
    """Compute per-token phenomenon membership, one entry per token in order."""
    discourse_region: set[int] = set()
    reparandum_region: set[int] = set()
    restart_region: set[int] = set()

    restart_tokens = [t for t in tree.tokens if t.deprel == RESTART]
    restart_subtrees = {t.id: subtree(tree, t.id) for t in restart_tokens}

    for tok in tree.tokens:
        if tok.deprel == DISCOURSE:
            discourse_region |= subtree(tree, tok.id)
        elif tok.deprel == REPARANDUM:
            reparandum_region |= subtree(tree, tok.id)

    for head_id in {t.head for t in restart_tokens if t.head != 0}:
        region = set(subtree(tree, head_id))
        for restart_tok in restart_tokens:
            if restart_tok.id != head_id and restart_tok.id in region:
                region -= restart_subtrees[restart_tok.id]
        restart_region |= region

    return [
        PhenomenonFlags(
            discourse=tok.id in discourse_region,
            reparandum=tok.id in reparandum_region,
            restart=tok.id in restart_region,
        )
        for tok in tree.tokens
    ]


def token_status(tree: TurnTree) -> list[TokenStatus]:
    """Per-token clean-utterance membership: true iff no phenomenon flag set."""
    return [TokenStatus(status=not f.any(), flags=f) for f in phenomenon_flags(tree)]


def extract_clean(tree: TurnTree) -> list[SurfaceToken]:
    """The well-structured utterance: status-true tokens in surface order."""
    statuses = token_status(tree)
    return [tok for tok, st in zip(tree.tokens, statuses) if st.status]


def detokenize(tokens: list[SurfaceToken]) -> str:
    """Render tokens to text, honouring per-token spacing when known.

    Tokens whose ``space_after`` is True or False are joined accordingly.
    Where spacing is unrecorded (None), a punctuation heuristic applies:
    no space before ``, . ? ! ... :``, none after an opening bracket, and
    none before a closing one.
    """
    return _render([(t.form, t.space_after) for t in tokens])


def join_forms(forms: list[str]) -> str:
    """Render bare token strings with the punctuation-heuristic spacing."""
    return _render([(f, None) for f in forms])


def _render(pieces: list[tuple[str, bool | None]]) -> str:
    out: list[str] = []
    for i, (form, space_after) in enumerate(pieces):
        out.append(form)
        if i == len(pieces) - 1:
            break
        if space_after is True:
            out.append(" ")
        elif space_after is False:
            pass
        else:
            next_form = pieces[i + 1][0]
            if next_form in NO_SPACE_BEFORE or next_form in CLOSING_BRACKETS:
                continue
            if form in OPENING_BRACKETS:
                continue
            out.append(" ")
    return "".join(out)
