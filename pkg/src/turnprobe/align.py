"""Order-preserving alignment of free-text hypotheses onto input turn tokens.

Matching runs in two phases. Phase 1 finds a longest common subsequence
under case-insensitive exact form equality. Disfluent duplicates (repeated
or cloned words) always precede their corrections in transcriptions, so LCS
ties are broken toward the LATEST input positions: a hypothesis word then
pairs with the surviving copy rather than the abandoned one. Phase 2 scans
the still-unmatched stretches between consecutive phase-1 matches and pairs
tokens whose normalized edit distance is at most 1/3 (inflection-level
modifications). Hypothesis tokens left over after both phases are
out-of-vocabulary insertions.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

PROTECTED_FORMS = {"...", "(yy)", "(...)"}
PUNCT_CHARS = set(',.?!:;"()')

FUZZY_THRESHOLD = 1 / 3


@dataclass(frozen=True, slots=True)
class Alignment:
    """Matches are (input index, hypothesis index, kind) with kind "exact" or
    "modified"; both coordinate sequences strictly increase. ``kept`` has one
    entry per input token; ``oov`` lists unmatched hypothesis indexes."""

    matches: tuple[tuple[int, int, str], ...]
    kept: tuple[bool, ...]
    oov: tuple[int, ...]

    @property
    def exact_match_count(self) -> int:
        return sum(1 for _, _, kind in self.matches if kind == "exact")


def tokenize_hypothesis(text: str) -> list[str]:
    """Split hypothesis text the way gold turns are tokenized.

    Whitespace-splits, then detaches leading/trailing punctuation characters
    (``, . ? ! : ; " ( )``) as separate tokens. The pause forms "...", "(yy)"
    and "(...)" stay whole, as does a trailing "..." on a word stem: the
    ellipsis there marks a truncated word ("sytu...") and is part of the form.
    """
    tokens: list[str] = []
    for chunk in unicodedata.normalize("NFC", text).split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def _split_chunk(chunk: str) -> list[str]:
    if chunk in PROTECTED_FORMS:
        return [chunk]
    leading: list[str] = []
    while chunk not in PROTECTED_FORMS and len(chunk) > 1 and chunk[0] in PUNCT_CHARS:
        leading.append(chunk[0])
        chunk = chunk[1:]
    trailing: list[str] = []
    while (
        chunk not in PROTECTED_FORMS
        and len(chunk) > 1
        and chunk[-1] in PUNCT_CHARS
        and not (chunk.endswith("...") and len(chunk) > 3)
    ):
        trailing.append(chunk[-1])
        chunk = chunk[:-1]
    trailing.reverse()
    return leading + [chunk] + trailing


def edit_distance(a: str, b: str) -> int:
    """Plain Levenshtein distance."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            if ca == cb:
                current.append(previous[j - 1])
            else:
                current.append(1 + min(previous[j - 1], previous[j], current[-1]))
        previous = current
    return previous[-1]


def normalized_edit_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


def align(input_tokens: list[str], hyp_tokens: list[str]) -> Alignment:
    """Two-phase order-preserving alignment; see the module docstring."""
    exact = _lcs_matches(
        [t.casefold() for t in input_tokens],
        [t.casefold() for t in hyp_tokens],
    )
    matches = [(i, j, "exact") for i, j in exact]

    matched_inputs = {i for i, _ in exact}
    matched_hyps = {j for _, j in exact}
    boundaries = [(-1, -1)] + exact + [(len(input_tokens), len(hyp_tokens))]
    fuzzy: list[tuple[int, int, str]] = []
    for (prev_i, prev_j), (next_i, next_j) in zip(boundaries, boundaries[1:]):
        gap_inputs = [i for i in range(prev_i + 1, next_i) if i not in matched_inputs]
        gap_hyps = [j for j in range(prev_j + 1, next_j) if j not in matched_hyps]
        cursor = 0
        for i in gap_inputs:
            for pos in range(cursor, len(gap_hyps)):
                j = gap_hyps[pos]
                if normalized_edit_distance(input_tokens[i].casefold(),
                                            hyp_tokens[j].casefold()) <= FUZZY_THRESHOLD:
                    fuzzy.append((i, j, "modified"))
                    cursor = pos + 1
                    break

    all_matches = sorted(matches + fuzzy)
    kept = [False] * len(input_tokens)
    for i, _, _ in all_matches:
        kept[i] = True
    matched_hyps |= {j for _, j, _ in fuzzy}
    oov = tuple(j for j in range(len(hyp_tokens)) if j not in matched_hyps)
    return Alignment(matches=tuple(all_matches), kept=tuple(kept), oov=oov)


def _lcs_matches(a: list[str], b: list[str]) -> list[tuple[int, int]]:
    """A maximum matching under equality, latest input positions preferred."""
    m, n = len(a), len(b)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        row = dp[i]
        prev = dp[i - 1]
        ai = a[i - 1]
        for j in range(1, n + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = prev[j] if prev[j] >= row[j - 1] else row[j - 1]
    pairs: list[tuple[int, int]] = []
    i, j = m, n
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif dp[i - 1][j] > dp[i][j - 1]:
            i -= 1
        else:
            # On ties keep the input cursor high so matches land as late as
            # possible on the input side.
            j -= 1
    pairs.reverse()
    return pairs


def lcs_length(a: list[str], b: list[str]) -> int:
    """Independent LCS length (no backtracking); used as a reference oracle."""
    m, n = len(a), len(b)
    prev = [0] * (n + 1)
    for i in range(1, m + 1):
        cur = [0] * (n + 1)
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[n]
