"""String similarity metrics for candidate scoring and the SS feature group.

All metrics operate on canonical names, are symmetric, and return scores in
[0, 1]. They are pure functions and safe for concurrent use.
"""

from __future__ import annotations

from .names import NormalizedName

# Visually confusable ASCII characters mapped to the letter they imitate.
# Fixed table so homoglyph scores are reproducible across runs.
HOMOGLYPH_TABLE = str.maketrans(
    {
        "0": "o",
        "1": "l",
        "3": "e",
        "5": "s",
        "7": "t",
        "@": "a",
        "$": "s",
        "!": "i",
    }
)

TRIGRAM_PAD_LEAD = "\x02\x02"
TRIGRAM_PAD_TRAIL = "\x03"


def _canon(name: NormalizedName | str) -> str:
    return name.canonical if isinstance(name, NormalizedName) else name


def levenshtein_distance(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""

    if a == b:
        return 0
    # Strip common prefix and suffix; they never affect the distance.
    lo = 0
    hi_a, hi_b = len(a), len(b)
    while lo < hi_a and lo < hi_b and a[lo] == b[lo]:
        lo += 1
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a -= 1
        hi_b -= 1
    a = a[lo:hi_a]
    b = b[lo:hi_b]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    row = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        prev = row[0]
        row[0] = i
        for j, cb in enumerate(b, 1):
            cur = row[j]
            if ca == cb:
                row[j] = prev
            else:
                x = prev
                if cur < x:
                    x = cur
                if row[j - 1] < x:
                    x = row[j - 1]
                row[j] = x + 1
            prev = cur
    return row[-1]


def levenshtein_similarity(a: NormalizedName | str, b: NormalizedName | str) -> float:
    """1 - editdistance / max(len); 1.0 when both names are empty."""

    sa, sb = _canon(a), _canon(b)
    longest = max(len(sa), len(sb))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(sa, sb) / longest


def jaro_similarity(a: str, b: str) -> float:
    if a == b:
        return 1.0
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return 0.0
    window = max(la, lb) // 2 - 1
    if window < 0:
        window = 0
    matched_b = [False] * lb
    match_a = []
    for i, ca in enumerate(a):
        lo = max(0, i - window)
        hi = min(lb, i + window + 1)
        for j in range(lo, hi):
            if not matched_b[j] and b[j] == ca:
                matched_b[j] = True
                match_a.append(ca)
                break
    m = len(match_a)
    if m == 0:
        return 0.0
    match_b = [b[j] for j in range(lb) if matched_b[j]]
    transpositions = sum(x != y for x, y in zip(match_a, match_b)) // 2
    return (m / la + m / lb + (m - transpositions) / m) / 3.0


def jaro_winkler_similarity(a: NormalizedName | str, b: NormalizedName | str) -> float:
    """Jaro similarity with the Winkler prefix boost (0.1 factor, prefix <= 4)."""

    sa, sb = _canon(a), _canon(b)
    jaro = jaro_similarity(sa, sb)
    prefix = 0
    for ca, cb in zip(sa, sb):
        if ca != cb or prefix == 4:
            break
        prefix += 1
    return jaro + prefix * 0.1 * (1.0 - jaro)


def fold_homoglyphs(name: str) -> str:
    """Map confusable characters to their visual equivalents."""

    return name.translate(HOMOGLYPH_TABLE)


def homoglyph_similarity(a: NormalizedName | str, b: NormalizedName | str) -> float:
    """Edit-distance similarity after folding visually confusable characters."""

    return levenshtein_similarity(fold_homoglyphs(_canon(a)), fold_homoglyphs(_canon(b)))


def trigram_set(name: NormalizedName | str) -> frozenset[str]:
    """Character trigrams of the padded canonical name.

    Two leading and one trailing boundary marker, so an edit at the start of
    a name disturbs fewer trigrams than an interior edit.
    """

    s = _canon(name)
    if not s:
        return frozenset()
    padded = TRIGRAM_PAD_LEAD + s + TRIGRAM_PAD_TRAIL
    return frozenset(padded[i : i + 3] for i in range(len(padded) - 2))


def dice_coefficient(a: frozenset[str], b: frozenset[str]) -> float:
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * len(a & b) / total


def trigram_similarity(a: NormalizedName | str, b: NormalizedName | str) -> float:
    """Dice coefficient over padded character trigram sets."""

    return dice_coefficient(trigram_set(a), trigram_set(b))


def length_diff_ratio(a: NormalizedName | str, b: NormalizedName | str) -> float:
    """| |a| - |b| | / max(|a|, |b|); undefined when both names are empty."""

    la, lb = len(_canon(a)), len(_canon(b))
    longest = max(la, lb)
    if longest == 0:
        raise ValueError("length_diff_ratio undefined for two empty names")
    return abs(la - lb) / longest


def max_syntactic_similarity(a: NormalizedName | str, b: NormalizedName | str) -> float:
    """max of the three name metrics, used for target ranking and CD counting."""

    return max(
        levenshtein_similarity(a, b),
        jaro_winkler_similarity(a, b),
        homoglyph_similarity(a, b),
    )
