"""Stoichiometric formula parser.

Accepts tokens like "H2O", "Ba(OH)2", "CuSO4·5H2O" and rejects plain
words, pure numbers and ambiguous element/word collisions ("In", "No").
Grammar, applied per hydrate segment:

    Formula  := Segment ("·" Segment)*
    Segment  := Multiplier? Unit+        (multiplier only after a hydrate dot)
    Unit     := Element Count? | "(" Unit+ ")" Count?
    Element  := uppercase letter + optional lowercase letter, real symbol
    Count    := integer or decimal

Counts are exact rationals so hydrate fractions ("·0.5H2O") and the
n-times-inner-group conservation law hold without float error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

# 118 IUPAC element symbols plus D (deuterium), which appears in
# isotope-labelled formulas like D2O.
ELEMENT_SYMBOLS = frozenset((
    "D",
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
))

# Element symbols that double as common English words.  A bare stoplist
# token is never a formula; it needs a digit or a second element.
AMBIGUOUS_SYMBOLS = frozenset({"In", "As", "At", "I", "No", "He"})

# Hydrate separators kept inside a single token by the tokenizer.
HYDRATE_SEPARATORS = "·⋅"  # MIDDLE DOT, DOT OPERATOR

_COUNT_RE = re.compile(r"\d+(?:\.\d+)?")


@dataclass(frozen=True)
class FormulaComposition:
    """Total element counts of one parsed formula, in first-appearance order."""

    elements: dict[str, Fraction]
    surface: str

    def canonical(self) -> str:
        """Canonical serialization; parsing it again is idempotent."""
        parts = []
        for symbol, count in self.elements.items():
            if count == 1:
                parts.append(symbol)
            else:
                parts.append(symbol + _format_count(count))
        return "".join(parts)

    def unit_count(self) -> int:
        return len(self.elements)


def _format_count(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    # Denominators from decimal literals are 2^a * 5^b; expand exactly.
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:  # not expressible as a finite decimal
        return str(value)
    digits = max(twos, fives)
    scaled = value.numerator * 10**digits // value.denominator
    text = str(scaled).rjust(digits + 1, "0")
    whole, frac = text[:-digits], text[-digits:]
    return f"{whole}.{frac.rstrip('0') or '0'}"


def _match_count(text: str, i: int) -> tuple[Fraction, int]:
    m = _COUNT_RE.match(text, i)
    if m is None:
        return Fraction(1), i
    return Fraction(m.group()), m.end()


def _parse_units(text: str, i: int, end: int) -> list[tuple[str, Fraction]] | None:
    """Parse Unit+ covering text[i:end] exactly; backtracks on the
    one-vs-two-letter element choice (e.g. "POs" = P + Os, not Po + s)."""
    if i >= end:
        return None
    candidates: list[tuple[list[tuple[str, Fraction]], int]] = []
    ch = text[i]
    if ch == "(":
        close = _matching_paren(text, i, end)
        if close is None:
            return None
        inner = _parse_units(text, i + 1, close)
        if inner is None:
            return None
        count, j = _match_count(text, close + 1)
        candidates.append(([(sym, n * count) for sym, n in inner], j))
    elif ch.isupper():
        symbols = []
        if i + 1 < end and text[i + 1].islower() and text[i : i + 2] in ELEMENT_SYMBOLS:
            symbols.append(text[i : i + 2])
        if ch in ELEMENT_SYMBOLS:
            symbols.append(ch)
        for sym in symbols:
            count, j = _match_count(text, i + len(sym))
            candidates.append(([(sym, count)], j))
    for unit, j in candidates:
        if j == end:
            return unit
        rest = _parse_units(text, j, end)
        if rest is not None:
            return unit + rest
    return None


def _matching_paren(text: str, i: int, end: int) -> int | None:
    depth = 0
    for j in range(i, end):
        if text[j] == "(":
            depth += 1
        elif text[j] == ")":
            depth -= 1
            if depth == 0:
                return j
    return None


def parse_formula(token: str) -> FormulaComposition | None:
    """Parse a token as a chemical formula; None (not an error) on rejection."""
    if not token:
        return None
    token = token.replace("⋅", "·")
    segments = token.split("·")
    if any(not seg for seg in segments):
        return None

    units: list[tuple[str, Fraction]] = []
    for idx, segment in enumerate(segments):
        multiplier = Fraction(1)
        i = 0
        if idx > 0:  # hydrate segments may carry a leading multiplier
            multiplier, i = _match_count(segment, 0)
            if i == len(segment):
                return None
        parsed = _parse_units(segment, i, len(segment))
        if parsed is None:
            return None
        units.extend((sym, n * multiplier) for sym, n in parsed)

    if token in AMBIGUOUS_SYMBOLS:
        has_digit = any(c.isdigit() for c in token)
        if not has_digit and len(units) < 2:
            return None

    elements: dict[str, Fraction] = {}
    for sym, count in units:
        if count <= 0:
            return None
        elements[sym] = elements.get(sym, Fraction(0)) + count
    return FormulaComposition(elements=elements, surface=token)


@lru_cache(maxsize=1 << 18)
def looks_like_formula(token: str) -> bool:
    """Cheap cached predicate used by the tokenizer and vocabulary builder."""
    return parse_formula(token) is not None
