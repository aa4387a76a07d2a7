"""Parser and canonical renderer for the encoder architecture notation.

Grammar (whitespace-insensitive, ``x`` and ``×`` interchangeable)::

    expr := term ('+' term)*
    term := unit ('x' INT)?
    unit := 'L' | 'B' | 'BN' | 'R' | 'P/2' | 'S/2'
          | 'C(' INT 'x' INT ')' ('/' INT)?
          | 'ResCNN' | 'ResLSTM' | 'ResConvLSTM(' INT 'x' INT ')'
          | 'ConvLSTM' ('(' INT 'x' INT ')')? | 'NiN' | '(' expr ')'

Parsing canonicalises: a parenthesised group without repetition is spliced
into its parent, a group holding a single term folds its repetition into
that term, and ``BN`` is read as ``B``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union


class ArchSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, text: str):
        super().__init__(f"{message} at offset {offset}: {text!r}")
        self.offset = offset
        self.text = text


@dataclass(frozen=True)
class Unit:
    kind: str  # L, B, R, P, S, C, ResCNN, ResLSTM, ResConvLSTM, ConvLSTM, NiN
    kf: int | None = None
    kt: int | None = None
    stride: int = 1


@dataclass(frozen=True)
class Term:
    item: Union[Unit, "ArchExpr"]
    repeat: int = 1


@dataclass(frozen=True)
class ArchExpr:
    terms: tuple[Term, ...]


_KEYWORDS = ["ResConvLSTM", "ConvLSTM", "ResLSTM", "ResCNN", "NiN", "BN", "L", "B", "R", "P", "S", "C"]


def _tokenize(text: str):
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        start = pos
        if text[pos].isdigit():
            m = re.match(r"\d+", text[pos:])
            toks.append(("int", int(m.group()), start))
            pos += m.end()
        elif text[pos] in "x×":
            toks.append(("times", text[pos], start))
            pos += 1
        elif text[pos] in "()+/":
            toks.append((text[pos], text[pos], start))
            pos += 1
        elif text[pos].isalpha():
            run = re.match(r"[A-Za-z]+", text[pos:]).group()
            word = run if run in _KEYWORDS else None
            if word is None:
                # "Lx3": a unit glued to the repetition operator
                word = next((kw for kw in _KEYWORDS if run.startswith(kw) and run[len(kw)] == "x"), None)
            if word is None:
                raise ArchSyntaxError(f"unknown unit name {run!r}", start, text)
            toks.append(("word", word, start))
            pos += len(word)
        else:
            raise ArchSyntaxError(f"unexpected character {text[pos]!r}", start, text)
    toks.append(("eof", None, n))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind, what=None):
        tok = self.toks[self.i]
        if tok[0] != kind:
            found = "end of input" if tok[0] == "eof" else repr(tok[1])
            raise ArchSyntaxError(f"expected {what or kind}, found {found}", tok[2], self.text)
        self.i += 1
        return tok

    def expr(self) -> list[Term]:
        terms = self.term()
        while self.peek()[0] == "+":
            self.take("+")
            terms.extend(self.term())
        return terms

    def term(self) -> list[Term]:
        tok = self.peek()
        if tok[0] == "(":
            self.take("(")
            inner = self.expr()
            self.take(")", "')'")
            item = None
        else:
            item = self.unit()
        rep = 1
        if self.peek()[0] == "times":
            self.take("times")
            rep_tok = self.take("int", "repetition count")
            rep = rep_tok[1]
            if rep < 1:
                raise ArchSyntaxError("repetition count must be >= 1", rep_tok[2], self.text)
        if item is not None:
            return [Term(item, rep)]
        if rep == 1:
            return inner
        if len(inner) == 1:
            return [Term(inner[0].item, inner[0].repeat * rep)]
        return [Term(ArchExpr(tuple(inner)), rep)]

    def dims(self):
        self.take("(", "'('")
        a = self.take("int", "filter extent")
        self.take("times", "'x'")
        b = self.take("int", "filter extent")
        self.take(")", "')'")
        for t in (a, b):
            if t[1] < 1:
                raise ArchSyntaxError("filter extents must be >= 1", t[2], self.text)
        return a[1], b[1]

    def divisor(self):
        self.take("/", "'/'")
        tok = self.take("int", "stride divisor")
        if tok[1] not in (1, 2):
            raise ArchSyntaxError("stride divisor must be 1 or 2", tok[2], self.text)
        return tok[1]

    def unit(self) -> Unit:
        tok = self.take("word", "unit")
        w = tok[1]
        if w in ("L", "R", "ResCNN", "ResLSTM", "NiN"):
            return Unit(w)
        if w in ("B", "BN"):
            return Unit("B")
        if w in ("P", "S"):
            d = self.divisor()
            if d != 2:
                raise ArchSyntaxError(f"{w} must be written {w}/2", tok[2], self.text)
            return Unit(w, stride=2)
        if w == "C":
            kf, kt = self.dims()
            stride = self.divisor() if self.peek()[0] == "/" else 1
            return Unit("C", kf, kt, stride)
        if w == "ResConvLSTM":
            kf, kt = self.dims()
            return Unit(w, kf, kt)
        if w == "ConvLSTM":
            if self.peek()[0] == "(":
                kf, kt = self.dims()
                return Unit(w, kf, kt)
            return Unit(w)
        raise ArchSyntaxError(f"unknown unit name {w!r}", tok[2], self.text)  # pragma: no cover


def parse(text: str) -> ArchExpr:
    p = _Parser(text)
    terms = p.expr()
    tok = p.peek()
    if tok[0] != "eof":
        raise ArchSyntaxError(f"unexpected {tok[1]!r}", tok[2], text)
    return ArchExpr(tuple(terms))


def render_unit(u: Unit) -> str:
    if u.kind in ("P", "S"):
        return f"{u.kind}/2"
    if u.kind == "C":
        s = f"C({u.kf}x{u.kt})"
        return s + (f"/{u.stride}" if u.stride != 1 else "")
    if u.kind == "ResConvLSTM" or (u.kind == "ConvLSTM" and u.kf is not None):
        return f"{u.kind}({u.kf}x{u.kt})"
    return u.kind


def render(expr: ArchExpr) -> str:
    """Canonical text; parentheses appear only where a repetition needs them."""
    parts = []
    for t in expr.terms:
        if isinstance(t.item, ArchExpr):
            parts.append(f"({render(t.item)}) x {t.repeat}")
        else:
            s = render_unit(t.item)
            if t.repeat > 1:
                if "/" in s:
                    s = f"({s})"
                s += f" x {t.repeat}"
            parts.append(s)
    return " + ".join(parts)


NIN_MACRO = "(L + C(1x1) + B + R) x 2 + L"


def expand(expr: ArchExpr) -> list[Unit]:
    """Flatten repetitions and the NiN macro into the ordered unit list."""
    out: list[Unit] = []
    for t in expr.terms:
        for _ in range(t.repeat):
            if isinstance(t.item, ArchExpr):
                out.extend(expand(t.item))
            elif t.item.kind == "NiN":
                out.extend(expand(parse(NIN_MACRO)))
            else:
                out.append(t.item)
    return out
