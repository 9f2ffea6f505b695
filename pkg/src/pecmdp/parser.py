"""Reader and pretty-printer for the ``.pec`` text format.

Grammar (one statement per line; newlines inside braces or parentheses are
ignored, ``#`` starts a comment)::

    fluent <id> takes-values { <value> (, <value>)* }
    action <id>
    instants <int> .. <int>
    instants { <label> (, <label>)* }
    initially-one-of { ( {<assignments>} , <prob> ) (, ...)* }
    <term> (& <term>)* causes-one-of { ( {<assignments>} , <prob> ) (, ...)* }
    <action> performed-at <instant> with-prob <prob> [if-holds {<assignments>}]

A body term is ``<fluent>=<value>`` or a bare action name (the action is
performed). Probabilities are decimals or ``a/b`` fractions. Labelled
instants are ordered by declaration.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .core import (
    CProposition,
    Domain,
    FluentDecl,
    FluentState,
    IProposition,
    PartialFluentState,
    PecError,
    PProposition,
    format_cprop,
    format_outcomes,
    format_pprop,
    format_state,
)

KEYWORDS = frozenset({
    "fluent", "takes-values", "action", "instants", "initially-one-of",
    "causes-one-of", "performed-at", "with-prob", "with-probs", "if-holds",
})

MAX_INSTANTS = 100_000


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("line and column are 1-based")

    def covers(self, line: int, column: int) -> bool:
        return self.line == line and self.column <= column < self.column + max(self.length, 1)


class ParseError(PecError):
    def __init__(self, span: SourceSpan, message: str, expected: tuple[str, ...] = ()):
        if not message:
            raise ValueError("ParseError needs a message")
        self.span = span
        self.message = message
        self.expected = tuple(expected)
        super().__init__(f"{span.line}:{span.column}: {message}")


@dataclass(frozen=True)
class Token:
    kind: str  # NAME, KEYWORD, INT, NUMBER, PUNCT, NEWLINE, EOF
    text: str
    span: SourceSpan


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\f\v]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\r?\n|\r)
  | (?P<number>\d+(?:\.\d+(?:[eE][+-]?\d+)?|[eE][+-]?\d+)|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)
  | (?P<dots>\.\.)
  | (?P<punct>[{}(),=&/])
    """,
    re.VERBOSE | re.ASCII,
)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, depth = 1, 0, 0
    pos, n = 0, len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(SourceSpan(line, col, 1), f"unexpected character {source[pos]!r}")
        kind, text = m.lastgroup, m.group()
        span = SourceSpan(line, col, len(text))
        if kind == "newline":
            if depth == 0:
                tokens.append(Token("NEWLINE", text, span))
            line += 1
            line_start = m.end()
        elif kind == "word":
            tokens.append(Token("KEYWORD" if text in KEYWORDS else "NAME", text, span))
        elif kind == "number":
            tokens.append(Token("NUMBER", text, span))
        elif kind == "int":
            tokens.append(Token("INT", text, span))
        elif kind in ("dots", "punct"):
            if text in "{(":
                depth += 1
            elif text in "})":
                depth = max(depth - 1, 0)
            tokens.append(Token("PUNCT", text, span))
        pos = m.end()
    tokens.append(Token("EOF", "", SourceSpan(line, pos - line_start + 1, 0)))
    return tokens


@dataclass
class _Ref:
    kind: str  # fluent | value | action | instant
    name: str
    span: SourceSpan
    fluent: Optional[str] = None


@dataclass
class _Builder:
    fluents: list[FluentDecl] = field(default_factory=list)
    actions: list[str] = field(default_factory=list)
    action_spans: dict[str, SourceSpan] = field(default_factory=dict)
    instants: Optional[tuple[str, ...]] = None
    iprop: Optional[IProposition] = None
    iprop_states: list[tuple[FluentState, SourceSpan]] = field(default_factory=list)
    cprops: list[CProposition] = field(default_factory=list)
    pprops: list[PProposition] = field(default_factory=list)
    refs: list[_Ref] = field(default_factory=list)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.b = _Builder()

    # token helpers

    def peek(self, k: int = 0) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def error(self, tok: Token, message: str, expected: tuple[str, ...] = ()) -> ParseError:
        if tok.kind == "EOF":
            found = "end of input"
        elif tok.kind == "NEWLINE":
            found = "end of line"
        else:
            found = repr(tok.text)
        return ParseError(tok.span, f"{message}, found {found}", expected)

    def expect_punct(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.text == text:
            return self.advance()
        raise self.error(tok, f"expected '{text}'", (f"'{text}'",))

    def expect_keyword(self, *words: str) -> Token:
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.text in words:
            return self.advance()
        raise self.error(tok, f"expected '{words[0]}'", tuple(f"'{w}'" for w in words))

    def expect_name(self, what: str) -> Token:
        tok = self.peek()
        if tok.kind == "NAME":
            return self.advance()
        if tok.kind == "KEYWORD":
            raise self.error(tok, f"expected {what} (keywords cannot be used as names)", (what,))
        raise self.error(tok, f"expected {what}", (what,))

    def expect_value(self) -> Token:
        tok = self.peek()
        if tok.kind in ("NAME", "INT"):
            return self.advance()
        raise self.error(tok, "expected value", ("value",))

    def at_punct(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "PUNCT" and tok.text == text

    def end_statement(self) -> None:
        tok = self.peek()
        if tok.kind == "NEWLINE":
            self.advance()
        elif tok.kind != "EOF":
            raise self.error(tok, "expected end of line", ("end of line",))

    # grammar

    def parse(self) -> Domain:
        saw_statement = False
        while True:
            tok = self.peek()
            if tok.kind == "NEWLINE":
                self.advance()
                continue
            if tok.kind == "EOF":
                break
            self.statement()
            saw_statement = True
            self.end_statement()
        eof = self.peek()
        if not saw_statement:
            raise ParseError(eof.span, "expected declaration", ("'fluent'", "'action'", "'instants'", "'initially-one-of'"))
        return self.finish(eof)

    def statement(self) -> None:
        tok = self.peek()
        if tok.kind == "KEYWORD":
            if tok.text == "fluent":
                return self.fluent_decl()
            if tok.text == "action":
                return self.action_decl()
            if tok.text == "instants":
                return self.instants_decl()
            if tok.text == "initially-one-of":
                return self.iprop()
        if tok.kind == "NAME":
            nxt = self.peek(1)
            if nxt.kind == "KEYWORD" and nxt.text == "performed-at":
                return self.pprop()
            return self.cprop()
        raise self.error(tok, "expected declaration or proposition",
                         ("'fluent'", "'action'", "'instants'", "'initially-one-of'", "proposition"))

    def fluent_decl(self) -> None:
        self.advance()
        name = self.expect_name("fluent name")
        self.expect_keyword("takes-values")
        self.expect_punct("{")
        values: list[str] = []
        while True:
            v = self.expect_value()
            if v.text in values:
                raise ParseError(v.span, f"duplicate value {v.text!r} for fluent {name.text!r}")
            values.append(v.text)
            if self.at_punct(","):
                self.advance()
                continue
            break
        close = self.expect_punct("}")
        if len(values) < 2:
            raise ParseError(close.span, f"fluent {name.text!r} must take at least two values")
        if any(d.name == name.text for d in self.b.fluents):
            raise ParseError(name.span, f"duplicate declaration of fluent {name.text!r}")
        self.b.fluents.append(FluentDecl(name.text, tuple(values), name.span))

    def action_decl(self) -> None:
        self.advance()
        name = self.expect_name("action name")
        if name.text in self.b.action_spans:
            raise ParseError(name.span, f"duplicate declaration of action {name.text!r}")
        self.b.actions.append(name.text)
        self.b.action_spans[name.text] = name.span

    def instants_decl(self) -> None:
        kw = self.advance()
        if self.b.instants is not None:
            raise ParseError(kw.span, "instants declared more than once")
        tok = self.peek()
        if tok.kind == "INT":
            lo = self.advance()
            self.expect_punct("..")
            hi = self.peek()
            if hi.kind != "INT":
                raise self.error(hi, "expected integer", ("integer",))
            self.advance()
            a, b = int(lo.text), int(hi.text)
            if b < a:
                raise ParseError(hi.span, f"empty instant range {a}..{b}")
            if b - a + 1 > MAX_INSTANTS:
                raise ParseError(hi.span, f"instant range larger than {MAX_INSTANTS}")
            self.b.instants = tuple(str(k) for k in range(a, b + 1))
            return
        if not self.at_punct("{"):
            raise self.error(tok, "expected integer range or '{'", ("integer", "'{'"))
        self.advance()
        labels: list[str] = []
        last_int: Optional[int] = None
        while True:
            t = self.peek()
            if t.kind == "INT":
                label = str(int(t.text))
                if last_int is not None and int(t.text) <= last_int:
                    raise ParseError(t.span, "integer instants must be listed in increasing order")
                last_int = int(t.text)
            elif t.kind == "NAME":
                label = t.text
            else:
                raise self.error(t, "expected instant label", ("instant label",))
            self.advance()
            if label in labels:
                raise ParseError(t.span, f"duplicate instant {label!r}")
            labels.append(label)
            if self.at_punct(","):
                self.advance()
                continue
            break
        self.expect_punct("}")
        self.b.instants = tuple(labels)

    def assignments(self) -> tuple[PartialFluentState, SourceSpan]:
        """``{ F=V, ... }``; returns the state and the span of its '{'."""
        open_ = self.expect_punct("{")
        pairs: list[tuple[str, str]] = []
        seen: set[str] = set()
        if not self.at_punct("}"):
            while True:
                f = self.expect_name("fluent name")
                self.expect_punct("=")
                v = self.expect_value()
                if f.text in seen:
                    raise ParseError(f.span, f"fluent {f.text!r} assigned more than once")
                seen.add(f.text)
                self.b.refs.append(_Ref("fluent", f.text, f.span))
                self.b.refs.append(_Ref("value", v.text, v.span, f.text))
                pairs.append((f.text, v.text))
                if self.at_punct(","):
                    self.advance()
                    continue
                break
        self.expect_punct("}")
        return PartialFluentState(pairs), open_.span

    def probability(self, positive: bool = False) -> float:
        tok = self.peek()
        if tok.kind not in ("INT", "NUMBER"):
            raise self.error(tok, "expected probability", ("probability",))
        self.advance()
        span = tok.span
        if tok.kind == "INT" and self.at_punct("/"):
            self.advance()
            den = self.peek()
            if den.kind != "INT":
                raise self.error(den, "expected integer denominator", ("integer",))
            self.advance()
            span = SourceSpan(tok.span.line, tok.span.column,
                              den.span.column + den.span.length - tok.span.column
                              if den.span.line == tok.span.line else tok.span.length)
            if int(den.text) == 0:
                raise ParseError(den.span, "zero denominator")
            value = float(Fraction(int(tok.text), int(den.text)))
        else:
            value = float(tok.text)
        low_ok = value > 0.0 if positive else value >= 0.0
        if not (low_ok and value <= 1.0):
            bound = "(0, 1]" if positive else "[0, 1]"
            raise ParseError(span, f"probability {tok.text} outside {bound}")
        return value

    def outcome_list(self) -> list[tuple[PartialFluentState, float, SourceSpan]]:
        self.expect_punct("{")
        out = []
        while True:
            self.expect_punct("(")
            state, span = self.assignments()
            self.expect_punct(",")
            p = self.probability()
            self.expect_punct(")")
            out.append((state, p, span))
            if self.at_punct(","):
                self.advance()
                continue
            break
        self.expect_punct("}")
        return out

    def iprop(self) -> None:
        kw = self.advance()
        if self.b.iprop is not None:
            raise ParseError(kw.span, "more than one initially-one-of proposition")
        outcomes = self.outcome_list()
        seen: set[PartialFluentState] = set()
        states = []
        for state, _, span in outcomes:
            if state in seen:
                raise ParseError(span, f"initial state {format_state(state)} listed more than once")
            seen.add(state)
            states.append((FluentState(state), span))
        self.b.iprop_states = states
        self.b.iprop = IProposition(tuple((FluentState(s), p) for s, p, _ in outcomes), kw.span)

    def cprop(self) -> None:
        first = self.peek()
        actions: list[str] = []
        conds: list[tuple[str, str]] = []
        while True:
            name = self.expect_name("action or fluent name")
            if self.at_punct("="):
                self.advance()
                v = self.expect_value()
                if any(f == name.text for f, _ in conds):
                    raise ParseError(name.span, f"fluent {name.text!r} assigned more than once in body")
                self.b.refs.append(_Ref("fluent", name.text, name.span))
                self.b.refs.append(_Ref("value", v.text, v.span, name.text))
                conds.append((name.text, v.text))
            else:
                if name.text in actions:
                    raise ParseError(name.span, f"action {name.text!r} repeated in body")
                self.b.refs.append(_Ref("action", name.text, name.span))
                actions.append(name.text)
            if self.at_punct("&"):
                self.advance()
                continue
            break
        tok = self.peek()
        if not (tok.kind == "KEYWORD" and tok.text == "causes-one-of"):
            raise self.error(tok, "expected '&' or 'causes-one-of'", ("'&'", "'causes-one-of'"))
        self.advance()
        if not actions:
            raise ParseError(first.span, "c-proposition body must name at least one action")
        outcomes = self.outcome_list()
        self.b.cprops.append(CProposition(
            frozenset(actions), PartialFluentState(conds),
            tuple((s, p) for s, p, _ in outcomes), first.span,
        ))

    def pprop(self) -> None:
        action = self.advance()
        self.b.refs.append(_Ref("action", action.text, action.span))
        self.advance()  # performed-at
        inst = self.peek()
        if inst.kind not in ("INT", "NAME"):
            raise self.error(inst, "expected instant", ("instant",))
        self.advance()
        label = str(int(inst.text)) if inst.kind == "INT" else inst.text
        self.b.refs.append(_Ref("instant", label, inst.span))
        self.expect_keyword("with-prob", "with-probs")
        p = self.probability(positive=True)
        cond = PartialFluentState()
        tok = self.peek()
        if tok.kind == "KEYWORD" and tok.text == "if-holds":
            self.advance()
            cond, _ = self.assignments()
        self.b.pprops.append(PProposition(action.text, label, p, cond, action.span))

    def finish(self, eof: Token) -> Domain:
        b = self.b
        if not b.fluents:
            raise ParseError(eof.span, "domain declares no fluents", ("'fluent'",))
        if b.instants is None:
            raise ParseError(eof.span, "domain declares no instants", ("'instants'",))
        if b.iprop is None:
            raise ParseError(eof.span, "domain has no initially-one-of proposition", ("'initially-one-of'",))
        vals = {d.name: d.values for d in b.fluents}
        instants = set(b.instants)
        for ref in b.refs:
            if ref.kind == "fluent" and ref.name not in vals:
                raise ParseError(ref.span, f"undeclared fluent {ref.name!r}")
            if ref.kind == "value" and ref.fluent in vals and ref.name not in vals[ref.fluent]:
                raise ParseError(ref.span, f"{ref.name!r} is not a value of fluent {ref.fluent!r}")
            if ref.kind == "action" and ref.name not in b.action_spans:
                raise ParseError(ref.span, f"undeclared action {ref.name!r}")
            if ref.kind == "instant" and ref.name not in instants:
                raise ParseError(ref.span, f"undeclared instant {ref.name!r}")
        for state, span in b.iprop_states:
            missing = [f for f in vals if f not in state]
            if missing:
                raise ParseError(span, f"initial state must assign every fluent; missing {', '.join(missing)}")
        return Domain(
            fluents=tuple(b.fluents),
            actions=tuple(b.actions),
            instants=b.instants,
            iprop=b.iprop,
            cprops=tuple(b.cprops),
            pprops=tuple(b.pprops),
        )


def _decode(source: bytes) -> str:
    try:
        return source.decode("utf-8")
    except UnicodeDecodeError as exc:
        prefix = source[: exc.start].decode("utf-8")
        line = prefix.count("\n") + 1
        col = len(prefix) - (prefix.rfind("\n") + 1) + 1
        raise ParseError(SourceSpan(line, col, 1), "invalid UTF-8 byte sequence") from None


def parse_domain(source: Union[str, bytes]) -> Domain:
    """Parse ``.pec`` text into a :class:`Domain`.

    Raises :class:`ParseError` (with a source span) for lexical and syntax
    errors, duplicate declarations and references to undeclared names.
    Well-formedness beyond that (probability sums, overlapping bodies) is
    left to :func:`pecmdp.core.validate`.
    """
    text = _decode(source) if isinstance(source, (bytes, bytearray)) else source
    if text.startswith("\ufeff"):
        text = text[1:]
    return _Parser(tokenize(text)).parse()


def parse_file(path) -> Domain:
    with open(path, "rb") as fh:
        return parse_domain(fh.read())


def _is_int_label(label: str) -> bool:
    return label.isdigit() and str(int(label)) == label


def render_domain(domain: Domain) -> str:
    order = domain.fluent_names
    lines = [f"fluent {d.name} takes-values {{{', '.join(d.values)}}}" for d in domain.fluents]
    lines += [f"action {a}" for a in domain.actions]
    labels = domain.instants
    if labels and all(_is_int_label(x) for x in labels) and \
            [int(x) for x in labels] == list(range(int(labels[0]), int(labels[0]) + len(labels))):
        lines.append(f"instants {labels[0]}..{labels[-1]}")
    else:
        lines.append(f"instants {{{', '.join(labels)}}}")
    lines.append(f"initially-one-of {format_outcomes(domain.iprop.outcomes, order)}")
    lines += [format_cprop(c, order, domain.actions) for c in domain.cprops]
    lines += [format_pprop(p, order) for p in domain.pprops]
    return "\n".join(lines) + "\n"
