"""Surface language: parsing, pretty-printing, desugaring and substitution.

Concrete syntax (ASCII, keyword based)::

    e ::= let x = e in e            | let <x1, ..., xn> = e in e
        | letp <x, y> = e in e      | \\x y ... . e
        | if e then e else e        | e e                 (left associative)
        | !e  | der e               | <e, ..., e>
        | sample bern(p)            | case e of { pat => sample bern(p); ... }
        | obs(e = b)                | x | t | f | n        (n a numeral)

Probabilities are written as decimals (``0.7``) or fractions (``3/10``) and
kept as exact rationals.  ``#`` starts a comment that runs to the end of the
line.  The identifiers ``fix``, ``isZero``, ``pred``, ``succ`` and
``ifZero`` refer to the prelude unless they are bound by the program.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional

from hobn.errors import ParseError
from hobn.terms import (
    App, Bang, Bool, Case, Der, If, Key, Lam, Let, LetP, LetTuple, Numeral,
    Observe, Pair, Sample, Term, Tuple, Var, all_names, binders, children,
    free_vars, is_value, make_case, subterms,
)

KEYWORDS = {
    "let", "letp", "in", "case", "of", "sample", "bern", "obs", "der",
    "if", "then", "else", "t", "f",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<arrow>=>)
  | (?P<punct>[()<>,=;{}!\\./λ])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        assert kind is not None
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            elif kind in ("punct", "arrow"):
                kind = text if text != "λ" else "\\"
            tokens.append(Token(kind, text, line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, source: str, core: bool) -> None:
        self.toks = tokenize(source)
        self.i = 0
        self.core = core

    # -- token helpers -----------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.tok
        return tok.kind == kind and (text is None or tok.text == text)

    def at_kw(self, word: str) -> bool:
        return self.at("kw", word)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            got = self.tok.text or "end of input"
            raise self.error(f"expected {want!r}, found {got!r}")
        tok = self.tok
        self.i += 1
        return tok

    def expect_kw(self, word: str) -> Token:
        return self.expect("kw", word)

    def ident(self) -> str:
        if not self.at("ident"):
            got = self.tok.text or "end of input"
            raise self.error(f"expected an identifier, found {got!r}")
        name = self.tok.text
        self.i += 1
        return name

    def sugar(self, what: str, tok: Token) -> None:
        if self.core:
            raise self.error(f"{what} is not allowed in core syntax", tok)

    # -- grammar -----------------------------------------------------------
    def program(self) -> Term:
        t = self.expr()
        if not self.at("eof"):
            raise self.error(f"unexpected {self.tok.text!r} after end of term")
        return t

    def expr(self) -> Term:
        tok = self.tok
        if self.at_kw("let"):
            self.i += 1
            if self.at("<"):
                names = self.name_tuple()
                self.sugar("tuple-pattern let", tok)
                self.expect("=")
                bound = self.expr()
                self.expect_kw("in")
                return LetTuple(tuple(names), bound, self.expr())
            x = self.ident()
            self.expect("=")
            bound = self.expr()
            self.expect_kw("in")
            return Let(x, bound, self.expr())
        if self.at_kw("letp"):
            self.i += 1
            names = self.name_tuple()
            self.expect("=")
            bound = self.expr()
            self.expect_kw("in")
            body = self.expr()
            if len(names) == 2:
                if self.core and not is_value(bound):
                    raise self.error("letp scrutinee must be a value in core syntax", tok)
                return LetP(names[0], names[1], bound, body)
            self.sugar("n-ary letp", tok)
            return LetTuple(tuple(names), bound, body)
        if self.at("\\"):
            self.i += 1
            params = [self.ident()]
            while self.at("ident"):
                params.append(self.ident())
            if len(params) > 1:
                self.sugar("multi-argument lambda", tok)
            self.expect(".")
            body = self.expr()
            for p in reversed(params):
                body = Lam(p, body)
            return body
        if self.at_kw("if"):
            self.sugar("if-then-else", tok)
            self.i += 1
            c = self.expr()
            self.expect_kw("then")
            a = self.expr()
            self.expect_kw("else")
            return If(c, a, self.expr())
        return self.application()

    def name_tuple(self) -> list[str]:
        self.expect("<")
        names = [self.ident()]
        while self.at(","):
            self.i += 1
            names.append(self.ident())
        self.expect(">")
        if len(names) < 2:
            raise self.error("a tuple pattern needs at least two names")
        return names

    def starts_prefix(self) -> bool:
        tok = self.tok
        if tok.kind in ("ident", "number", "(", "<", "!", "\\"):
            return tok.kind != "\\"
        return tok.kind == "kw" and tok.text in ("der", "t", "f", "sample", "case", "obs")

    def application(self) -> Term:
        tok = self.tok
        head = self.prefix()
        while self.starts_prefix():
            arg_tok = self.tok
            arg = self.prefix()
            if self.core and not is_value(arg):
                raise self.error("application argument must be a value in core syntax", arg_tok)
            head = App(head, arg)
        del tok
        return head

    def prefix(self) -> Term:
        tok = self.tok
        if self.at("!"):
            self.i += 1
            return Bang(self.prefix())
        if self.at_kw("der"):
            self.i += 1
            arg = self.prefix()
            if self.core and not is_value(arg):
                raise self.error("der argument must be a value in core syntax", tok)
            return Der(arg)
        return self.atom()

    def atom(self) -> Term:
        tok = self.tok
        if self.at("ident"):
            return Var(self.ident())
        if self.at("number"):
            self.sugar("numeral", tok)
            self.i += 1
            if "." in tok.text:
                raise self.error("numerals must be non-negative integers", tok)
            return Numeral(int(tok.text))
        if self.at_kw("t") or self.at_kw("f"):
            self.i += 1
            return Bool(tok.text == "t")
        if self.at("("):
            self.i += 1
            t = self.expr()
            self.expect(")")
            return t
        if self.at("<"):
            self.i += 1
            items = [self.expr()]
            while self.at(","):
                self.i += 1
                items.append(self.expr())
            self.expect(">")
            if len(items) == 1:
                raise self.error("a tuple needs at least two components", tok)
            if len(items) == 2:
                if self.core and not all(is_value(x) for x in items):
                    raise self.error("pair components must be values in core syntax", tok)
                return Pair(items[0], items[1])
            self.sugar("n-ary tuple", tok)
            return Tuple(tuple(items))
        if self.at_kw("sample"):
            self.i += 1
            return Sample(self.bernoulli())
        if self.at_kw("case"):
            return self.case()
        if self.at_kw("obs"):
            self.i += 1
            self.expect("(")
            target = self.expr()
            self.expect("=")
            b = self.boolean()
            self.expect(")")
            if self.core and not isinstance(target, Var):
                raise self.error("observe applies to a variable in core syntax", tok)
            return Observe(target, b)
        got = tok.text or "end of input"
        raise self.error(f"unexpected {got!r}")

    def boolean(self) -> bool:
        if self.at_kw("t") or self.at_kw("f"):
            b = self.tok.text == "t"
            self.i += 1
            return b
        raise self.error("expected a Boolean constant 't' or 'f'")

    def probability(self) -> Fraction:
        tok = self.expect("number")
        p = Fraction(tok.text)
        if self.at("/"):
            self.i += 1
            den = self.expect("number")
            if "." in den.text or int(den.text) == 0:
                raise self.error("bad denominator", den)
            p = p / Fraction(den.text)
        if not (0 <= p <= 1):
            raise self.error(f"probability {p} is outside [0, 1]", tok)
        return p

    def bernoulli(self) -> Fraction:
        self.expect_kw("bern")
        self.expect("(")
        p = self.probability()
        self.expect(")")
        return p

    def pattern(self) -> Key:
        if self.at("<"):
            self.i += 1
            parts = list(self.pattern())
            while self.at(","):
                self.i += 1
                parts.extend(self.pattern())
            self.expect(">")
            return tuple(parts)
        return (self.boolean(),)

    def case(self) -> Term:
        tok = self.expect_kw("case")
        scrutinee = self.expr()
        if self.core and not is_value(scrutinee):
            raise self.error("case scrutinee must be a value in core syntax", tok)
        self.expect_kw("of")
        self.expect("{")
        table: dict[Key, Fraction] = {}
        while not self.at("}"):
            ptok = self.tok
            key = self.pattern()
            self.expect("=>")
            self.expect_kw("sample")
            p = self.bernoulli()
            if key in table:
                raise self.error(f"duplicate clause for {_key_text(key)}", ptok)
            if table and len(key) != len(next(iter(table))):
                raise self.error("clause patterns have different lengths", ptok)
            table[key] = p
            if not self.at(";"):
                break
            self.i += 1
        close = self.expect("}")
        if not table:
            raise self.error("case needs at least one clause", close)
        n = len(next(iter(table)))
        for key in itertools.product((True, False), repeat=n):
            if key not in table:
                raise self.error(f"missing clause for {_key_text(key)}", close)
        return make_case(scrutinee, table)


def _key_text(key: Key) -> str:
    parts = ["t" if b else "f" for b in key]
    return parts[0] if len(parts) == 1 else "<" + ", ".join(parts) + ">"


def parse(source: str, core: bool = False) -> Term:
    """Parse surface (or, with ``core=True``, strictly core) syntax."""
    return _Parser(source, core).program()


# ---------------------------------------------------------------------------
# Pretty printing


def format_probability(p: Fraction) -> str:
    den = p.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{p.numerator}/{p.denominator}"
    digits = max(twos, fives)
    if digits == 0:
        return str(p.numerator)
    scaled = p * 10**digits
    assert scaled.denominator == 1
    whole, frac = divmod(scaled.numerator, 10**digits)
    return f"{whole}.{str(frac).rjust(digits, '0')}"


def pretty(t: Term) -> str:
    """Render a term as parseable text on a single logical line per let."""
    return _pp(t, 0, "")


def _pp(t: Term, level: int, indent: str) -> str:
    def wrap(s: str, needed: int) -> str:
        return f"({s})" if level > needed else s

    if isinstance(t, Var):
        return t.name
    if isinstance(t, Bool):
        return "t" if t.value else "f"
    if isinstance(t, Numeral):
        return str(t.value)
    if isinstance(t, Pair):
        return f"<{_pp(t.fst, 0, indent)}, {_pp(t.snd, 0, indent)}>"
    if isinstance(t, Tuple):
        return "<" + ", ".join(_pp(x, 0, indent) for x in t.items) + ">"
    if isinstance(t, Sample):
        return f"sample bern({format_probability(t.p)})"
    if isinstance(t, Case):
        clauses = "; ".join(
            f"{_key_text(k)} => sample bern({format_probability(p)})" for k, p in t.clauses
        )
        return f"case {_pp(t.scrutinee, 0, indent)} of {{ {clauses} }}"
    if isinstance(t, Observe):
        return f"obs({_pp(t.target, 0, indent)} = {'t' if t.value else 'f'})"
    if isinstance(t, Bang):
        return wrap("!" + _pp(t.body, 2, indent), 2)
    if isinstance(t, Der):
        return wrap("der " + _pp(t.arg, 2, indent), 2)
    if isinstance(t, App):
        return wrap(f"{_pp(t.fun, 1, indent)} {_pp(t.arg, 2, indent)}", 1)
    if isinstance(t, Lam):
        return wrap(f"\\{t.var}. {_pp(t.body, 0, indent)}", 0)
    if isinstance(t, If):
        return wrap(
            f"if {_pp(t.cond, 0, indent)} then {_pp(t.then, 0, indent)} "
            f"else {_pp(t.orelse, 0, indent)}",
            0,
        )
    if isinstance(t, (Let, LetP, LetTuple)):
        inner = indent + "  " if level > 0 else indent
        if isinstance(t, Let):
            head = f"let {t.var} = {_pp(t.bound, 0, inner + '  ')} in"
        elif isinstance(t, LetP):
            head = f"letp <{t.fst}, {t.snd}> = {_pp(t.scrutinee, 0, inner + '  ')} in"
        else:
            head = f"let <{', '.join(t.names)}> = {_pp(t.bound, 0, inner + '  ')} in"
        body = _pp(t.body, 0, inner)
        if level > 0:
            return f"(\n{inner}{head}\n{inner}{body})"
        return f"{head}\n{indent}{body}"
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Fresh names, renaming, alpha-equivalence


_SUFFIX = re.compile(r"^(.*?)(?:_(\d+))?$")


def fresh_name(base: str, avoid: set[str]) -> str:
    """Smallest ``base_k`` (k >= 1) not in ``avoid``; ``avoid`` is updated."""
    stem = _SUFFIX.match(base).group(1) or "v"  # type: ignore[union-attr]
    for k in itertools.count(1):
        candidate = f"{stem}_{k}"
        if candidate not in avoid:
            avoid.add(candidate)
            return candidate
    raise AssertionError("unreachable")


def rename(t: Term, mapping: dict[str, str]) -> Term:
    """Rename every occurrence (free, bound and binding) of the mapped names."""
    if not mapping:
        return t

    def r(name: str) -> str:
        return mapping.get(name, name)

    def go(s: Term) -> Term:
        if isinstance(s, Var):
            return Var(r(s.name))
        if isinstance(s, (Bool, Sample, Numeral)):
            return s
        if isinstance(s, Pair):
            return Pair(go(s.fst), go(s.snd))
        if isinstance(s, Tuple):
            return Tuple(tuple(go(x) for x in s.items))
        if isinstance(s, Bang):
            return Bang(go(s.body))
        if isinstance(s, Der):
            return Der(go(s.arg))
        if isinstance(s, Lam):
            return Lam(r(s.var), go(s.body))
        if isinstance(s, App):
            return App(go(s.fun), go(s.arg))
        if isinstance(s, Let):
            return Let(r(s.var), go(s.bound), go(s.body))
        if isinstance(s, LetP):
            return LetP(r(s.fst), r(s.snd), go(s.scrutinee), go(s.body))
        if isinstance(s, LetTuple):
            return LetTuple(tuple(r(n) for n in s.names), go(s.bound), go(s.body))
        if isinstance(s, Case):
            return Case(go(s.scrutinee), s.clauses)
        if isinstance(s, Observe):
            return Observe(go(s.target), s.value)
        if isinstance(s, If):
            return If(go(s.cond), go(s.then), go(s.orelse))
        raise TypeError(f"not a term: {s!r}")

    return go(t)


def freshen_binders(t: Term, avoid: set[str]) -> Term:
    """Rename every binder of ``t`` to a name outside ``avoid`` (updated)."""
    bs = binders(t)
    if not bs:
        return t
    return uniquify(t, avoid, force=True)


def uniquify(t: Term, avoid: Optional[set[str]] = None, force: bool = False) -> Term:
    """Alpha-rename so that all binders are distinct and differ from free names.

    ``avoid`` (updated in place) lists names that must not be chosen for a
    binder.  With ``force`` every binder is renamed, otherwise only clashing
    ones are.
    """
    used = set(free_vars(t)) if avoid is None else avoid
    used |= free_vars(t)

    def bind(name: str, env: dict[str, str]) -> tuple[str, dict[str, str]]:
        if force or name in used:
            new = fresh_name(name, used)
        else:
            new = name
            used.add(name)
        return new, {**env, name: new}

    def go(s: Term, env: dict[str, str]) -> Term:
        if isinstance(s, Var):
            return Var(env.get(s.name, s.name))
        if isinstance(s, (Bool, Sample, Numeral)):
            return s
        if isinstance(s, Pair):
            return Pair(go(s.fst, env), go(s.snd, env))
        if isinstance(s, Tuple):
            return Tuple(tuple(go(x, env) for x in s.items))
        if isinstance(s, Bang):
            return Bang(go(s.body, env))
        if isinstance(s, Der):
            return Der(go(s.arg, env))
        if isinstance(s, Lam):
            x, env2 = bind(s.var, env)
            return Lam(x, go(s.body, env2))
        if isinstance(s, App):
            return App(go(s.fun, env), go(s.arg, env))
        if isinstance(s, Let):
            bound = go(s.bound, env)
            x, env2 = bind(s.var, env)
            return Let(x, bound, go(s.body, env2))
        if isinstance(s, LetP):
            scrut = go(s.scrutinee, env)
            x, env2 = bind(s.fst, env)
            y, env3 = bind(s.snd, env2)
            return LetP(x, y, scrut, go(s.body, env3))
        if isinstance(s, LetTuple):
            bound = go(s.bound, env)
            names = []
            env2 = env
            for n in s.names:
                m, env2 = bind(n, env2)
                names.append(m)
            return LetTuple(tuple(names), bound, go(s.body, env2))
        if isinstance(s, Case):
            return Case(go(s.scrutinee, env), s.clauses)
        if isinstance(s, Observe):
            return Observe(go(s.target, env), s.value)
        if isinstance(s, If):
            return If(go(s.cond, env), go(s.then, env), go(s.orelse, env))
        raise TypeError(f"not a term: {s!r}")

    return go(t, {})


def alpha_canonical(t: Term) -> Term:
    """Rename binders to ``%0, %1, ...`` in preorder; free names are kept."""
    counter = itertools.count()
    mapping_stack: list[dict[str, str]] = [{}]

    def go(s: Term, env: dict[str, str]) -> Term:
        if isinstance(s, Var):
            return Var(env.get(s.name, s.name))
        if isinstance(s, Lam):
            x = f"%{next(counter)}"
            return Lam(x, go(s.body, {**env, s.var: x}))
        if isinstance(s, Let):
            bound = go(s.bound, env)
            x = f"%{next(counter)}"
            return Let(x, bound, go(s.body, {**env, s.var: x}))
        if isinstance(s, LetP):
            scrut = go(s.scrutinee, env)
            x, y = f"%{next(counter)}", f"%{next(counter)}"
            return LetP(x, y, scrut, go(s.body, {**env, s.fst: x, s.snd: y}))
        if isinstance(s, LetTuple):
            bound = go(s.bound, env)
            names = tuple(f"%{next(counter)}" for _ in s.names)
            return LetTuple(names, bound, go(s.body, {**env, **dict(zip(s.names, names))}))
        return _map_children(s, lambda c: go(c, env))

    del mapping_stack
    return go(t, {})


def alpha_equivalent(a: Term, b: Term) -> bool:
    return alpha_canonical(a) == alpha_canonical(b)


def alpha_mapping(a: Term, b: Term) -> Optional[dict[str, str]]:
    """Binder correspondence from ``a`` to ``b`` if they are alpha-equivalent."""
    mapping: dict[str, str] = {}
    ok = True

    def go(s: Term, u: Term, env: dict[str, str]) -> None:
        nonlocal ok
        if not ok:
            return
        if type(s) is not type(u):
            ok = False
            return
        if isinstance(s, Var):
            ok = env.get(s.name, s.name) == u.name  # type: ignore[union-attr]
            return
        if isinstance(s, (Bool, Sample, Numeral)):
            ok = s == u
            return
        if isinstance(s, Case) and s.clauses != u.clauses:  # type: ignore[union-attr]
            ok = False
            return
        if isinstance(s, Observe) and s.value != u.value:  # type: ignore[union-attr]
            ok = False
            return
        if isinstance(s, Lam):
            mapping[s.var] = u.var  # type: ignore[union-attr]
            go(s.body, u.body, {**env, s.var: u.var})  # type: ignore[union-attr]
            return
        if isinstance(s, Let):
            go(s.bound, u.bound, env)  # type: ignore[union-attr]
            mapping[s.var] = u.var  # type: ignore[union-attr]
            go(s.body, u.body, {**env, s.var: u.var})  # type: ignore[union-attr]
            return
        if isinstance(s, LetP):
            go(s.scrutinee, u.scrutinee, env)  # type: ignore[union-attr]
            mapping[s.fst] = u.fst  # type: ignore[union-attr]
            mapping[s.snd] = u.snd  # type: ignore[union-attr]
            go(s.body, u.body, {**env, s.fst: u.fst, s.snd: u.snd})  # type: ignore[union-attr]
            return
        cs, cu = list(children(s)), list(children(u))
        if len(cs) != len(cu):
            ok = False
            return
        for x, y in zip(cs, cu):
            go(x, y, env)

    go(a, b, {})
    return mapping if ok else None


def _map_children(s: Term, f: Callable[[Term], Term]) -> Term:
    if isinstance(s, (Var, Bool, Sample, Numeral)):
        return s
    if isinstance(s, Pair):
        return Pair(f(s.fst), f(s.snd))
    if isinstance(s, Tuple):
        return Tuple(tuple(f(x) for x in s.items))
    if isinstance(s, Bang):
        return Bang(f(s.body))
    if isinstance(s, Der):
        return Der(f(s.arg))
    if isinstance(s, Lam):
        return Lam(s.var, f(s.body))
    if isinstance(s, App):
        return App(f(s.fun), f(s.arg))
    if isinstance(s, Let):
        return Let(s.var, f(s.bound), f(s.body))
    if isinstance(s, LetP):
        return LetP(s.fst, s.snd, f(s.scrutinee), f(s.body))
    if isinstance(s, LetTuple):
        return LetTuple(s.names, f(s.bound), f(s.body))
    if isinstance(s, Case):
        return Case(f(s.scrutinee), s.clauses)
    if isinstance(s, Observe):
        return Observe(f(s.target), s.value)
    if isinstance(s, If):
        return If(f(s.cond), f(s.then), f(s.orelse))
    raise TypeError(f"not a term: {s!r}")


# ---------------------------------------------------------------------------
# Substitution


def substitute(
    t: Term,
    x: str,
    v: Term,
    avoid: Optional[set[str]] = None,
    freshen_copies: bool = False,
) -> Term:
    """Capture-avoiding substitution ``t{x := v}``.

    A binder of ``t`` that would capture a free name of ``v`` is renamed.
    With ``freshen_copies`` every inserted copy of ``v`` after the first gets
    fresh binders, so that duplicated thunks never share bound names.
    ``avoid`` (updated in place) lists names that fresh binders must avoid;
    by default it is every name occurring in ``t`` or ``v``.
    """
    used = avoid if avoid is not None else set()
    used |= all_names(t) | all_names(v)
    fv_v = free_vars(v)
    copies = 0

    def insert() -> Term:
        nonlocal copies
        copies += 1
        if freshen_copies and copies > 1:
            return freshen_binders(v, used)
        return v

    def under(binder: str, body: Term, sub: Callable[[Term], Term]) -> tuple[str, Term]:
        if binder == x:
            return binder, body
        if binder in fv_v and x in free_vars(body):
            new = fresh_name(binder, used)
            body = rename_free(body, {binder: new})
            return new, sub(body)
        return binder, sub(body)

    def go(s: Term) -> Term:
        if isinstance(s, Var):
            return insert() if s.name == x else s
        if x not in free_vars(s):
            return s
        if isinstance(s, Lam):
            y, body = under(s.var, s.body, go)
            return Lam(y, body)
        if isinstance(s, Let):
            bound = go(s.bound)
            y, body = under(s.var, s.body, go)
            return Let(y, bound, body)
        if isinstance(s, LetP):
            scrut = go(s.scrutinee)
            if x in (s.fst, s.snd):
                return LetP(s.fst, s.snd, scrut, s.body)
            a, b, body = s.fst, s.snd, s.body
            if (a in fv_v or b in fv_v) and x in free_vars(body):
                ren = {}
                if a in fv_v:
                    ren[a] = a = fresh_name(a, used)
                if b in fv_v:
                    ren[b] = b = fresh_name(b, used)
                body = rename_free(body, ren)
            return LetP(a, b, scrut, go(body))
        if isinstance(s, LetTuple):
            bound = go(s.bound)
            if x in s.names:
                return LetTuple(s.names, bound, s.body)
            names = list(s.names)
            body = s.body
            ren = {}
            for i, n in enumerate(names):
                if n in fv_v:
                    ren[n] = names[i] = fresh_name(n, used)
            body = rename_free(body, ren)
            return LetTuple(tuple(names), bound, go(body))
        return _map_children(s, go)

    return go(t)


def rename_free(t: Term, mapping: dict[str, str]) -> Term:
    """Rename free occurrences only (targets are assumed fresh)."""

    def go(s: Term, env: dict[str, str]) -> Term:
        if not env:
            return s
        if isinstance(s, Var):
            return Var(env.get(s.name, s.name))
        if isinstance(s, Lam):
            return Lam(s.var, go(s.body, {k: w for k, w in env.items() if k != s.var}))
        if isinstance(s, Let):
            return Let(s.var, go(s.bound, env), go(s.body, {k: w for k, w in env.items() if k != s.var}))
        if isinstance(s, LetP):
            inner = {k: w for k, w in env.items() if k not in (s.fst, s.snd)}
            return LetP(s.fst, s.snd, go(s.scrutinee, env), go(s.body, inner))
        if isinstance(s, LetTuple):
            inner = {k: w for k, w in env.items() if k not in s.names}
            return LetTuple(s.names, go(s.bound, env), go(s.body, inner))
        return _map_children(s, lambda c: go(c, env))

    return go(t, dict(mapping))


# ---------------------------------------------------------------------------
# Prelude and desugaring

PRELUDE_SOURCE = {
    # Turing-style fixed point: fix !F unfolds F only when its recursive
    # argument is forced with der.
    "fix": r"\g. (\w. (der g) !((der w) w)) !(\w. (der g) !((der w) w))",
    # Scott numerals: 0 = !(\z s. der z), k+1 = !(\z s. (der s) k).
    "succ": r"\n. !(\z s. (der s) n)",
    "pred": r"\n. (der n) !0 !(\p. p)",
    "isZero": r"\n. (der n) !(\a b. der a) !(\p. \a b. der b)",
    "ifZero": r"\n a b. (der n) a !(\p. der b)",
}


def _prelude_terms() -> dict[str, Term]:
    return {name: parse(src) for name, src in PRELUDE_SOURCE.items()}


_PRELUDE_CACHE: dict[str, Term] = {}


def prelude() -> dict[str, Term]:
    if not _PRELUDE_CACHE:
        _PRELUDE_CACHE.update(_prelude_terms())
    return dict(_PRELUDE_CACHE)


def expand_prelude(t: Term) -> Term:
    """Replace free occurrences of prelude names by their definitions."""
    defs = prelude()
    needed = free_vars(t) & defs.keys()
    for name in sorted(needed):
        t = substitute(t, name, defs[name])
    return t


def numeral(k: int) -> Term:
    """Scott encoding of a natural number, as a core value."""
    n: Term = Bang(Lam("z", Lam("s", Der(Var("z")))))
    for _ in range(k):
        n = Bang(Lam("z", Lam("s", App(Der(Var("s")), n))))
    return n


class _Desugarer:
    def __init__(self, t: Term) -> None:
        self.used = all_names(t)

    def fresh(self, base: str = "z") -> str:
        return fresh_name(base, self.used)

    def atomize(self, e: Term) -> tuple[list[tuple[str, Term]], Term]:
        d = self.term(e)
        if is_value(d):
            return [], d
        z = self.fresh()
        return [(z, d)], Var(z)

    def atomize_scrutinee(self, e: Term) -> tuple[list[tuple[str, Term]], Term]:
        """Like atomize, but keeps tuple structure so leaves are variables."""
        if isinstance(e, (Tuple, Pair)):
            items = e.items if isinstance(e, Tuple) else (e.fst, e.snd)
            frames: list[tuple[str, Term]] = []
            leaves = []
            for item in items:
                fr, leaf = self.atomize_scrutinee(item)
                frames += fr
                leaves.append(leaf)
            return frames, _right_nest(leaves)
        return self.atomize(e)

    @staticmethod
    def wrap(frames: list[tuple[str, Term]], body: Term) -> Term:
        for z, u in reversed(frames):
            body = Let(z, u, body)
        return body

    def term(self, e: Term) -> Term:
        if isinstance(e, (Var, Bool, Sample)):
            return e
        if isinstance(e, Numeral):
            return numeral(e.value)
        if isinstance(e, (Pair, Tuple)):
            items = (e.fst, e.snd) if isinstance(e, Pair) else e.items
            frames: list[tuple[str, Term]] = []
            vals = []
            for item in items:
                fr, v = self.atomize(item)
                frames += fr
                vals.append(v)
            return self.wrap(frames, _right_nest(vals))
        if isinstance(e, Bang):
            return Bang(self.term(e.body))
        if isinstance(e, Der):
            frames, v = self.atomize(e.arg)
            return self.wrap(frames, Der(v))
        if isinstance(e, Lam):
            return Lam(e.var, self.term(e.body))
        if isinstance(e, App):
            fun = self.term(e.fun)
            frames, v = self.atomize(e.arg)
            return self.wrap(frames, App(fun, v))
        if isinstance(e, Let):
            return Let(e.var, self.term(e.bound), self.term(e.body))
        if isinstance(e, LetP):
            frames, v = self.atomize(e.scrutinee)
            return self.wrap(frames, LetP(e.fst, e.snd, v, self.term(e.body)))
        if isinstance(e, LetTuple):
            frames, v = self.atomize(e.bound)
            return self.wrap(frames, self.let_tuple(list(e.names), v, self.term(e.body)))
        if isinstance(e, Case):
            frames, v = self.atomize_scrutinee(e.scrutinee)
            return self.wrap(frames, Case(v, e.clauses))
        if isinstance(e, Observe):
            frames, v = self.atomize(e.target)
            if not isinstance(v, Var):
                z = self.fresh()
                frames.append((z, v))
                v = Var(z)
            return self.wrap(frames, Observe(v, e.value))
        if isinstance(e, If):
            cond = self.term(e.cond)
            return App(App(cond, Bang(self.term(e.then))), Bang(self.term(e.orelse)))
        raise TypeError(f"not a term: {e!r}")

    def let_tuple(self, names: list[str], v: Term, body: Term) -> Term:
        if len(names) == 2:
            return LetP(names[0], names[1], v, body)
        rest = self.fresh("w")
        return LetP(names[0], rest, v, self.let_tuple(names[1:], Var(rest), body))


def _right_nest(vals: list[Term]) -> Term:
    out = vals[-1]
    for v in reversed(vals[:-1]):
        out = Pair(v, out)
    return out


def desugar(t: Term, use_prelude: bool = True) -> Term:
    """Translate a surface term to the core calculus with unique binders."""
    if use_prelude:
        t = expand_prelude(t)
    core = _Desugarer(t).term(t)
    return uniquify(core)


def load(source: str) -> Term:
    """Parse and desugar in one go."""
    return desugar(parse(source))


# ---------------------------------------------------------------------------
# Structural predicates


def is_low_level(t: Term) -> bool:
    """True iff ``t`` avoids thunks, dereliction, abstraction and application."""
    return not any(isinstance(s, (Bang, Der, Lam, App)) for s in subterms(t))


@dataclass(frozen=True)
class Diagnostic:
    path: tuple[int, ...]
    message: str

    def __str__(self) -> str:
        where = ".".join(map(str, self.path)) or "root"
        return f"at {where}: {self.message}"


def validate(t: Term) -> list[Diagnostic]:
    """Check the core-term invariants; an empty list means ``t`` is valid."""
    out: list[Diagnostic] = []

    def go(s: Term, path: tuple[int, ...]) -> None:
        if isinstance(s, (Tuple, LetTuple, If, Numeral)):
            out.append(Diagnostic(path, f"surface form {type(s).__name__} in core term"))
        elif isinstance(s, Bool):
            out.append(Diagnostic(path, "Boolean constants are not typable"))
        elif isinstance(s, App) and not is_value(s.arg):
            out.append(Diagnostic(path, "application argument is not a value"))
        elif isinstance(s, Pair) and not (is_value(s.fst) and is_value(s.snd)):
            out.append(Diagnostic(path, "pair component is not a value"))
        elif isinstance(s, Der) and not is_value(s.arg):
            out.append(Diagnostic(path, "der argument is not a value"))
        elif isinstance(s, LetP) and not is_value(s.scrutinee):
            out.append(Diagnostic(path, "letp scrutinee is not a value"))
        elif isinstance(s, Observe) and not isinstance(s.target, Var):
            out.append(Diagnostic(path, "observe target is not a variable"))
        elif isinstance(s, Case):
            if not is_value(s.scrutinee):
                out.append(Diagnostic(path, "case scrutinee is not a value"))
            n = s.arity
            keys = {k for k, _ in s.clauses}
            if n == 0 or any(len(k) != n for k in keys) or len(keys) != 2**n or len(s.clauses) != 2**n:
                out.append(Diagnostic(path, f"case needs exactly one clause per Boolean {n}-tuple"))
            if any(not (0 <= p <= 1) for _, p in s.clauses):
                out.append(Diagnostic(path, "Bernoulli parameter outside [0, 1]"))
        for i, c in enumerate(children(s)):
            go(c, path + (i,))

    go(t, ())
    return out


def is_core(t: Term) -> bool:
    return not [d for d in validate(t) if "Boolean" not in d.message]


def unique_binders(t: Term) -> bool:
    bs = binders(t)
    return len(bs) == len(set(bs)) and not (set(bs) & free_vars(t))


def probabilistic_constructs(t: Term) -> list[Term]:
    return [s for s in subterms(t) if isinstance(s, (Sample, Case, Observe))]


def iter_paths(t: Term) -> Iterable[tuple[tuple[int, ...], Term]]:
    stack: list[tuple[tuple[int, ...], Term]] = [((), t)]
    while stack:
        path, s = stack.pop()
        yield path, s
        kids = list(children(s))
        for i in range(len(kids) - 1, -1, -1):
            stack.append((path + (i,), kids[i]))
