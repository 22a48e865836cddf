"""Text formats: formulas, signatures, structures, families.

Grammar (ASCII keywords, '#' line comments, UTF-8):

    formula     ::= "forall" var "." formula | "exists" var "." formula | impl
    impl        ::= disj ["->" impl]
    disj        ::= conj {"|" conj}
    conj        ::= neg {"&" neg}
    neg         ::= "!" neg | atom
    atom        ::= name "(" termlist ")" | term "=" term | "(" formula ")"

Precedence ! > & > | > ->, right-associative ->, quantifier scope extends
maximally right.  Parsing alpha-renames every bound variable to a fresh
name (b0, b1, ... skipping names already used free), so downstream
substitution never captures and serialize/parse reaches a fixpoint after
one normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from .errors import ParseError, SignatureError, StructureError
from .logic import (
    And,
    Const,
    Eq,
    Exists,
    Family,
    FiniteStructure,
    Forall,
    Formula,
    Func,
    Implies,
    Not,
    Or,
    Rel,
    Signature,
    Term,
    Var,
    free_vars,
    validate_formula,
)


@dataclass(frozen=True)
class SourceDocument:
    """A text to parse plus where it came from (for diagnostics)."""

    kind: str  # signature | structure | family | formula
    text: str
    origin: str = "<inline>"


# ---------------------------------------------------------------------------
# tokenizer

_KEYWORDS = {"forall", "exists", "size", "rel", "fun", "const", "true", "false"}
_SYMBOLS = ["->", "==", "=", "(", ")", "{", "}", ",", ";", ":", ".", "&", "|", "!", "/"]


@dataclass(frozen=True)
class _Token:
    kind: str  # name | number | symbol | end
    text: str
    line: int
    column: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            tokens.append(_Token("number", text[start:i], line, col))
            col += i - start
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append(_Token("name", text[start:i], line, col))
            col += i - start
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(_Token("symbol", sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("end", "", line, col))
    return tokens


class _TokenStream:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text:
            raise ParseError(
                f"expected {text!r}, found {tok.text or 'end of input'!r}",
                tok.line,
                tok.column,
            )
        return self.next()

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def fail(self, message: str):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.column)


# ---------------------------------------------------------------------------
# formula parsing


class _FormulaParser:
    def __init__(self, stream: _TokenStream, sig: Optional[Signature]):
        self.ts = stream
        self.sig = sig

    def parse(self) -> Formula:
        f = self.formula()
        tok = self.ts.peek()
        if tok.kind != "end":
            self.ts.fail(f"trailing input {tok.text!r}")
        return f

    def formula(self) -> Formula:
        tok = self.ts.peek()
        if tok.text in ("forall", "exists"):
            self.ts.next()
            var = self.ts.peek()
            if var.kind != "name" or var.text in _KEYWORDS:
                self.ts.fail("expected a variable name after quantifier")
            self.ts.next()
            self.ts.expect(".")
            body = self.formula()
            cls = Forall if tok.text == "forall" else Exists
            return cls(var.text, body)
        return self.implication()

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.ts.at("->"):
            self.ts.next()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.ts.at("|"):
            self.ts.next()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.negation()
        while self.ts.at("&"):
            self.ts.next()
            f = And(f, self.negation())
        return f

    def negation(self) -> Formula:
        if self.ts.at("!"):
            self.ts.next()
            return Not(self.negation())
        return self.atom()

    def atom(self) -> Formula:
        tok = self.ts.peek()
        if tok.text == "(":
            self.ts.next()
            f = self.formula()
            self.ts.expect(")")
            return f
        if tok.text in ("forall", "exists"):
            # quantifiers only at formula level; atoms must parenthesize them
            return self.formula()
        if tok.kind not in ("name", "number"):
            self.ts.fail("expected an atom")
        # relation atom or term equality
        if (
            tok.kind == "name"
            and self.sig is not None
            and tok.text in self.sig.relations
        ):
            self.ts.next()
            self.ts.expect("(")
            args = self.termlist()
            self.ts.expect(")")
            if len(args) != self.sig.relations[tok.text]:
                raise ParseError(
                    f"relation {tok.text} expects"
                    f" {self.sig.relations[tok.text]} arguments",
                    tok.line,
                    tok.column,
                )
            return Rel(tok.text, tuple(args))
        term = self.term(allow_bare_call=self.sig is None)
        if self.ts.at("="):
            self.ts.next()
            right = self.term()
            return Eq(term, right)
        # a bare application with no signature is read as a relation atom
        if isinstance(term, Func) and self.sig is None:
            return Rel(term.name, term.args)
        self.ts.fail("term found where a formula was expected")

    def termlist(self) -> List[Term]:
        args = [self.term()]
        while self.ts.at(","):
            self.ts.next()
            args.append(self.term())
        return args

    def term(self, allow_bare_call: bool = False) -> Term:
        tok = self.ts.peek()
        if tok.kind != "name" or tok.text in _KEYWORDS:
            self.ts.fail("expected a term")
        self.ts.next()
        if self.ts.at("("):
            self.ts.next()
            args = self.termlist()
            self.ts.expect(")")
            if self.sig is not None:
                if tok.text not in self.sig.functions:
                    if not allow_bare_call:
                        raise ParseError(
                            f"unknown function {tok.text}", tok.line, tok.column
                        )
                elif len(args) != self.sig.functions[tok.text]:
                    raise ParseError(
                        f"function {tok.text} expects"
                        f" {self.sig.functions[tok.text]} arguments",
                        tok.line,
                        tok.column,
                    )
            return Func(tok.text, tuple(args))
        if self.sig is not None and tok.text in self.sig.constants:
            return Const(tok.text)
        if self.sig is not None and (
            tok.text in self.sig.relations or tok.text in self.sig.functions
        ):
            raise ParseError(
                f"{tok.text} is not usable as a variable", tok.line, tok.column
            )
        return Var(tok.text)


def _alpha_rename(f: Formula) -> Formula:
    """Give every quantifier a fresh bound name, deterministically.

    Fresh names are b0, b1, ... in traversal order, skipping any name that
    occurs free in the whole formula, so re-parsing serialized output is the
    identity.
    """
    taken = set(free_vars(f))
    counter = [0]

    def fresh() -> str:
        while True:
            name = f"b{counter[0]}"
            counter[0] += 1
            if name not in taken:
                return name

    def rename_term(t: Term, env: Dict[str, str]) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name))
        if isinstance(t, Const):
            return t
        return Func(t.name, tuple(rename_term(a, env) for a in t.args))

    def walk(g: Formula, env: Dict[str, str]) -> Formula:
        if isinstance(g, Eq):
            return Eq(rename_term(g.left, env), rename_term(g.right, env))
        if isinstance(g, Rel):
            return Rel(g.name, tuple(rename_term(a, env) for a in g.args))
        if isinstance(g, Not):
            return Not(walk(g.sub, env))
        if isinstance(g, And):
            return And(walk(g.left, env), walk(g.right, env))
        if isinstance(g, Or):
            return Or(walk(g.left, env), walk(g.right, env))
        if isinstance(g, Implies):
            return Implies(walk(g.left, env), walk(g.right, env))
        if isinstance(g, (Exists, Forall)):
            name = fresh()
            body = walk(g.body, {**env, g.var: name})
            return type(g)(name, body)
        raise TypeError(f"not a formula: {g!r}")

    return walk(f, {})


def parse_formula(text: str, sig: Optional[Signature] = None) -> Formula:
    """Parse a formula; with a signature, symbols and arities are checked.

    Without a signature every bare identifier is a variable and bare
    applications are read as relation atoms.
    """
    parser = _FormulaParser(_TokenStream(text), sig)
    f = parser.parse()
    f = _alpha_rename(f)
    if sig is not None:
        validate_formula(f, sig)
    return f


# ---------------------------------------------------------------------------
# formula serialization


def serialize_term(t: Term) -> str:
    if isinstance(t, (Var, Const)):
        return t.name
    if isinstance(t, Func):
        return f"{t.name}({', '.join(serialize_term(a) for a in t.args)})"
    raise TypeError(f"not a term: {t!r}")


def serialize_formula(f: Formula) -> str:
    """Canonical form: binary connectives fully parenthesized, atoms bare."""
    if isinstance(f, Eq):
        return f"{serialize_term(f.left)} = {serialize_term(f.right)}"
    if isinstance(f, Rel):
        return f"{f.name}({', '.join(serialize_term(a) for a in f.args)})"
    if isinstance(f, Not):
        sub = serialize_formula(f.sub)
        if isinstance(f.sub, (Exists, Forall)):
            sub = f"({sub})"
        return f"!{sub}"
    if isinstance(f, And):
        return f"({_operand(f.left)} & {_operand(f.right)})"
    if isinstance(f, Or):
        return f"({_operand(f.left)} | {_operand(f.right)})"
    if isinstance(f, Implies):
        return f"({_operand(f.left)} -> {_operand(f.right)})"
    if isinstance(f, Exists):
        return f"exists {f.var}. {serialize_formula(f.body)}"
    if isinstance(f, Forall):
        return f"forall {f.var}. {serialize_formula(f.body)}"
    raise TypeError(f"not a formula: {f!r}")


def _operand(f: Formula) -> str:
    text = serialize_formula(f)
    if isinstance(f, (Exists, Forall)):
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# signature files


def parse_signature(text: str) -> Signature:
    ts = _TokenStream(text)
    relations: Dict[str, int] = {}
    functions: Dict[str, int] = {}
    constants = set()
    while ts.peek().kind != "end":
        tok = ts.next()
        if tok.text not in ("rel", "fun", "const"):
            raise ParseError(
                f"expected rel/fun/const, found {tok.text!r}", tok.line, tok.column
            )
        name = ts.peek()
        if name.kind != "name" or name.text in _KEYWORDS:
            ts.fail("expected a symbol name")
        ts.next()
        if name.text in relations or name.text in functions or name.text in constants:
            raise ParseError(f"duplicate symbol {name.text}", name.line, name.column)
        if tok.text == "const":
            constants.add(name.text)
        else:
            ts.expect("/")
            arity_tok = ts.peek()
            if arity_tok.kind != "number":
                ts.fail("expected an arity")
            ts.next()
            arity = int(arity_tok.text)
            if arity < 1:
                raise ParseError("arity must be positive", arity_tok.line, arity_tok.column)
            (relations if tok.text == "rel" else functions)[name.text] = arity
        if ts.at(";"):
            ts.next()
    try:
        return Signature(relations, functions, frozenset(constants))
    except SignatureError as exc:
        raise ParseError(str(exc)) from exc


def serialize_signature(sig: Signature) -> str:
    lines = [f"rel {name}/{sig.relations[name]}" for name in sorted(sig.relations)]
    lines += [f"fun {name}/{sig.functions[name]}" for name in sorted(sig.functions)]
    lines += [f"const {name}" for name in sorted(sig.constants)]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# structure files


def _parse_int_tuple(ts: _TokenStream) -> Tuple[int, ...]:
    ts.expect("(")
    out = []
    while True:
        tok = ts.peek()
        if tok.kind != "number":
            ts.fail("expected an element index")
        ts.next()
        out.append(int(tok.text))
        if ts.at(","):
            ts.next()
            continue
        break
    ts.expect(")")
    return tuple(out)


def parse_structure(text: str, sig: Signature) -> FiniteStructure:
    ts = _TokenStream(text)
    ts.expect("size")
    size_tok = ts.peek()
    if size_tok.kind != "number":
        ts.fail("expected a universe size")
    ts.next()
    size = int(size_tok.text)
    ts.expect(";")
    relations: Dict[str, frozenset] = {}
    functions: Dict[str, Dict[Tuple[int, ...], int]] = {}
    constants: Dict[str, int] = {}
    while ts.peek().kind != "end":
        kind = ts.next()
        if kind.text not in ("rel", "fun", "const"):
            raise ParseError(
                f"expected rel/fun/const, found {kind.text!r}", kind.line, kind.column
            )
        name_tok = ts.peek()
        if name_tok.kind != "name":
            ts.fail("expected a symbol name")
        ts.next()
        name = name_tok.text
        ts.expect("=")
        if kind.text == "rel":
            if name in relations:
                raise ParseError(f"duplicate table for {name}", name_tok.line, name_tok.column)
            tuples = set()
            ts.expect("{")
            while not ts.at("}"):
                tuples.add(_parse_int_tuple(ts))
                if ts.at(","):
                    ts.next()
            ts.expect("}")
            relations[name] = frozenset(tuples)
        elif kind.text == "fun":
            if name in functions:
                raise ParseError(f"duplicate table for {name}", name_tok.line, name_tok.column)
            table: Dict[Tuple[int, ...], int] = {}
            ts.expect("{")
            while not ts.at("}"):
                key = _parse_int_tuple(ts)
                ts.expect("->")
                val_tok = ts.peek()
                if val_tok.kind != "number":
                    ts.fail("expected a function value")
                ts.next()
                table[key] = int(val_tok.text)
                if ts.at(","):
                    ts.next()
            ts.expect("}")
            functions[name] = table
        else:
            if name in constants:
                raise ParseError(f"duplicate value for {name}", name_tok.line, name_tok.column)
            val_tok = ts.peek()
            if val_tok.kind != "number":
                ts.fail("expected a constant value")
            ts.next()
            constants[name] = int(val_tok.text)
        ts.expect(";")
    for name in sig.relations:
        relations.setdefault(name, frozenset())
    try:
        return FiniteStructure(sig, size, relations, functions, constants)
    except (StructureError, SignatureError) as exc:
        raise ParseError(str(exc)) from exc


def serialize_structure(s: FiniteStructure, inline: bool = False) -> str:
    parts = [f"size {s.universe_size};"]
    for name in sorted(s.relations):
        tuples = ", ".join(
            "(" + ",".join(str(e) for e in tup) + ")"
            for tup in sorted(s.relations[name])
        )
        parts.append(f"rel {name} = {{{tuples}}};")
    for name in sorted(s.functions):
        entries = ", ".join(
            "(" + ",".join(str(e) for e in key) + ")->" + str(val)
            for key, val in sorted(s.functions[name].items())
        )
        parts.append(f"fun {name} = {{{entries}}};")
    for name in sorted(s.constants):
        parts.append(f"const {name} = {s.constants[name]};")
    sep = " " if inline else "\n"
    return sep.join(parts) + ("" if inline else "\n")


# ---------------------------------------------------------------------------
# family files


def parse_family(
    text: str,
    sig: Signature,
    resolver: Optional[Callable[[str], str]] = None,
) -> Family:
    """Parse "LABEL: path-or-inline-structure" lines.

    An entry whose right-hand side starts with the `size` keyword is an
    inline structure; anything else is a path handed to `resolver`, which
    must return structure text.
    """
    labels: List[str] = []
    structures: Dict[str, FiniteStructure] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError("expected 'LABEL: structure-or-path'", lineno, 1)
        label, rest = line.split(":", 1)
        label = label.strip()
        rest = rest.strip()
        if not label or not label.replace("_", "").isalnum():
            raise ParseError(f"bad index label {label!r}", lineno, 1)
        if label in structures:
            raise ParseError(f"duplicate index label {label}", lineno, 1)
        if rest.startswith("size"):
            body = rest
        else:
            if resolver is None:
                raise ParseError(
                    f"no resolver for structure path {rest!r}", lineno, 1
                )
            body = resolver(rest)
        structures[label] = parse_structure(body, sig)
        labels.append(label)
    try:
        return Family(tuple(labels), structures)
    except (StructureError, SignatureError) as exc:
        raise ParseError(str(exc)) from exc


def serialize_family(fam: Family) -> str:
    lines = [
        f"{label}: {serialize_structure(fam.structures[label], inline=True)}"
        for label in fam.labels
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# acceptable-sequence dumps (the --psi-dump format)


def serialize_acceptable_sequence(seq) -> str:
    """Stable text form: cell count, known-empty cells, the cells in the
    formula grammar, the set formula in the set grammar."""
    from .setalgebra import serialize_set_formula

    lines = [f"cells: {len(seq.cells)}"]
    lines.append(
        "known-empty: " + ",".join(str(j) for j in sorted(seq.known_empty))
    )
    for j, theta in enumerate(seq.cells):
        lines.append(f"theta {j}: {serialize_formula(theta)}")
    lines.append(f"psi: {serialize_set_formula(seq.psi)}")
    return "\n".join(lines) + "\n"


def parse_acceptable_sequence(text: str, sig: Optional[Signature] = None):
    from .fv import AcceptableSequence, PartitionSequence
    from .setalgebra import parse_set_formula

    cells = {}
    psi = None
    count = None
    empty: Tuple[int, ...] = ()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ParseError("expected 'key: value'", lineno, 1)
        key, value = line.split(":", 1)
        key = key.strip()
        value = value.strip()
        if key == "cells":
            count = int(value)
        elif key == "known-empty":
            empty = tuple(int(v) for v in value.split(",") if v.strip())
        elif key.startswith("theta"):
            cells[int(key.split()[1])] = parse_formula(value, sig)
        elif key == "psi":
            psi = parse_set_formula(value)
        else:
            raise ParseError(f"unknown key {key!r}", lineno, 1)
    if count is None or psi is None or set(cells) != set(range(count)):
        raise ParseError("incomplete acceptable-sequence dump")
    return AcceptableSequence(
        psi,
        PartitionSequence(tuple(cells[j] for j in range(count))),
        frozenset(empty),
    )
