"""Deterministic corpora shared by the module tests and the acceptance suite.

Everything is seeded and order-stable so expected values can be frozen.
The sentence signature is one binary E, one unary P, one constant c.
"""

import itertools
import random

from fvkit.logic import Family, FiniteStructure
from fvkit.parsing import parse_formula, parse_signature, serialize_formula
from fvkit.setalgebra import (
    CAtLeast,
    Comp,
    Join,
    Meet,
    One,
    RingProd,
    RingSum,
    SAnd,
    SetExists,
    SetForall,
    SNot,
    SOr,
    SVar,
    TermEq,
    Zero,
)
from fvkit.logic import And, Eq, Exists, Forall, Implies, Not, Or, Rel

SIG = parse_signature("rel E/2\nrel P/1\nconst c")

SENTENCE_SEED = 20260811
FAMILY_SEED = 1107
SET_SEED = 3519
PAIR_SEED = 9242

CURATED = [
    "P(c)",
    "!P(c)",
    "E(c,c)",
    "!E(c,c)",
    "forall x. x = x",
    "exists x. !(x = x)",
    "exists x. P(x)",
    "forall x. P(x)",
    "exists x. !P(x)",
    "forall x. !P(x)",
    "exists x. E(x,x)",
    "forall x. E(x,x)",
    "exists x. E(x,c)",
    "exists x. x = c",
    "forall x. x = c",
    "exists x. !(x = c)",
    "exists x. exists y. !(x = y)",
    "exists x. exists y. E(x,y)",
    "forall x. exists y. E(x,y)",
    "exists x. forall y. E(x,y)",
    "forall x. forall y. E(x,y)",
    "exists x. exists y. E(y,x)",
    "forall x. exists y. E(y,x)",
    "exists x. (P(x) & E(x,c))",
    "exists x. (P(x) & E(x,x))",
    "exists x. (P(x) | E(x,x))",
    "forall x. (P(x) -> E(x,x))",
    "forall x. (E(x,x) -> P(x))",
    "forall x. (P(x) | !P(x))",
    "forall x. (x = c | P(x))",
    "exists x. (!(x = c) & E(c,x))",
    "(exists x. P(x)) -> P(c)",
    "P(c) -> (exists x. P(x))",
    "(forall x. P(x)) -> P(c)",
    "(exists x. P(x)) & (exists x. !P(x))",
    "(forall x. P(x)) | (forall x. !P(x))",
    "!(exists x. (P(x) & !P(x)))",
    "(exists x. E(x,x)) | (forall x. P(x))",
    "(exists x. exists y. E(x,y)) -> (exists x. P(x))",
    "(forall x. exists y. E(x,y)) & (exists x. P(x))",
    "!(forall x. exists y. E(x,y))",
    "E(c,c) & P(c)",
    "E(c,c) | !P(c)",
    "exists x. (P(x) & (exists y. E(x,y)))",
    "forall x. (P(x) -> (exists y. E(x,y)))",
    "exists x. (P(x) & (forall y. E(x,y)))",
    "forall x. ((exists y. E(x,y)) -> P(x))",
    "exists x. (P(x) | (exists y. E(y,x)))",
]


def curated_sentences():
    return [parse_formula(text, SIG) for text in CURATED]


def cell_count(f):
    """Cells of the decomposition, computed without building it."""
    if isinstance(f, (Eq, Rel)):
        return 2
    if isinstance(f, Not):
        return cell_count(f.sub)
    if isinstance(f, (And, Or)):
        return cell_count(f.left) * cell_count(f.right)
    if isinstance(f, Implies):
        return cell_count(f.left) * cell_count(f.right)
    if isinstance(f, (Exists, Forall)):
        return 2 ** cell_count(f.body)
    raise TypeError(f)


def _atom(rng, variables):
    terms = list(variables) + ["c"]
    kind = rng.choice(["P", "E", "eq"])
    if kind == "P":
        return f"P({rng.choice(terms)})"
    if kind == "E":
        return f"E({rng.choice(terms)}, {rng.choice(terms)})"
    return f"{rng.choice(terms)} = {rng.choice(terms)}"


def _literal(rng, variables):
    atom = _atom(rng, variables)
    return f"!{atom}" if rng.random() < 0.35 else atom


def _matrix(rng, variables, max_atoms):
    n = rng.randint(1, max_atoms)
    parts = [_literal(rng, variables) for _ in range(n)]
    out = parts[0]
    for p in parts[1:]:
        out = f"({out} {rng.choice(['&', '|', '->'])} {p})"
    return out


def _sentence_text(rng):
    shape = rng.choice(
        ["qf", "qf", "q1", "q1", "q1", "q2", "q2", "combo", "combo", "nested"]
    )
    quant = lambda: rng.choice(["exists", "forall"])
    if shape == "qf":
        return _matrix(rng, [], 3)
    if shape == "q1":
        return f"{quant()} x. {_matrix(rng, ['x'], 3)}"
    if shape == "q2":
        body = _literal(rng, ["x", "y"])
        return f"{quant()} x. {quant()} y. {body}"
    if shape == "combo":
        a = f"({quant()} x. {_matrix(rng, ['x'], 2)})"
        b = f"({quant()} x. {_matrix(rng, ['x'], 2)})"
        return f"({a} {rng.choice(['&', '|', '->'])} {b})"
    inner = f"({quant()} y. {_literal(rng, ['x', 'y'])})"
    outer_lit = _literal(rng, ["x"])
    return f"{quant()} x. ({outer_lit} {rng.choice(['&', '|'])} {inner})"


def generated_sentences(count=200, seed=SENTENCE_SEED, max_cells=1024):
    rng = random.Random(seed)
    seen = {serialize_formula(phi) for phi in curated_sentences()}
    out = []
    while len(out) < count:
        text = _sentence_text(rng)
        if rng.random() < 0.2:
            text = f"!({text})"
        phi = parse_formula(text, SIG)
        if cell_count(phi) > max_cells:
            continue
        key = serialize_formula(phi)
        if key in seen:
            continue
        seen.add(key)
        out.append(phi)
    return out


def all_sentences():
    return curated_sentences() + generated_sentences()


def _handpicked_structures():
    def make(n, E, P, c):
        return FiniteStructure(
            SIG, n, {"E": frozenset(E), "P": frozenset(P)}, {}, {"c": c}
        )

    return [
        make(1, [], [], 0),
        make(1, [(0, 0)], [(0,)], 0),
        make(1, [], [(0,)], 0),
        make(1, [(0, 0)], [], 0),
        make(2, [(0, 1)], [(0,)], 0),
        make(2, [(0, 1), (1, 0)], [(0,), (1,)], 1),
        make(2, [], [], 0),
        make(2, [(0, 0), (1, 1)], [(1,)], 0),
        make(3, [(0, 1), (1, 2), (2, 0)], [(0,)], 2),
        make(3, [], [(0,), (1,), (2,)], 0),
        make(3, [(i, j) for i in range(3) for j in range(3)], [], 1),
    ]


def structure_pool(extra=24, seed=FAMILY_SEED):
    rng = random.Random(seed)
    pool = _handpicked_structures()
    while len(pool) < len(_handpicked_structures()) + extra:
        n = rng.randint(1, 3)
        E = frozenset(
            (i, j)
            for i in range(n)
            for j in range(n)
            if rng.random() < 0.4
        )
        P = frozenset((i,) for i in range(n) if rng.random() < 0.5)
        pool.append(
            FiniteStructure(SIG, n, {"E": E, "P": P}, {}, {"c": rng.randrange(n)})
        )
    return pool


def families(count=120, seed=FAMILY_SEED):
    rng = random.Random(seed + 1)
    pool = structure_pool()
    out = []
    for _ in range(count):
        k = rng.randint(1, 3)
        labels = tuple(f"i{j}" for j in range(k))
        out.append(
            Family(labels, {l: rng.choice(pool) for l in labels})
        )
    return out


def corpus_pairs(count=520, seed=PAIR_SEED):
    rng = random.Random(seed)
    sentences = all_sentences()
    fams = families()
    return [
        (rng.choice(sentences), rng.choice(fams)) for _ in range(count)
    ]


# ---------------------------------------------------------------------------
# set-formula corpus


def _set_term(rng, names, depth):
    if depth == 0 or rng.random() < 0.4:
        roll = rng.random()
        if roll < 0.7 and names:
            return SVar(rng.choice(names))
        if roll < 0.85:
            return Zero()
        return One()
    op = rng.choice([Meet, Join, RingSum, RingProd, "comp"])
    if op == "comp":
        return Comp(_set_term(rng, names, depth - 1))
    return op(_set_term(rng, names, depth - 1), _set_term(rng, names, depth - 1))


def _set_formula(rng, names, depth, quantifiers):
    if depth == 0 or rng.random() < 0.45:
        if rng.random() < 0.7:
            return CAtLeast(rng.randint(1, 3), _set_term(rng, names, 1))
        return TermEq(_set_term(rng, names, 1), _set_term(rng, names, 1))
    roll = rng.random()
    if quantifiers > 0 and roll < 0.3:
        var = f"w{quantifiers}"
        cls = SetExists if rng.random() < 0.5 else SetForall
        return cls(
            var, _set_formula(rng, names + [var], depth - 1, quantifiers - 1)
        )
    if roll < 0.5:
        return SNot(_set_formula(rng, names, depth - 1, quantifiers))
    cls = SAnd if roll < 0.75 else SOr
    return cls(
        _set_formula(rng, names, depth - 1, quantifiers),
        _set_formula(rng, names, depth - 1, quantifiers),
    )


def set_formulas(count=1000, seed=SET_SEED):
    """(psi, m) pairs: free variables among y0..ym, depth <= 2, C <= 3."""
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        m = rng.randint(0, 2)
        names = [f"y{j}" for j in range(m + 1)]
        quantifiers = rng.choice([0, 0, 1, 1, 2])
        psi = _set_formula(rng, names, 2, quantifiers)
        out.append((psi, m))
    return out


def partition_assignments(m, labels):
    """Every function from the labels to the cells y0..ym."""
    labels = list(labels)
    for combo in itertools.product(range(m + 1), repeat=len(labels)):
        yield {
            f"y{j}": frozenset(
                l for l, cell in zip(labels, combo) if cell == j
            )
            for j in range(m + 1)
        }
