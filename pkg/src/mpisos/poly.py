"""Sparse multivariate polynomials keyed by exponent tuples.

A polynomial in n variables is a map from exponent tuples (one nonnegative
integer per variable) to nonzero float coefficients; the zero polynomial has
an empty term map.  Values are treated as immutable after construction and can
be shared freely between threads.

Exponents are ordered graded-lexicographically (total degree first, then tuple
order), which fixes the canonical iteration order used for printing, dumps and
golden tests throughout the package.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable, Iterator, Mapping

Exponent = tuple[int, ...]

NEG_INF = float("-inf")


def total_degree(alpha: Exponent) -> int:
    return sum(alpha)


def grlex_key(alpha: Exponent) -> tuple[int, Exponent]:
    """Sort key realizing graded lexicographic order."""
    return (sum(alpha), alpha)


def exp_add(a: Exponent, b: Exponent) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


def monomial_basis(dim: int, max_degree: int) -> tuple[Exponent, ...]:
    """All exponents in `dim` variables with total degree <= max_degree, graded-lex sorted."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if max_degree < 0:
        return ()
    basis: list[Exponent] = []
    for deg in range(max_degree + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            alpha = [0] * dim
            for i in combo:
                alpha[i] += 1
            basis.append(tuple(alpha))
    basis.sort(key=grlex_key)
    return tuple(basis)


def default_names(dim: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(dim))


def monomial_str(alpha: Exponent, names: tuple[str, ...] | None = None) -> str:
    """Render one monomial, e.g. () -> "1", (2,1,0) -> "x1^2*x2"."""
    if names is None:
        names = default_names(len(alpha))
    parts = []
    for name, a in zip(names, alpha):
        if a == 1:
            parts.append(name)
        elif a > 1:
            parts.append(f"{name}^{a}")
    return "*".join(parts) if parts else "1"


@dataclass(frozen=True)
class Polynomial:
    """Immutable sparse polynomial: dimension plus a term map with nonzero coefficients."""

    dim: int
    terms: Mapping[Exponent, float]

    def __post_init__(self) -> None:
        for alpha, c in self.terms.items():
            if len(alpha) != self.dim:
                raise ValueError(f"exponent {alpha} does not have dim {self.dim}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            if c == 0.0:
                raise ValueError(f"stored coefficient for {alpha} is zero")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(dim: int) -> Polynomial:
        return Polynomial(dim, {})

    @staticmethod
    def constant(dim: int, value: float) -> Polynomial:
        if value == 0.0:
            return Polynomial.zero(dim)
        return Polynomial(dim, {(0,) * dim: float(value)})

    @staticmethod
    def variable(dim: int, index: int) -> Polynomial:
        if not 0 <= index < dim:
            raise ValueError(f"variable index {index} out of range for dim {dim}")
        alpha = tuple(1 if i == index else 0 for i in range(dim))
        return Polynomial(dim, {alpha: 1.0})

    @staticmethod
    def from_terms(dim: int, terms: Mapping[Exponent, float]) -> Polynomial:
        """Build a polynomial, dropping exact-zero coefficients."""
        return Polynomial(dim, {a: float(c) for a, c in terms.items() if c != 0.0})

    # -- basic queries -----------------------------------------------------

    @property
    def degree(self) -> float:
        """Total degree; -inf for the zero polynomial."""
        if not self.terms:
            return NEG_INF
        return max(sum(a) for a in self.terms)

    def coefficient(self, alpha: Exponent) -> float:
        return self.terms.get(alpha, 0.0)

    def sorted_terms(self) -> list[tuple[Exponent, float]]:
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    def __bool__(self) -> bool:
        return bool(self.terms)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: Polynomial) -> Polynomial:
        if not isinstance(other, Polynomial):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in addition")
        acc = dict(self.terms)
        for alpha, c in other.terms.items():
            s = acc.get(alpha, 0.0) + c
            if s == 0.0:
                acc.pop(alpha, None)
            else:
                acc[alpha] = s
        return Polynomial(self.dim, acc)

    def __neg__(self) -> Polynomial:
        return Polynomial(self.dim, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other: Polynomial) -> Polynomial:
        return self + (-other)

    def __mul__(self, other: Polynomial | float | int) -> Polynomial:
        if isinstance(other, (int, float)):
            if other == 0:
                return Polynomial.zero(self.dim)
            return Polynomial(self.dim, {a: c * other for a, c in self.terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in multiplication")
        acc: dict[Exponent, float] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                key = exp_add(a, b)
                s = acc.get(key, 0.0) + ca * cb
                if s == 0.0:
                    acc.pop(key, None)
                else:
                    acc[key] = s
        return Polynomial(self.dim, acc)

    def __rmul__(self, other: float | int) -> Polynomial:
        return self.__mul__(other)

    def differentiate(self, index: int) -> Polynomial:
        """Partial derivative with respect to variable `index`."""
        if not 0 <= index < self.dim:
            raise ValueError(f"variable index {index} out of range")
        acc: dict[Exponent, float] = {}
        for alpha, c in self.terms.items():
            a = alpha[index]
            if a == 0:
                continue
            beta = alpha[:index] + (a - 1,) + alpha[index + 1:]
            acc[beta] = acc.get(beta, 0.0) + a * c
        return Polynomial.from_terms(self.dim, acc)

    def __call__(self, point: Iterable[float]) -> float:
        pt = tuple(point)
        if len(pt) != self.dim:
            raise ValueError(f"point has {len(pt)} coordinates, expected {self.dim}")
        value = 0.0
        for alpha, c in self.terms.items():
            term = c
            for x, a in zip(pt, alpha):
                if a:
                    term *= x ** a
            value += term
        return value

    # -- rendering ---------------------------------------------------------

    def to_string(self, names: tuple[str, ...] | None = None) -> str:
        """Canonical text form, graded-lex from the highest term downwards."""
        if not self.terms:
            return "0"
        if names is None:
            names = default_names(self.dim)
        pieces: list[str] = []
        for alpha, c in sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]), reverse=True):
            mono = monomial_str(alpha, names)
            mag = abs(c)
            if mono == "1":
                body = repr(mag)
            elif mag == 1.0:
                body = mono
            else:
                body = f"{mag!r}*{mono}"
            if not pieces:
                pieces.append(body if c > 0 else f"-{body}")
            else:
                pieces.append(f"+ {body}" if c > 0 else f"- {body}")
        return " ".join(pieces)

    def __repr__(self) -> str:  # deterministic, sorted
        inner = ", ".join(f"{a}: {c!r}" for a, c in self.sorted_terms())
        return f"Polynomial(dim={self.dim}, {{{inner}}})"


# -- parsing ---------------------------------------------------------------

class PolynomialSyntaxError(ValueError):
    """Parse failure with the offending position in the input text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            where = pos + (len(text) - pos - len(stripped))
            raise PolynomialSyntaxError(f"unexpected character {stripped[0]!r}", where)
        if match.lastgroup == "number":
            tokens.append(("number", match.group("number"), match.start("number")))
        elif match.lastgroup == "name":
            tokens.append(("name", match.group("name"), match.start("name")))
        else:
            op = match.group("op")
            tokens.append(("op", "^" if op == "**" else op, match.start("op")))
        pos = match.end()
    return tokens


def parse_polynomial(text: str, variables: Iterable[str]) -> Polynomial:
    """Parse a sum of terms like ``28*x1 - x1*x3 - 8/3*x3`` over the given variables.

    Coefficients may be integers, decimals, or integer ratios ``a/b`` (kept exact
    until the final float conversion).  Exponents use ``^`` or ``**`` with a
    nonnegative integer.  Raises PolynomialSyntaxError with a position on bad
    syntax, and ValueError for unknown variable names.
    """
    names = list(variables)
    index = {name: i for i, name in enumerate(names)}
    dim = len(names)
    if dim == 0:
        raise ValueError("need at least one variable name")
    tokens = _tokenize(text)
    if not tokens:
        raise PolynomialSyntaxError("empty polynomial text", 0)

    acc: dict[Exponent, float] = {}
    k = 0

    def peek() -> tuple[str, str, int] | None:
        return tokens[k] if k < len(tokens) else None

    while k < len(tokens):
        sign = 1.0
        while True:  # leading signs of the term
            tok = peek()
            if tok is not None and tok[0] == "op" and tok[1] in "+-":
                if tok[1] == "-":
                    sign = -sign
                k += 1
            else:
                break
        tok = peek()
        if tok is None:
            raise PolynomialSyntaxError("dangling sign", tokens[-1][2])

        coeff = Fraction(1)
        coeff_float: float | None = None
        alpha = [0] * dim
        expect_factor = True
        while expect_factor:
            tok = peek()
            if tok is None:
                raise PolynomialSyntaxError("term ends after '*'", tokens[-1][2])
            kind, value, pos = tok
            if kind == "number":
                k += 1
                if "." in value or "e" in value or "E" in value:
                    num = float(value)
                else:
                    num = Fraction(int(value))
                nxt = peek()
                if nxt is not None and nxt[0] == "op" and nxt[1] == "/":
                    k += 1
                    den_tok = peek()
                    if den_tok is None or den_tok[0] != "number" or not den_tok[1].isdigit():
                        raise PolynomialSyntaxError("expected integer denominator", pos)
                    k += 1
                    if not isinstance(num, Fraction):
                        raise PolynomialSyntaxError("ratio parts must be integers", pos)
                    num = num / Fraction(int(den_tok[1]))
                if isinstance(num, Fraction):
                    coeff *= num
                else:
                    coeff_float = (coeff_float if coeff_float is not None else 1.0) * num
            elif kind == "name":
                k += 1
                if value not in index:
                    raise ValueError(f"unknown variable {value!r} at position {pos}")
                power = 1
                nxt = peek()
                if nxt is not None and nxt[0] == "op" and nxt[1] == "^":
                    k += 1
                    pw = peek()
                    if pw is None or pw[0] != "number" or not pw[1].isdigit():
                        where = pw[2] if pw is not None else pos
                        raise PolynomialSyntaxError("expected nonnegative integer exponent", where)
                    power = int(pw[1])
                    k += 1
                alpha[index[value]] += power
            else:
                raise PolynomialSyntaxError(f"unexpected operator {value!r}", pos)

            nxt = peek()
            if nxt is not None and nxt[0] == "op" and nxt[1] == "*":
                k += 1
                expect_factor = True
            else:
                expect_factor = False

        c = float(coeff) * (coeff_float if coeff_float is not None else 1.0) * sign
        key = tuple(alpha)
        s = acc.get(key, 0.0) + c
        if s == 0.0:
            acc.pop(key, None)
        else:
            acc[key] = s

        trailing = peek()
        if trailing is not None and not (trailing[0] == "op" and trailing[1] in "+-"):
            raise PolynomialSyntaxError("expected '+' or '-' between terms", trailing[2])

    return Polynomial(dim, acc)


# -- support sets ----------------------------------------------------------

@dataclass(frozen=True)
class SupportSet:
    """A finite set of exponents in a fixed dimension."""

    dim: int
    elements: frozenset[Exponent]

    def __post_init__(self) -> None:
        for alpha in self.elements:
            if len(alpha) != self.dim:
                raise ValueError(f"exponent {alpha} does not have dim {self.dim}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")

    @staticmethod
    def of(dim: int, elements: Iterable[Exponent]) -> SupportSet:
        return SupportSet(dim, frozenset(tuple(a) for a in elements))

    def __iter__(self) -> Iterator[Exponent]:
        return iter(sorted(self.elements, key=grlex_key))

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, alpha: Exponent) -> bool:
        return alpha in self.elements

    def union(self, *others: SupportSet | Iterable[Exponent]) -> SupportSet:
        acc = set(self.elements)
        for other in others:
            if isinstance(other, SupportSet):
                if other.dim != self.dim:
                    raise ValueError("dimension mismatch in union")
                acc |= other.elements
            else:
                acc |= {tuple(a) for a in other}
        return SupportSet(self.dim, frozenset(acc))

    def restricted(self, max_degree: int) -> SupportSet:
        """Subset of elements with total degree <= max_degree."""
        return SupportSet(self.dim, frozenset(a for a in self.elements if sum(a) <= max_degree))

    def minkowski(self, other: SupportSet) -> SupportSet:
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in Minkowski sum")
        return SupportSet(
            self.dim,
            frozenset(exp_add(a, b) for a in self.elements for b in other.elements),
        )

    def __repr__(self) -> str:
        inner = ", ".join(str(a) for a in self)
        return f"SupportSet(dim={self.dim}, [{inner}])"


def support(p: Polynomial) -> SupportSet:
    """The exponents carrying nonzero coefficients of p."""
    return SupportSet(p.dim, frozenset(p.terms))


# -- dynamical systems -----------------------------------------------------

@dataclass(frozen=True)
class DynamicalSystem:
    """Polynomial vector field together with the basic closed set it lives on.

    `field` lists one polynomial per state variable; `constraints` lists the
    inequality polynomials p_j >= 0 cutting out the state constraint set.
    """

    field: tuple[Polynomial, ...]
    constraints: tuple[Polynomial, ...]

    def __post_init__(self) -> None:
        if not self.field:
            raise ValueError("field must have at least one component")
        n = len(self.field)
        for f in self.field:
            if f.dim != n:
                raise ValueError("each field component must have dim equal to the state count")
        if not self.constraints:
            raise ValueError("need at least one constraint polynomial")
        for p in self.constraints:
            if p.dim != n:
                raise ValueError("constraint dimension mismatch")
            if not p.terms:
                raise ValueError("constraint polynomials must be nonzero")

    @property
    def dim(self) -> int:
        return len(self.field)

    @property
    def field_degree(self) -> int:
        """Max total degree over field components; zero components count as 0."""
        degs = [int(f.degree) for f in self.field if f.terms]
        return max(degs, default=0)

    @property
    def constraint_degrees(self) -> tuple[int, ...]:
        return tuple(int(p.degree) for p in self.constraints)

    @property
    def max_constraint_degree(self) -> int:
        return max(self.constraint_degrees)

    def multipliers(self) -> tuple[Polynomial, ...]:
        """The constraint list prefixed with the constant 1 (index 0)."""
        return (Polynomial.constant(self.dim, 1.0), *self.constraints)


def generic_lie_support(v_support: SupportSet, sys: DynamicalSystem) -> SupportSet:
    """Support of grad(v) . f for v with generic coefficients on v_support.

    No cancellation is assumed: the result is the union over monomials x^a of
    v_support and variables i with a_i > 0 of (a - e_i) + supp(f_i).
    """
    if v_support.dim != sys.dim:
        raise ValueError("support dimension does not match the system")
    out: set[Exponent] = set()
    f_supports = [list(f.terms) for f in sys.field]
    for alpha in v_support.elements:
        for i, a_i in enumerate(alpha):
            if a_i == 0:
                continue
            shifted = alpha[:i] + (a_i - 1,) + alpha[i + 1:]
            for delta in f_supports[i]:
                out.add(exp_add(shifted, delta))
    return SupportSet(sys.dim, frozenset(out))


def lie_polynomial(v: Polynomial, sys: DynamicalSystem, beta: float = 1.0) -> Polynomial:
    """The certificate left-hand side beta*v - grad(v) . f."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if v.dim != sys.dim:
        raise ValueError("polynomial dimension does not match the system")
    out = beta * v
    for i, f_i in enumerate(sys.field):
        out = out - v.differentiate(i) * f_i
    return out
