"""Arithmetic-circuit DAGs: representation, evaluation, metrics, transforms.

A circuit is a rooted DAG of addition/multiplication/variable nodes with
ordered children.  Constants are not allowed except through the conventions
that an empty sum denotes the ring zero and an empty product the ring unit.

Nodes live in one indexed arena (flat arrays, children stored as indices)
so that large builder-generated circuits stay compact and the compiled
evaluation kernels can consume them directly.  Children always have smaller
indices than their parent, so arena order is a topological order.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

from motifsieve.gf2e import gf_add, gf_mul

OP_ADD = 0
OP_MUL = 1
OP_VAR = 2

SIEVED = "sieved"
DONTCARE = "dontcare"

_OP_NAMES = {OP_ADD: "+", OP_MUL: "*", OP_VAR: "x"}


class CapacityError(RuntimeError):
    """Raised when an operation would exceed a hard size cap."""


@dataclass(frozen=True)
class Node:
    """View of one arena node; children is empty for variable nodes."""

    op: int
    children: tuple[int, ...]
    var: Optional[str] = None


class Circuit:
    """Immutable rooted circuit. Build through CircuitBuilder."""

    __slots__ = ("ops", "child_start", "children", "node_var", "root",
                 "var_names", "var_class", "_var_slots", "_cache")

    def __init__(self, ops, child_start, children, node_var, root,
                 var_names, var_class):
        self.ops = ops                  # bytearray, one op per node
        self.child_start = child_start  # array('q'), len n_nodes + 1
        self.children = children        # array('i'), flat child indices
        self.node_var = node_var        # array('i'), var slot or -1
        self.root = root
        self.var_names = var_names      # slot -> name
        self.var_class = var_class      # slot -> SIEVED | DONTCARE
        self._var_slots = {name: i for i, name in enumerate(var_names)}

    @property
    def n_nodes(self) -> int:
        return len(self.ops)

    def node(self, i: int) -> Node:
        op = self.ops[i]
        if op == OP_VAR:
            return Node(op, (), self.var_names[self.node_var[i]])
        return Node(op, tuple(self.children[self.child_start[i]:self.child_start[i + 1]]))

    def children_of(self, i: int) -> tuple[int, ...]:
        return tuple(self.children[self.child_start[i]:self.child_start[i + 1]])

    def class_of(self, name: str) -> str:
        return self.var_class[self._var_slots[name]]

    def variables(self) -> dict[str, str]:
        """All registered variables, name -> class."""
        return dict(zip(self.var_names, self.var_class))

    def var_node_ids(self) -> dict[str, list[int]]:
        """Variable name -> arena indices of its leaf nodes."""
        out: dict[str, list[int]] = {name: [] for name in self.var_names}
        for i in range(self.n_nodes):
            if self.ops[i] == OP_VAR:
                out[self.var_names[self.node_var[i]]].append(i)
        return out

    def validate(self) -> None:
        n = self.n_nodes
        if not (0 <= self.root < n):
            raise ValueError(f"root {self.root} out of range for {n} nodes")
        for i in range(n):
            lo, hi = self.child_start[i], self.child_start[i + 1]
            if self.ops[i] == OP_VAR:
                if hi != lo:
                    raise ValueError(f"variable node {i} has children")
                if not (0 <= self.node_var[i] < len(self.var_names)):
                    raise ValueError(f"variable node {i} has no registered variable")
            for c in self.children[lo:hi]:
                if not (0 <= c < i):
                    raise ValueError(
                        f"node {i} has child {c}; children must precede parents")


class CircuitBuilder:
    """Append-only arena. Variable nodes are deduplicated per name."""

    def __init__(self):
        self._ops = bytearray()
        self._starts = array("q", [0])
        self._children = array("i")
        self._node_var = array("i")
        self._var_names: list[str] = []
        self._var_class: list[str] = []
        self._var_nodes: dict[str, int] = {}
        self._zero_node: Optional[int] = None
        self._one_node: Optional[int] = None

    @property
    def n_nodes(self) -> int:
        return len(self._ops)

    def _push(self, op: int, children: Iterable[int], var_slot: int = -1) -> int:
        idx = len(self._ops)
        self._ops.append(op)
        self._children.extend(children)
        self._starts.append(len(self._children))
        self._node_var.append(var_slot)
        return idx

    def var(self, name: str, cls: str = SIEVED) -> int:
        existing = self._var_nodes.get(name)
        if existing is not None:
            slot = self._node_var[existing]
            if self._var_class[slot] != cls:
                raise ValueError(f"variable {name!r} already registered as "
                                 f"{self._var_class[slot]}")
            return existing
        slot = len(self._var_names)
        self._var_names.append(name)
        self._var_class.append(cls)
        idx = self._push(OP_VAR, (), slot)
        self._var_nodes[name] = idx
        return idx

    def add(self, children: Iterable[int]) -> int:
        return self._push(OP_ADD, children)

    def mul(self, children: Iterable[int]) -> int:
        return self._push(OP_MUL, children)

    def zero(self) -> int:
        if self._zero_node is None:
            self._zero_node = self._push(OP_ADD, ())
        return self._zero_node

    def one(self) -> int:
        if self._one_node is None:
            self._one_node = self._push(OP_MUL, ())
        return self._one_node

    def finish(self, root: int) -> Circuit:
        c = Circuit(self._ops, self._starts, self._children, self._node_var,
                    root, self._var_names, self._var_class)
        c.validate()
        return c


def size_T(c: Circuit) -> int:
    """Circuit size: number of arcs."""
    return len(c.children)


def size_S(c: Circuit) -> int:
    """Number of nodes with >= 2 parents (shared nodes)."""
    refs = [0] * c.n_nodes
    for ch in c.children:
        refs[ch] += 1
    return sum(1 for r in refs if r >= 2)


def reachable_from_root(c: Circuit) -> list[bool]:
    mark = [False] * c.n_nodes
    stack = [c.root]
    mark[c.root] = True
    while stack:
        u = stack.pop()
        for v in c.children[c.child_start[u]:c.child_start[u + 1]]:
            if not mark[v]:
                mark[v] = True
                stack.append(v)
    return mark


class IntRing:
    """Arbitrary-precision integers."""
    zero = 0
    one = 1
    add = staticmethod(lambda a, b: a + b)
    mul = staticmethod(lambda a, b: a * b)


class GF64Ring:
    """GF(2^64) elements as ints."""
    zero = 0
    one = 1
    add = staticmethod(gf_add)
    mul = staticmethod(gf_mul)


INT_RING = IntRing()
GF64_RING = GF64Ring()


def evaluate(c: Circuit, assign: Mapping[str, object], ring=INT_RING,
             free_when_dead: bool = False, stats: Optional[dict] = None):
    """Evaluate the circuit under a total variable assignment.

    With free_when_dead, values are released once their last consumer has
    read them, keeping the number of live intermediates down to the shared
    nodes plus one root-to-leaf path worth of partial results.
    """
    mark = reachable_from_root(c)
    consumers = [0] * c.n_nodes
    if free_when_dead:
        for i in range(c.n_nodes):
            if mark[i]:
                for v in c.children[c.child_start[i]:c.child_start[i + 1]]:
                    consumers[v] += 1
    consumers[c.root] += 1

    vals: dict[int, object] = {}
    peak = 0
    radd, rmul = ring.add, ring.mul
    for i in range(c.n_nodes):
        if not mark[i]:
            continue
        op = c.ops[i]
        if op == OP_VAR:
            name = c.var_names[c.node_var[i]]
            try:
                vals[i] = assign[name]
            except KeyError:
                raise KeyError(f"no value assigned to variable {name!r}") from None
        else:
            lo, hi = c.child_start[i], c.child_start[i + 1]
            if op == OP_ADD:
                acc = ring.zero
                for v in c.children[lo:hi]:
                    acc = radd(acc, vals[v])
            else:
                acc = ring.one
                for v in c.children[lo:hi]:
                    acc = rmul(acc, vals[v])
            vals[i] = acc
            if free_when_dead:
                for v in c.children[lo:hi]:
                    consumers[v] -= 1
                    if consumers[v] == 0:
                        del vals[v]
        if len(vals) > peak:
            peak = len(vals)
    if stats is not None:
        stats["peak_live"] = peak
    return vals[c.root]


class Polynomial:
    """Finite map from monomials to integer coefficients.

    A monomial is a sorted tuple of variable names, repeated per power.
    Zero coefficients are never stored.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[dict[tuple[str, ...], int]] = None):
        self.terms = terms or {}

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @classmethod
    def one(cls) -> "Polynomial":
        return cls({(): 1})

    @classmethod
    def variable(cls, name: str) -> "Polynomial":
        return cls({(name,): 1})

    def coefficient(self, monomial: Iterable[str]) -> int:
        return self.terms.get(tuple(sorted(monomial)), 0)

    def degree(self) -> int:
        """Largest monomial degree; -1 for the zero polynomial."""
        return max((len(m) for m in self.terms), default=-1)

    def multilinear_coefficient_sum(self, degree: int) -> int:
        """Sum of coefficients over multilinear monomials of the given degree."""
        total = 0
        for m, coef in self.terms.items():
            if len(m) == degree and len(set(m)) == degree:
                total += coef
        return total

    def restricted_to_degree(self, degree: int) -> "Polynomial":
        return Polynomial({m: c for m, c in self.terms.items() if len(m) == degree})

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self):
        raise TypeError("Polynomial is mutable-ish; not hashable")

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for m in sorted(self.terms, key=lambda m: (len(m), m)):
            coef = self.terms[m]
            mono = "*".join(m) if m else "1"
            bits.append(f"{coef}*{mono}" if coef != 1 or not m else mono)
        return "Polynomial(" + " + ".join(bits) + ")"


class PolyRing:
    """Polynomial ring with optional degree truncation and a term-count cap."""

    def __init__(self, degree_cap: Optional[int] = None, term_cap: int = 1_000_000):
        self.degree_cap = degree_cap
        self.term_cap = term_cap
        self.zero = Polynomial.zero()
        self.one = Polynomial.one()

    def _check(self, p: Polynomial) -> Polynomial:
        if len(p.terms) > self.term_cap:
            raise CapacityError(
                f"symbolic expansion exceeded {self.term_cap} terms; "
                "instance too large for the symbolic oracle")
        return p

    def add(self, a: Polynomial, b: Polynomial) -> Polynomial:
        if not a.terms:
            return b
        if not b.terms:
            return a
        terms = dict(a.terms)
        for m, coef in b.terms.items():
            s = terms.get(m, 0) + coef
            if s:
                terms[m] = s
            else:
                terms.pop(m, None)
        return self._check(Polynomial(terms))

    def mul(self, a: Polynomial, b: Polynomial) -> Polynomial:
        if not a.terms or not b.terms:
            return self.zero
        cap = self.degree_cap
        terms: dict[tuple[str, ...], int] = {}
        for ma, ca in a.terms.items():
            for mb, cb in b.terms.items():
                if cap is not None and len(ma) + len(mb) > cap:
                    continue
                m = tuple(sorted(ma + mb))
                s = terms.get(m, 0) + ca * cb
                if s:
                    terms[m] = s
                else:
                    terms.pop(m, None)
        return self._check(Polynomial(terms))


def expand_symbolic(c: Circuit, degree_cap: Optional[int] = None,
                    term_cap: int = 1_000_000) -> Polynomial:
    """Exact symbolic evaluation of the circuit, truncated to degree_cap.

    Intended for oracle-scale circuits; raises CapacityError when the term
    count exceeds term_cap.
    """
    ring = PolyRing(degree_cap, term_cap)
    assign = {name: Polynomial.variable(name) for name in c.var_names}
    return evaluate(c, assign, ring, free_when_dead=True)


def normalize_binary(c: Circuit) -> Circuit:
    """Rewrite so every add/mul node has at most two children (left-nested)."""
    b = CircuitBuilder()
    remap = [0] * c.n_nodes
    for i in range(c.n_nodes):
        op = c.ops[i]
        if op == OP_VAR:
            slot = c.node_var[i]
            remap[i] = b.var(c.var_names[slot], c.var_class[slot])
            continue
        kids = [remap[v] for v in c.children[c.child_start[i]:c.child_start[i + 1]]]
        make = b.add if op == OP_ADD else b.mul
        if len(kids) <= 2:
            remap[i] = make(kids)
        else:
            acc = make(kids[:2])
            for v in kids[2:]:
                acc = make((acc, v))
            remap[i] = acc
    return b.finish(remap[c.root])


def bound_degree(c: Circuit, k: int) -> Circuit:
    """k-bounding transform: k+1 degree-sliced copies of each node.

    Copy i of a node computes exactly the degree-i part of its polynomial;
    the new root is the degree-k copy of the old root, so the result has the
    same degree-k monomials as the input and no monomial of degree > k.
    Requires a binary circuit (run normalize_binary first).
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    for i in range(c.n_nodes):
        if c.child_start[i + 1] - c.child_start[i] > 2:
            raise ValueError("bound_degree requires a binary circuit; "
                             "apply normalize_binary first")
    b = CircuitBuilder()
    zero = b.zero()
    # copies[i][d] = node computing the degree-d slice of node i (zero shared)
    copies: list[list[int]] = [[] for _ in range(c.n_nodes)]
    for i in range(c.n_nodes):
        op = c.ops[i]
        if op == OP_VAR:
            slot = c.node_var[i]
            v = b.var(c.var_names[slot], c.var_class[slot])
            copies[i] = [zero] * (k + 1)
            if k >= 1:
                copies[i][1] = v
            continue
        kids = c.children[c.child_start[i]:c.child_start[i + 1]]
        if op == OP_ADD:
            if len(kids) == 0:
                copies[i] = [zero] * (k + 1)
            elif len(kids) == 1:
                copies[i] = list(copies[kids[0]])
            else:
                a0, a1 = copies[kids[0]], copies[kids[1]]
                row = []
                for d in range(k + 1):
                    live = [x for x in (a0[d], a1[d]) if x != zero]
                    if not live:
                        row.append(zero)
                    elif len(live) == 1:
                        row.append(live[0])
                    else:
                        row.append(b.add(live))
                copies[i] = row
        else:
            if len(kids) == 0:
                copies[i] = [zero] * (k + 1)
                copies[i][0] = b.one()
            elif len(kids) == 1:
                copies[i] = list(copies[kids[0]])
            else:
                a0, a1 = copies[kids[0]], copies[kids[1]]
                row = []
                for d in range(k + 1):
                    parts = []
                    for p in range(d + 1):
                        x, y = a0[p], a1[d - p]
                        if x != zero and y != zero:
                            parts.append(b.mul((x, y)))
                    if not parts:
                        row.append(zero)
                    elif len(parts) == 1:
                        row.append(parts[0])
                    else:
                        row.append(b.add(parts))
                copies[i] = row
    return b.finish(copies[c.root][k])


def max_monomial_degree(c: Circuit) -> int:
    """Exact largest monomial degree of P_C (-1 for the zero polynomial).

    Exact because circuits here are subtraction-free: no cancellation can
    lower the degree reached structurally.
    """
    NEG = -1  # stands for "zero polynomial"
    deg = [NEG] * c.n_nodes
    for i in range(c.n_nodes):
        op = c.ops[i]
        if op == OP_VAR:
            deg[i] = 1
        elif op == OP_ADD:
            d = NEG
            for v in c.children[c.child_start[i]:c.child_start[i + 1]]:
                if deg[v] > d:
                    d = deg[v]
            deg[i] = d
        else:
            d = 0
            for v in c.children[c.child_start[i]:c.child_start[i + 1]]:
                if deg[v] == NEG:
                    d = NEG
                    break
                d += deg[v]
            deg[i] = d
    return deg[c.root]


def dump_text(c: Circuit) -> str:
    """Debug text export: one node per line "id op children...", root marked.

    Variable lines carry the name and class letter (s = sieved, z = don't-care).
    """
    lines = []
    for i in range(c.n_nodes):
        op = c.ops[i]
        if op == OP_VAR:
            slot = c.node_var[i]
            cls = "s" if c.var_class[slot] == SIEVED else "z"
            lines.append(f"{i} x {c.var_names[slot]} {cls}")
        else:
            kids = " ".join(str(v) for v in
                            c.children[c.child_start[i]:c.child_start[i + 1]])
            lines.append(f"{i} {_OP_NAMES[op]} {kids}".rstrip())
    lines.append(f"root {c.root}")
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> Circuit:
    """Inverse of dump_text; node ids must be dense and children precede parents."""
    b = CircuitBuilder()
    root = None
    expected = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "root":
            root = int(parts[1])
            continue
        idx = int(parts[0])
        if idx != expected:
            raise ValueError(f"line {lineno}: expected node id {expected}, got {idx}")
        expected += 1
        op = parts[1]
        if op == "x":
            name, cls = parts[2], parts[3]
            b.var(name, SIEVED if cls == "s" else DONTCARE)
        elif op in ("+", "*"):
            kids = [int(p) for p in parts[2:]]
            (b.add if op == "+" else b.mul)(kids)
        else:
            raise ValueError(f"line {lineno}: unknown op {op!r}")
    if root is None:
        raise ValueError("missing root line")
    return b.finish(root)
