"""Finite groups, word problems and solvability diagnostics."""

import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
from loguru import logger

GroupKind = Literal["cyclic", "alternating", "symmetric", "direct-product"]

REGISTERED_GROUP_IDS = ("Z60", "A4xZ5", "A5", "S5")

MAX_PERMUTATION_DEGREE = 6
MAX_GROUP_ORDER = 1024

_FACTOR_PATTERN = re.compile(r"^([ZAS])(\d+)$")


@dataclass(frozen=True)
class GroupSpec:
    """Description of a group to build: a family tag plus its parameters."""

    kind: GroupKind
    n: int = 0
    factors: tuple["GroupSpec", ...] = ()

    @property
    def group_id(self) -> str:
        if self.kind == "direct-product":
            return "x".join(factor.group_id for factor in self.factors)
        prefix = {"cyclic": "Z", "alternating": "A", "symmetric": "S"}[self.kind]
        return f"{prefix}{self.n}"


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    """A finite group given by its Cayley table over dense element indices.

    Elements are the integers ``0..order-1``. ``cayley[a, b]`` is the index of
    ``a · b``; for permutation groups ``a · b`` means "apply ``a``, then ``b``".
    """

    group_id: str
    kind: GroupKind
    cayley: np.ndarray
    identity: int
    inverses: tuple[int, ...]
    names: tuple[str, ...]
    elements: tuple = field(repr=False)

    @property
    def order(self) -> int:
        return int(self.cayley.shape[0])

    def is_abelian(self) -> bool:
        return bool(np.array_equal(self.cayley, self.cayley.T))

    def check_axioms(self) -> None:
        """
        Verify closure, identity, inverses and associativity exhaustively.

        Raises:
            ValueError: If any group axiom fails
        """
        table = self.cayley
        order = self.order

        if table.shape != (order, order) or table.min() < 0 or table.max() >= order:
            raise ValueError(f"{self.group_id}: Cayley table is not closed")

        everything = np.arange(order)
        if not (np.array_equal(table[self.identity], everything)
                and np.array_equal(table[:, self.identity], everything)):
            raise ValueError(f"{self.group_id}: element {self.identity} is not an identity")

        inverse_products = table[everything, np.asarray(self.inverses)]
        if not np.all(inverse_products == self.identity):
            raise ValueError(f"{self.group_id}: inverse table is wrong")

        # (a·b)·c against a·(b·c) for every triple, vectorized over c
        left = table[table]
        right = np.stack([table[a][table] for a in range(order)])
        if not np.array_equal(left, right):
            raise ValueError(f"{self.group_id}: multiplication is not associative")


def parse_group_id(group_id: str) -> GroupSpec:
    """
    Parse a group id such as ``Z60``, ``A5``, ``S5`` or ``A4xZ5``.

    Args:
        group_id: Factor ids joined by ``x`` for direct products

    Returns:
        The corresponding GroupSpec
    """
    parts = group_id.strip().split("x")
    specs = []

    for part in parts:
        match = _FACTOR_PATTERN.match(part)
        if not match:
            raise ValueError(f"Unrecognized group id: {group_id!r}")
        letter, n = match.group(1), int(match.group(2))
        kind = {"Z": "cyclic", "A": "alternating", "S": "symmetric"}[letter]
        specs.append(GroupSpec(kind=kind, n=n))

    if len(specs) == 1:
        return specs[0]

    spec = specs[0]
    for factor in specs[1:]:
        spec = GroupSpec(kind="direct-product", factors=(spec, factor))
    return spec


def build_group(spec: GroupSpec | str) -> FiniteGroup:
    """
    Build a finite group with explicit Cayley, identity and inverse tables.

    Args:
        spec: A GroupSpec or a group id string

    Returns:
        The constructed FiniteGroup
    """
    if isinstance(spec, str):
        spec = parse_group_id(spec)

    if spec.kind == "cyclic":
        group = _cyclic(spec.n)
    elif spec.kind in ("alternating", "symmetric"):
        group = _permutation_group(spec.n, even_only=spec.kind == "alternating")
    elif spec.kind == "direct-product":
        if len(spec.factors) != 2:
            raise ValueError("A direct product takes exactly two factors")
        group = _direct_product(build_group(spec.factors[0]), build_group(spec.factors[1]))
    else:
        raise ValueError(f"Unsupported group kind: {spec.kind}")

    logger.debug(f"Built group {group.group_id} of order {group.order}")
    return group


@lru_cache(maxsize=None)
def get_group(group_id: str) -> FiniteGroup:
    """Build (once) the group with the given id."""
    return build_group(group_id)


def _cyclic(n: int) -> FiniteGroup:
    if n < 1 or n > MAX_GROUP_ORDER:
        raise ValueError(f"Z_n needs 1 <= n <= {MAX_GROUP_ORDER}, got {n}")

    indices = np.arange(n)
    table = (indices[:, None] + indices[None, :]) % n
    table.setflags(write=False)
    inverses = tuple(int((-a) % n) for a in range(n))

    return FiniteGroup(
        group_id=f"Z{n}",
        kind="cyclic",
        cayley=table,
        identity=0,
        inverses=inverses,
        names=tuple(str(a) for a in range(n)),
        elements=tuple(range(n)),
    )


def permutation_parity(perm: Sequence[int]) -> int:
    """Return 0 for even permutations and 1 for odd ones."""
    inversions = sum(
        1 for i, j in itertools.combinations(range(len(perm)), 2) if perm[i] > perm[j]
    )
    return inversions % 2


def cycle_notation(perm: Sequence[int]) -> str:
    """Render a one-line permutation of {0..n-1} in 1-based cycle notation."""
    seen = set()
    cycles = []

    for start in range(len(perm)):
        if start in seen or perm[start] == start:
            continue
        cycle = [start]
        seen.add(start)
        nxt = perm[start]
        while nxt != start:
            cycle.append(nxt)
            seen.add(nxt)
            nxt = perm[nxt]
        cycles.append("(" + " ".join(str(i + 1) for i in cycle) + ")")

    return "".join(cycles) or "()"


def compose_permutations(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    """Product ``a · b``: apply ``a`` first, then ``b``."""
    return tuple(b[a[i]] for i in range(len(a)))


def _permutation_group(n: int, even_only: bool) -> FiniteGroup:
    if n < 1 or n > MAX_PERMUTATION_DEGREE:
        raise ValueError(
            f"Permutation groups need 1 <= n <= {MAX_PERMUTATION_DEGREE}, got {n}"
        )

    perms = [
        p for p in itertools.permutations(range(n))
        if not even_only or permutation_parity(p) == 0
    ]
    index = {p: i for i, p in enumerate(perms)}
    order = len(perms)

    table = np.empty((order, order), dtype=np.int64)
    for i, a in enumerate(perms):
        for j, b in enumerate(perms):
            table[i, j] = index[compose_permutations(a, b)]
    table.setflags(write=False)

    identity = index[tuple(range(n))]
    inverses = []
    for p in perms:
        inverse = [0] * n
        for i, image in enumerate(p):
            inverse[image] = i
        inverses.append(index[tuple(inverse)])

    return FiniteGroup(
        group_id=f"{'A' if even_only else 'S'}{n}",
        kind="alternating" if even_only else "symmetric",
        cayley=table,
        identity=identity,
        inverses=tuple(inverses),
        names=tuple(cycle_notation(p) for p in perms),
        elements=tuple(perms),
    )


def _direct_product(left: FiniteGroup, right: FiniteGroup) -> FiniteGroup:
    order = left.order * right.order
    if order > MAX_GROUP_ORDER:
        raise ValueError(f"Direct product order {order} exceeds {MAX_GROUP_ORDER}")

    a = np.arange(order) // right.order
    b = np.arange(order) % right.order
    table = (
        left.cayley[a[:, None], a[None, :]] * right.order
        + right.cayley[b[:, None], b[None, :]]
    )
    table.setflags(write=False)

    inverses = tuple(
        int(left.inverses[i // right.order] * right.order + right.inverses[i % right.order])
        for i in range(order)
    )

    return FiniteGroup(
        group_id=f"{left.group_id}x{right.group_id}",
        kind="direct-product",
        cayley=table,
        identity=left.identity * right.order + right.identity,
        inverses=inverses,
        names=tuple(
            f"({left.names[i // right.order]},{right.names[i % right.order]})"
            for i in range(order)
        ),
        elements=tuple(
            (left.elements[i // right.order], right.elements[i % right.order])
            for i in range(order)
        ),
    )


def _check_index(g: FiniteGroup, element: int) -> None:
    if not 0 <= element < g.order:
        raise IndexError(f"Element {element} out of range for {g.group_id} (order {g.order})")


def multiply(g: FiniteGroup, a: int, b: int) -> int:
    """Return ``a · b``."""
    _check_index(g, a)
    _check_index(g, b)
    return int(g.cayley[a, b])


def prefix_products(g: FiniteGroup, tokens: Sequence[int]) -> list[int]:
    """
    Label each position with the product of the word up to and including it.

    Products fold left to right: ``labels[i] = labels[i - 1] · tokens[i]``.

    Args:
        g: The group
        tokens: Non-empty word of element indices

    Returns:
        Prefix-product labels, one per token
    """
    if len(tokens) == 0:
        raise ValueError("prefix_products needs a non-empty word")

    labels = []
    current = None
    for token in tokens:
        token = int(token)
        _check_index(g, token)
        current = token if current is None else int(g.cayley[current, token])
        labels.append(current)

    return labels


def word_product(g: FiniteGroup, tokens: Sequence[int]) -> int:
    """Product of a word; the identity for the empty word."""
    if len(tokens) == 0:
        return g.identity
    return prefix_products(g, tokens)[-1]


@dataclass(frozen=True)
class WordInstance:
    """A word together with its prefix-product labels."""

    group_id: str
    tokens: tuple[int, ...]
    labels: tuple[int, ...]

    @classmethod
    def from_tokens(cls, g: FiniteGroup, tokens: Sequence[int]) -> "WordInstance":
        return cls(
            group_id=g.group_id,
            tokens=tuple(int(t) for t in tokens),
            labels=tuple(prefix_products(g, tokens)),
        )


def _generated_subgroup(g: FiniteGroup, generators: set[int]) -> frozenset[int]:
    """Closure of a generating set under multiplication (breadth first)."""
    members = {g.identity}
    frontier = deque([g.identity])
    generators = sorted(generators)

    while frontier:
        current = frontier.popleft()
        for gen in generators:
            product = int(g.cayley[current, gen])
            if product not in members:
                members.add(product)
                frontier.append(product)

    return frozenset(members)


def commutator_subgroup(g: FiniteGroup, subgroup: frozenset[int]) -> frozenset[int]:
    """Subgroup generated by all a·b·a⁻¹·b⁻¹ with a, b in ``subgroup``."""
    table = g.cayley
    commutators = set()
    for a in subgroup:
        for b in subgroup:
            ab = table[a, b]
            commutators.add(int(table[table[ab, g.inverses[a]], g.inverses[b]]))
    return _generated_subgroup(g, commutators)


def derived_series(g: FiniteGroup) -> list[int]:
    """
    Orders of the derived series G ⊳ G' ⊳ G'' ⊳ ... until it stabilizes.

    Args:
        g: The group

    Returns:
        Subgroup orders, starting with ``g.order``; no order is repeated
    """
    current = frozenset(range(g.order))
    orders = [len(current)]

    while len(current) > 1:
        derived = commutator_subgroup(g, current)
        if len(derived) == len(current):
            break
        current = derived
        orders.append(len(current))

    logger.debug(f"Derived series of {g.group_id}: {orders}")
    return orders


def is_solvable(g: FiniteGroup) -> bool:
    """True iff the derived series reaches the trivial subgroup."""
    return derived_series(g)[-1] == 1


def sample_word(g: FiniteGroup, length: int, seed: int | np.random.Generator) -> list[int]:
    """
    Draw ``length`` i.i.d. uniform elements.

    Args:
        g: The group
        length: Word length, at least 1
        seed: Integer seed or an existing numpy Generator

    Returns:
        List of element indices
    """
    if length < 1:
        raise ValueError(f"Word length must be >= 1, got {length}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return [int(x) for x in rng.integers(0, g.order, size=length)]
