"""Reduction from S5 word problems to chess state tracking in UCI notation."""

from dataclasses import dataclass
from typing import Iterable, Literal, Optional, Sequence

from loguru import logger

from algebra import FiniteGroup, get_group

PieceKind = Literal["king", "queen", "rook", "pawn"]
Color = Literal["white", "black"]

FILE_NAMES = ["a", "b", "c", "d", "e", "f", "g", "h"]
RANK_NAMES = ["1", "2", "3", "4", "5", "6", "7", "8"]

_SYMBOLS = {"king": "k", "queen": "q", "rook": "r", "pawn": "p"}

# rank indices (0-based) of the lanes the transposition encoder routes through
_BACK_RANK = 7
_STAGING_RANK = 6
_CROSSING_RANK = 5


@dataclass(frozen=True, order=True)
class Square:
    """A board square; ``file`` 0-7 is a-h and ``rank`` 0-7 is 1-8."""

    file: int
    rank: int

    def __post_init__(self):
        if not (0 <= self.file < 8 and 0 <= self.rank < 8):
            raise ValueError(f"Square out of range: file={self.file}, rank={self.rank}")

    @property
    def index(self) -> int:
        return self.rank * 8 + self.file

    @property
    def name(self) -> str:
        return FILE_NAMES[self.file] + RANK_NAMES[self.rank]

    @classmethod
    def parse(cls, name: str) -> "Square":
        name = name.strip().lower()
        if len(name) != 2 or name[0] not in FILE_NAMES or name[1] not in RANK_NAMES:
            raise ValueError(f"Invalid square name: {name!r}")
        return cls(FILE_NAMES.index(name[0]), RANK_NAMES.index(name[1]))


@dataclass(frozen=True)
class Move:
    """A move written as (source square, target square)."""

    source: Square
    target: Square

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"Move source and target coincide: {self.source.name}")

    def uci(self) -> str:
        """UCI text for the move, e.g. ``a8a7``."""
        return self.source.name + self.target.name

    @classmethod
    def from_uci(cls, uci: str) -> "Move":
        uci = uci.strip()
        if len(uci) != 4:
            raise ValueError(f"Expected a four-character UCI move, got {uci!r}")
        return cls(Square.parse(uci[:2]), Square.parse(uci[2:]))


@dataclass(frozen=True)
class Piece:
    kind: PieceKind
    color: Color
    tag: Optional[int] = None

    def symbol(self) -> str:
        letter = _SYMBOLS[self.kind]
        return letter.upper() if self.color == "white" else letter


@dataclass(frozen=True)
class BoardState:
    """
    Board occupancy plus a null flag.

    ``grid`` has 64 cells indexed by ``rank * 8 + file``. ``tag`` on a piece is
    an identity label outside the rules of chess, used only to read back which
    piece went where.
    """

    grid: tuple[Optional[Piece], ...]
    is_null: bool = False
    side_to_move: Color = "black"

    def piece_at(self, square: Square) -> Optional[Piece]:
        return self.grid[square.index]

    def pieces(self) -> list[tuple[Square, Piece]]:
        return [
            (Square(i % 8, i // 8), piece)
            for i, piece in enumerate(self.grid)
            if piece is not None
        ]

    def ascii(self) -> str:
        """Text diagram with rank 8 on top; ``.`` marks empty cells."""
        if self.is_null:
            return "<null board>"
        rows = []
        for rank in range(7, -1, -1):
            cells = [self.grid[rank * 8 + f] for f in range(8)]
            rows.append(" ".join(p.symbol() if p else "." for p in cells))
        return "\n".join(rows)


NULL_BOARD = BoardState(grid=(None,) * 64, is_null=True, side_to_move="white")


@dataclass(frozen=True)
class ReductionOutput:
    final_board: BoardState
    accept: bool


def _opponent(color: Color) -> Color:
    return "white" if color == "black" else "black"


def initial_board() -> BoardState:
    """
    Board used by the reduction: black rook on a8 (tag 0), black queens on
    b8-e8 (tags 1-4), white pawns a2 b2, white king a1, black king h1.
    Black moves first.
    """
    grid: list[Optional[Piece]] = [None] * 64

    grid[Square.parse("a8").index] = Piece("rook", "black", tag=0)
    for tag, name in enumerate(["b8", "c8", "d8", "e8"], start=1):
        grid[Square.parse(name).index] = Piece("queen", "black", tag=tag)

    grid[Square.parse("a2").index] = Piece("pawn", "white")
    grid[Square.parse("b2").index] = Piece("pawn", "white")
    grid[Square.parse("a1").index] = Piece("king", "white")
    grid[Square.parse("h1").index] = Piece("king", "black")

    return BoardState(grid=tuple(grid), is_null=False, side_to_move="black")


def _path_clear(board: BoardState, source: Square, target: Square) -> bool:
    df = target.file - source.file
    dr = target.rank - source.rank
    steps = max(abs(df), abs(dr))
    step_f = (df > 0) - (df < 0)
    step_r = (dr > 0) - (dr < 0)

    for k in range(1, steps):
        if board.grid[(source.rank + k * step_r) * 8 + source.file + k * step_f] is not None:
            return False
    return True


def _geometry_ok(board: BoardState, piece: Piece, move: Move, captured: Optional[Piece]) -> bool:
    df = move.target.file - move.source.file
    dr = move.target.rank - move.source.rank

    if piece.kind == "rook":
        return (df == 0 or dr == 0) and _path_clear(board, move.source, move.target)

    if piece.kind == "queen":
        straight = df == 0 or dr == 0
        diagonal = abs(df) == abs(dr)
        return (straight or diagonal) and _path_clear(board, move.source, move.target)

    if piece.kind == "king":
        return max(abs(df), abs(dr)) == 1

    forward = 1 if piece.color == "white" else -1
    if captured is None:
        return df == 0 and dr == forward
    return abs(df) == 1 and dr == forward


def apply_move(board: BoardState, move: Move, enforce_turns: bool = True) -> BoardState:
    """
    Apply one move under geometric legality rules.

    Illegal moves return the null board; the null board is absorbing.

    Args:
        board: Current board
        move: The move to apply
        enforce_turns: Require the moving piece to belong to ``side_to_move``

    Returns:
        The next board, or NULL_BOARD
    """
    if board.is_null:
        return NULL_BOARD

    piece = board.piece_at(move.source)
    if piece is None:
        logger.debug(f"Illegal move {move.uci()}: empty source")
        return NULL_BOARD

    if enforce_turns and piece.color != board.side_to_move:
        logger.debug(f"Illegal move {move.uci()}: {piece.color} moved on {board.side_to_move}'s turn")
        return NULL_BOARD

    captured = board.piece_at(move.target)
    if captured is not None and (captured.color == piece.color or captured.kind == "king"):
        logger.debug(f"Illegal move {move.uci()}: target occupied by {captured.symbol()}")
        return NULL_BOARD

    if not _geometry_ok(board, piece, move, captured):
        logger.debug(f"Illegal move {move.uci()}: bad geometry for {piece.kind}")
        return NULL_BOARD

    grid = list(board.grid)
    grid[move.source.index] = None
    grid[move.target.index] = piece

    return BoardState(grid=tuple(grid), is_null=False, side_to_move=_opponent(piece.color))


def apply_moves(board: BoardState, moves: Iterable[Move], enforce_turns: bool = True) -> BoardState:
    """Fold apply_move over a move sequence."""
    for move in moves:
        board = apply_move(board, move, enforce_turns=enforce_turns)
    return board


def encode_transposition(i: int, j: int) -> list[Move]:
    """
    Twelve moves exchanging the pieces at rank-8 positions ``i`` and ``j``.

    Positions 1-5 are files a-e. Black moves alternate with the white king
    stepping a1-b1 and back, so the king ends on a1.

    Args:
        i: First position, 1 <= i < j
        j: Second position, j <= 5

    Returns:
        The move list
    """
    if not (1 <= i < j <= 5):
        raise ValueError(f"Transposition positions must satisfy 1 <= i < j <= 5, got ({i}, {j})")

    fi, fj = i - 1, j - 1
    a1, b1 = Square(0, 0), Square(1, 0)

    black_moves = [
        Move(Square(fi, _BACK_RANK), Square(fi, _STAGING_RANK)),
        Move(Square(fj, _BACK_RANK), Square(fj, _CROSSING_RANK)),
        Move(Square(fi, _STAGING_RANK), Square(fj, _STAGING_RANK)),
        Move(Square(fj, _CROSSING_RANK), Square(fi, _CROSSING_RANK)),
        Move(Square(fj, _STAGING_RANK), Square(fj, _BACK_RANK)),
        Move(Square(fi, _CROSSING_RANK), Square(fi, _BACK_RANK)),
    ]

    moves = []
    for k, black in enumerate(black_moves):
        moves.append(black)
        moves.append(Move(a1, b1) if k % 2 == 0 else Move(b1, a1))
    return moves


def transpositions_of(perm: Sequence[int]) -> list[tuple[int, int]]:
    """
    Factor a one-line permutation into position swaps, applied in order.

    The cycle a1 → a2 → ... → ak becomes the swaps (a1 a2), (a1 a3), ..., (a1 ak).
    Positions in the result are 1-based.
    """
    seen = set()
    swaps = []

    for start in range(len(perm)):
        if start in seen or perm[start] == start:
            continue
        seen.add(start)
        nxt = perm[start]
        while nxt != start:
            seen.add(nxt)
            swaps.append((start + 1, nxt + 1))
            nxt = perm[nxt]

    return swaps


def encode_permutation(perm: int, group: Optional[FiniteGroup] = None) -> list[Move]:
    """
    Move sequence that permutes the five tagged pieces by an S5 element.

    The piece at position ``p`` ends at position ``perm(p)``.

    Args:
        perm: Element index in S5
        group: S5 as built by algebra (looked up when omitted)

    Returns:
        Concatenated transposition encodings; empty for the identity
    """
    group = group or get_group("S5")
    if not 0 <= perm < group.order:
        raise IndexError(f"Element {perm} out of range for {group.group_id}")

    moves = []
    for a, b in transpositions_of(group.elements[perm]):
        moves.extend(encode_transposition(min(a, b), max(a, b)))
    return moves


def encode_word(word: Sequence[int], group: Optional[FiniteGroup] = None) -> list[Move]:
    """Concatenate encode_permutation over a word."""
    group = group or get_group("S5")
    moves = []
    for element in word:
        moves.extend(encode_permutation(int(element), group))
    return moves


def read_permutation(board: BoardState) -> Optional[tuple[int, ...]]:
    """
    Read the permutation of tagged pieces off rank 8.

    Returns:
        One-line tuple ``p`` with ``p[tag] = file``, or None if the tagged
        pieces are not all on a8-e8
    """
    if board.is_null:
        return None

    perm = [None] * 5
    for file in range(5):
        piece = board.grid[_BACK_RANK * 8 + file]
        if piece is None or piece.tag is None or not 0 <= piece.tag < 5:
            return None
        perm[piece.tag] = file

    return tuple(perm)


def reduce_word(word: Sequence[int], group: Optional[FiniteGroup] = None) -> ReductionOutput:
    """
    Run the chess reduction on an S5 word.

    Accepts iff the final board is not null and a rook stands on a8, which
    happens exactly when the word product fixes position 1.
    """
    moves = encode_word(word, group)
    board = apply_moves(initial_board(), moves)

    corner = board.piece_at(Square(0, _BACK_RANK)) if not board.is_null else None
    accept = corner is not None and corner.kind == "rook"

    logger.debug(f"Reduced word of length {len(word)} to {len(moves)} moves, accept={accept}")
    return ReductionOutput(final_board=board, accept=accept)


def to_uci_text(moves: Iterable[Move]) -> str:
    return " ".join(move.uci() for move in moves)
