"""Tests for chess_reduction module."""

import numpy as np
import pytest

from algebra import get_group, sample_word, word_product
from chess_reduction import (
    NULL_BOARD,
    BoardState,
    Move,
    Piece,
    Square,
    apply_move,
    apply_moves,
    encode_permutation,
    encode_transposition,
    encode_word,
    initial_board,
    read_permutation,
    reduce_word,
    to_uci_text,
    transpositions_of,
)


def _moves(text: str) -> list[Move]:
    return [Move.from_uci(u) for u in text.split()]


def _board(pieces: dict[str, Piece], side_to_move="black") -> BoardState:
    grid = [None] * 64
    for name, piece in pieces.items():
        grid[Square.parse(name).index] = piece
    return BoardState(grid=tuple(grid), side_to_move=side_to_move)


class TestNotation:
    """Test cases for squares and UCI moves."""

    def test_square_names(self):
        """Test square parsing and naming."""
        square = Square.parse("c8")

        assert (square.file, square.rank) == (2, 7)
        assert square.name == "c8"
        assert square.index == 58

    def test_invalid_square(self):
        """Test invalid square names are rejected."""
        with pytest.raises(ValueError):
            Square.parse("i9")

    def test_uci_round_trip(self):
        """Test UCI text parses back to the same move."""
        move = Move.from_uci("a8a7")

        assert move.uci() == "a8a7"
        assert Move.from_uci(move.uci()) == move

    def test_null_move_rejected(self):
        """Test moves with equal source and target are rejected."""
        with pytest.raises(ValueError):
            Move.from_uci("a8a8")


class TestApplyMove:
    """Test cases for move legality."""

    def test_initial_board_layout(self):
        """Test the reduction's starting position."""
        board = initial_board()

        assert board.piece_at(Square.parse("a8")) == Piece("rook", "black", tag=0)
        assert board.piece_at(Square.parse("e8")) == Piece("queen", "black", tag=4)
        assert board.piece_at(Square.parse("a1")).kind == "king"
        assert board.side_to_move == "black"
        assert read_permutation(board) == (0, 1, 2, 3, 4)

    def test_legal_move_switches_side(self):
        """Test a legal black move hands the turn to white."""
        board = apply_move(initial_board(), Move.from_uci("a8a7"))

        assert not board.is_null
        assert board.side_to_move == "white"
        assert board.piece_at(Square.parse("a7")).kind == "rook"
        assert board.piece_at(Square.parse("a8")) is None

    def test_empty_source(self):
        """Test moving from an empty square gives the null board."""
        assert apply_move(initial_board(), Move.from_uci("c5c4")).is_null

    def test_wrong_side(self):
        """Test white cannot move first."""
        assert apply_move(initial_board(), Move.from_uci("a1b1")).is_null

    def test_wrong_side_allowed_without_turns(self):
        """Test turn order can be switched off."""
        board = apply_move(initial_board(), Move.from_uci("a1b1"), enforce_turns=False)

        assert not board.is_null

    def test_capture_own_piece(self):
        """Test capturing a piece of the same color is illegal."""
        assert apply_move(initial_board(), Move.from_uci("b8c8")).is_null

    def test_capture_king(self):
        """Test kings cannot be captured."""
        board = _board({"a8": Piece("rook", "black"), "a1": Piece("king", "white")})

        assert apply_move(board, Move.from_uci("a8a1")).is_null

    def test_blocked_slider(self):
        """Test a queen cannot jump over the b2 pawn."""
        assert apply_move(initial_board(), Move.from_uci("b8b1")).is_null

    def test_slider_geometry(self):
        """Test rooks cannot move diagonally but queens can."""
        assert apply_move(initial_board(), Move.from_uci("a8b7")).is_null
        assert not apply_move(initial_board(), Move.from_uci("b8c7")).is_null

    def test_pawn_moves(self):
        """Test pawns step one square forward and capture diagonally."""
        board = _board(
            {"a2": Piece("pawn", "white"), "b3": Piece("queen", "black")},
            side_to_move="white",
        )

        assert not apply_move(board, Move.from_uci("a2a3")).is_null
        assert apply_move(board, Move.from_uci("a2a4")).is_null
        assert not apply_move(board, Move.from_uci("a2b3")).is_null
        assert apply_move(board, Move.from_uci("a2b1")).is_null

    def test_king_steps_one(self):
        """Test kings move a single square."""
        board = _board({"a1": Piece("king", "white")}, side_to_move="white")

        assert not apply_move(board, Move.from_uci("a1b2")).is_null
        assert apply_move(board, Move.from_uci("a1a3")).is_null

    def test_null_board_absorbs(self):
        """Test every move from the null board stays null."""
        board = apply_moves(NULL_BOARD, _moves("a8a7 a1b1"))

        assert board.is_null
        assert read_permutation(board) is None


class TestEncoding:
    """Test cases for the permutation-to-moves encoding."""

    def test_documented_exchange_sequence(self):
        """Test the twelve-move exchange of a8 and c8."""
        expected = "a8a7 a1b1 c8c6 b1a1 a7c7 a1b1 c6a6 b1a1 c7c8 a1b1 a6a8 b1a1"

        moves = encode_transposition(1, 3)
        board = apply_moves(initial_board(), moves)

        assert to_uci_text(moves) == expected
        assert board.piece_at(Square.parse("c8")) == Piece("rook", "black", tag=0)
        assert board.piece_at(Square.parse("a8")) == Piece("queen", "black", tag=2)
        assert board.piece_at(Square.parse("a1")).kind == "king"
        assert board.side_to_move == "black"

    @pytest.mark.parametrize("i,j", [(i, j) for i in range(1, 6) for j in range(i + 1, 6)])
    def test_every_transposition_is_legal(self, i, j):
        """Test each of the ten transpositions swaps exactly two pieces."""
        board = apply_moves(initial_board(), encode_transposition(i, j))

        expected = list(range(5))
        expected[i - 1], expected[j - 1] = j - 1, i - 1
        assert read_permutation(board) == tuple(expected)

    def test_invalid_transposition(self):
        """Test positions outside 1..5 or out of order are rejected."""
        with pytest.raises(ValueError):
            encode_transposition(3, 3)

        with pytest.raises(ValueError):
            encode_transposition(2, 6)

    def test_transpositions_of_cycle(self):
        """Test a 3-cycle factors into two swaps sharing its first point."""
        assert transpositions_of((1, 2, 0, 3, 4)) == [(1, 2), (1, 3)]
        assert transpositions_of((0, 1, 2, 3, 4)) == []

    def test_identity_encodes_to_nothing(self):
        """Test the identity permutation needs no moves."""
        assert encode_permutation(get_group("S5").identity) == []

    def test_out_of_range_element(self):
        """Test element indices beyond S5 are rejected."""
        with pytest.raises(IndexError):
            encode_permutation(120)

    def test_board_tracks_word_product(self):
        """Test the tags on rank 8 read back the word product."""
        g = get_group("S5")
        word = sample_word(g, 6, seed=4)

        board = apply_moves(initial_board(), encode_word(word, g))

        assert read_permutation(board) == g.elements[word_product(g, word)]


class TestReduceWord:
    """Test cases for reduce_word."""

    def test_accepts_iff_product_fixes_first_position(self):
        """Test acceptance against the word-product oracle on random words."""
        g = get_group("S5")
        rng = np.random.default_rng(0)

        for _ in range(500):
            word = sample_word(g, int(rng.integers(1, 21)), rng)
            output = reduce_word(word, g)

            assert not output.final_board.is_null
            assert output.accept == (g.elements[word_product(g, word)][0] == 0)

    def test_empty_word_accepts(self):
        """Test the empty word leaves the rook on a8."""
        output = reduce_word([])

        assert output.accept
        assert output.final_board == initial_board()

    def test_ascii_diagram(self):
        """Test the board diagram shows the rook in the top-left corner."""
        rows = initial_board().ascii().splitlines()

        assert len(rows) == 8
        assert rows[0].startswith("r q q q q")
        assert NULL_BOARD.ascii() == "<null board>"
