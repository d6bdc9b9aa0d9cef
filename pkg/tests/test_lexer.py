"""Тесты для лексического анализатора выражений."""

import pytest
from lang.lexer import tokenize, LexerError
from lang.tokens import TokenType

# Constants to avoid magic numbers in assertions
EXPECTED_INT = 123
EXPECTED_FLOAT = 45.67
EXPECTED_LEADING_DOT = 0.5
EXPECTED_EXPONENT = 1e-3
EXPECTED_SIGNED_EXPONENT = 250.0
EXPECTED_TOKENS_IN_EXPRESSION = 16
SECOND_LINE = 2
SECOND_LINE_COLUMN = 3


def test_numbers() -> None:
    """Тест разбора чисел."""
    tokens = tokenize("123 45.67 0 .5 1e-3 2.5E+2")

    assert tokens[0].type == TokenType.NUMBER
    assert tokens[0].value == EXPECTED_INT
    assert isinstance(tokens[0].value, int)

    assert tokens[1].value == EXPECTED_FLOAT
    assert tokens[2].value == 0
    assert tokens[3].value == EXPECTED_LEADING_DOT
    assert tokens[4].value == pytest.approx(EXPECTED_EXPONENT)
    assert tokens[5].value == EXPECTED_SIGNED_EXPONENT


def test_identifiers() -> None:
    """Тест разбора идентификаторов: переменные, функции и константы."""
    tokens = tokenize("x1 sin pi t")

    assert [t.type for t in tokens[:-1]] == [TokenType.IDENTIFIER] * 4
    assert [t.value for t in tokens[:-1]] == ["x1", "sin", "pi", "t"]


def test_operators() -> None:
    """Тест разбора операторов и скобок."""
    tokens = tokenize("+ - * / ^ ** ( ) ,")

    expected = [
        TokenType.PLUS,
        TokenType.MINUS,
        TokenType.MULTIPLY,
        TokenType.DIVIDE,
        TokenType.POWER,
        TokenType.POWER,
        TokenType.LPAREN,
        TokenType.RPAREN,
        TokenType.COMMA,
        TokenType.EOF,
    ]
    assert [t.type for t in tokens] == expected
    assert tokens[5].value == "**"


def test_full_expression() -> None:
    """Тест разбора выражения компоненты отображения."""
    tokens = tokenize("-cos(x2) + sqrt(2)*sin(x3)")

    assert len(tokens) == EXPECTED_TOKENS_IN_EXPRESSION
    assert tokens[0].type == TokenType.MINUS
    assert tokens[-1].type == TokenType.EOF


def test_positions() -> None:
    """Тест отслеживания строк и столбцов."""
    tokens = tokenize("x1 +\n  x2")

    assert tokens[0].line == 1
    assert tokens[0].column == 1
    assert tokens[2].line == SECOND_LINE
    assert tokens[2].column == SECOND_LINE_COLUMN


def test_unknown_symbol() -> None:
    """Тест ошибки на неизвестном символе."""
    with pytest.raises(LexerError, match="Unknown symbol") as info:
        tokenize("x1 # x2")
    assert info.value.column == 4


@pytest.mark.parametrize("text", ["1e", "2e+", "3x1", "1.5abc"])
def test_malformed_numbers(text: str) -> None:
    """Тест ошибок в записи чисел."""
    with pytest.raises(LexerError):
        tokenize(text)
