"""Синтаксический анализатор выражений от координат."""

from typing import List

from .tokens import Token, TokenType, VARIABLES, CONSTANTS, FUNCTIONS
from .ast_nodes import (
    Expression,
    BinaryOperation,
    UnaryOperation,
    FunctionCall,
    Identifier,
    NumberLiteral,
)
from .lexer import tokenize


class ParseError(Exception):
    """Ошибка синтаксического анализа."""

    def __init__(self, message: str, token: Token) -> None:
        self.message = message
        self.token = token
        super().__init__(f"Parse error at line {token.line}, column {token.column}: {message}")


class UnknownIdentifierError(ParseError):
    """Идентификатор не является переменной, константой или функцией."""
    pass


class Parser:
    """Рекурсивно-нисходящий парсер.

    Грамматика (от низшего приоритета к высшему)::

        expression := term (('+' | '-') term)*
        term       := unary (('*' | '/') unary)*
        unary      := ('-' | '+') unary | power
        power      := call ('^' unary)?
        call       := FUNCTION '(' expression ')' | primary
        primary    := NUMBER | VARIABLE | CONSTANT | '(' expression ')'
    """

    def __init__(self, tokens: List[Token], variables: tuple[str, ...] = VARIABLES) -> None:
        self.tokens = tokens
        self.current = 0
        self.variables = variables

    def current_token(self) -> Token:
        """Получить текущий токен."""
        if self.current >= len(self.tokens):
            return self.tokens[-1]  # EOF токен
        return self.tokens[self.current]

    def peek_token(self, offset: int = 1) -> Token:
        """Посмотреть на токен с заданным смещением."""
        pos = self.current + offset
        if pos >= len(self.tokens):
            return self.tokens[-1]
        return self.tokens[pos]

    def advance(self) -> Token:
        """Продвинуться к следующему токену и вернуть текущий."""
        token = self.current_token()
        if self.current < len(self.tokens) - 1:
            self.current += 1
        return token

    def match(self, *types: TokenType) -> bool:
        """Проверить, соответствует ли текущий токен одному из типов."""
        return self.current_token().type in types

    def consume(self, token_type: TokenType, message: str) -> Token:
        """Потребить токен заданного типа или выбросить ошибку."""
        if self.current_token().type == token_type:
            return self.advance()

        raise ParseError(message, self.current_token())

    def parse(self) -> Expression:
        """Главная функция парсинга: ровно одно выражение до конца ввода."""
        if self.match(TokenType.EOF):
            raise ParseError("Empty expression", self.current_token())
        expr = self.expression()
        self.consume(TokenType.EOF, f"Unexpected token: {self.current_token().type.name}")
        return expr

    def expression(self) -> Expression:
        """Сложение и вычитание."""
        expr = self.term()

        while self.match(TokenType.PLUS, TokenType.MINUS):
            operator = self.advance().value
            right = self.term()
            expr = BinaryOperation(expr, operator, right)

        return expr

    def term(self) -> Expression:
        """Умножение и деление."""
        expr = self.unary()

        while self.match(TokenType.MULTIPLY, TokenType.DIVIDE):
            operator = self.advance().value
            right = self.unary()
            expr = BinaryOperation(expr, operator, right)

        return expr

    def unary(self) -> Expression:
        """Унарные операции."""
        if self.match(TokenType.PLUS):
            self.advance()
            return self.unary()

        if self.match(TokenType.MINUS):
            self.advance()
            operand = self.unary()
            # Отрицательный литерал храним как число
            if isinstance(operand, NumberLiteral):
                return NumberLiteral(-operand.value)
            return UnaryOperation('-', operand)

        return self.power()

    def power(self) -> Expression:
        """Возведение в степень (правоассоциативное)."""
        base = self.call()

        if self.match(TokenType.POWER):
            self.advance()
            exponent = self.unary()
            return BinaryOperation(base, '^', exponent)

        return base

    def call(self) -> Expression:
        """Вызов функции одного аргумента."""
        if self.match(TokenType.IDENTIFIER) and self.current_token().value in FUNCTIONS:
            name_token = self.advance()
            self.consume(TokenType.LPAREN, f"Expected '(' after function '{name_token.value}'")
            argument = self.expression()
            if self.match(TokenType.COMMA):
                raise ParseError(f"Function '{name_token.value}' takes exactly one argument",
                                 self.current_token())
            self.consume(TokenType.RPAREN, "Expected ')'")
            return FunctionCall(name_token.value, (argument,))

        return self.primary()

    def primary(self) -> Expression:
        """Первичные выражения."""
        if self.match(TokenType.NUMBER):
            return NumberLiteral(self.advance().value)

        if self.match(TokenType.IDENTIFIER):
            token = self.current_token()
            name = token.value
            if name in self.variables or name in CONSTANTS:
                self.advance()
                return Identifier(name)
            raise UnknownIdentifierError(f"Unknown identifier '{name}'", token)

        if self.match(TokenType.LPAREN):
            self.advance()
            expr = self.expression()
            self.consume(TokenType.RPAREN, "Expected ')'")
            return expr

        raise ParseError(f"Unexpected token: {self.current_token().type.name}", self.current_token())


def parse(tokens: List[Token], variables: tuple[str, ...] = VARIABLES) -> Expression:
    """Удобная функция для парсинга."""
    parser = Parser(tokens, variables)
    return parser.parse()


def parse_expression(text: str, variables: tuple[str, ...] = VARIABLES) -> Expression:
    """Разобрать текст выражения в AST."""
    return parse(tokenize(text), variables)
