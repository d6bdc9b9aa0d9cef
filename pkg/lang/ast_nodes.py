"""AST nodes for the coordinate expression language.

Nodes are immutable: derivative and substitution walks build new trees and
share untouched subtrees with the original.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any


class ASTNode(ABC):
    """Узел дерева выражения."""

    @abstractmethod
    def accept(self, visitor: 'ASTVisitor') -> Any:
        """Паттерн посетитель для обхода AST."""


class Expression(ASTNode):
    """Выражение от координат x1, x2, x3."""


@dataclass(frozen=True)
class NumberLiteral(Expression):
    value: int | float

    def accept(self, visitor: 'ASTVisitor') -> Any:
        return visitor.visit_number_literal(self)


@dataclass(frozen=True)
class Identifier(Expression):
    """Координата или именованная константа."""

    name: str

    def accept(self, visitor: 'ASTVisitor') -> Any:
        return visitor.visit_identifier(self)


@dataclass(frozen=True)
class BinaryOperation(Expression):
    """Одна из операций + - * / ^."""

    left: Expression
    operator: str
    right: Expression

    def accept(self, visitor: 'ASTVisitor') -> Any:
        return visitor.visit_binary_operation(self)


@dataclass(frozen=True)
class UnaryOperation(Expression):
    operator: str
    operand: Expression

    def accept(self, visitor: 'ASTVisitor') -> Any:
        return visitor.visit_unary_operation(self)


@dataclass(frozen=True)
class FunctionCall(Expression):
    name: str
    arguments: tuple[Expression, ...]

    def accept(self, visitor: 'ASTVisitor') -> Any:
        return visitor.visit_function_call(self)


class ASTVisitor(ABC):
    """Обход дерева выражения: по методу на тип узла."""

    @abstractmethod
    def visit_number_literal(self, node: NumberLiteral) -> Any: ...

    @abstractmethod
    def visit_identifier(self, node: Identifier) -> Any: ...

    @abstractmethod
    def visit_binary_operation(self, node: BinaryOperation) -> Any: ...

    @abstractmethod
    def visit_unary_operation(self, node: UnaryOperation) -> Any: ...

    @abstractmethod
    def visit_function_call(self, node: FunctionCall) -> Any: ...

