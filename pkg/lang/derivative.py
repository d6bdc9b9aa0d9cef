"""Symbolic differentiation of expression trees with light simplification."""

from typing import Set

from .ast_nodes import (
    ASTVisitor,
    Expression,
    NumberLiteral,
    Identifier,
    BinaryOperation,
    UnaryOperation,
    FunctionCall,
)


# Упрощающие конструкторы

def _number(expr: Expression) -> int | float | None:
    if isinstance(expr, NumberLiteral):
        return expr.value
    return None


def _is(expr: Expression, value: float) -> bool:
    number = _number(expr)
    return number is not None and number == value


def _fold(value: int | float) -> Expression | None:
    """Свернуть константу, если она конечна."""
    if isinstance(value, float) and (value != value or value in (float('inf'), float('-inf'))):
        return None
    return NumberLiteral(value)


def neg(a: Expression) -> Expression:
    number = _number(a)
    if number is not None:
        return NumberLiteral(-number)
    if isinstance(a, UnaryOperation) and a.operator == '-':
        return a.operand
    return UnaryOperation('-', a)


def add(a: Expression, b: Expression) -> Expression:
    left, right = _number(a), _number(b)
    if left is not None and right is not None:
        return _fold(left + right) or BinaryOperation(a, '+', b)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(b, UnaryOperation) and b.operator == '-':
        return sub(a, b.operand)
    return BinaryOperation(a, '+', b)


def sub(a: Expression, b: Expression) -> Expression:
    left, right = _number(a), _number(b)
    if left is not None and right is not None:
        return _fold(left - right) or BinaryOperation(a, '-', b)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if a == b:
        return NumberLiteral(0)
    return BinaryOperation(a, '-', b)


def mul(a: Expression, b: Expression) -> Expression:
    left, right = _number(a), _number(b)
    if left is not None and right is not None:
        return _fold(left * right) or BinaryOperation(a, '*', b)
    if _is(a, 0) or _is(b, 0):
        return NumberLiteral(0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    if isinstance(a, UnaryOperation) and a.operator == '-':
        return neg(mul(a.operand, b))
    return BinaryOperation(a, '*', b)


def div(a: Expression, b: Expression) -> Expression:
    left, right = _number(a), _number(b)
    if left is not None and right is not None and right != 0:
        return _fold(left / right) or BinaryOperation(a, '/', b)
    if _is(a, 0) and not _is(b, 0):
        return NumberLiteral(0)
    if _is(b, 1):
        return a
    return BinaryOperation(a, '/', b)


def power(a: Expression, b: Expression) -> Expression:
    base, exponent = _number(a), _number(b)
    if _is(b, 0):
        return NumberLiteral(1)
    if _is(b, 1):
        return a
    if base is not None and exponent is not None and base > 0:
        return _fold(base ** exponent) or BinaryOperation(a, '^', b)
    return BinaryOperation(a, '^', b)


def call(name: str, argument: Expression) -> Expression:
    return FunctionCall(name, (argument,))


class VariableCollector(ASTVisitor):
    """Множество переменных, от которых зависит выражение."""

    def visit_number_literal(self, node: NumberLiteral) -> Set[str]:
        return set()

    def visit_identifier(self, node: Identifier) -> Set[str]:
        return {node.name}

    def visit_binary_operation(self, node: BinaryOperation) -> Set[str]:
        return set(node.left.accept(self)) | set(node.right.accept(self))

    def visit_unary_operation(self, node: UnaryOperation) -> Set[str]:
        return set(node.operand.accept(self))

    def visit_function_call(self, node: FunctionCall) -> Set[str]:
        names: Set[str] = set()
        for argument in node.arguments:
            names |= argument.accept(self)
        return names


def depends_on(expr: Expression, variable: str) -> bool:
    """Зависит ли выражение от переменной."""
    return variable in expr.accept(VariableCollector())


class Differentiator(ASTVisitor):
    """Производная по одной переменной."""

    def __init__(self, variable: str) -> None:
        self.variable = variable

    def visit_number_literal(self, node: NumberLiteral) -> Expression:
        return NumberLiteral(0)

    def visit_identifier(self, node: Identifier) -> Expression:
        return NumberLiteral(1 if node.name == self.variable else 0)

    def visit_binary_operation(self, node: BinaryOperation) -> Expression:
        u, v = node.left, node.right
        du = u.accept(self)
        dv = v.accept(self)

        if node.operator == '+':
            return add(du, dv)
        if node.operator == '-':
            return sub(du, dv)
        if node.operator == '*':
            return add(mul(du, v), mul(u, dv))
        if node.operator == '/':
            return div(sub(mul(du, v), mul(u, dv)), power(v, NumberLiteral(2)))
        if node.operator == '^':
            if not depends_on(v, self.variable):
                return mul(mul(v, power(u, sub(v, NumberLiteral(1)))), du)
            if not depends_on(u, self.variable):
                return mul(mul(node, call('log', u)), dv)
            # u^v * (v' log u + v u'/u)
            return mul(node, add(mul(dv, call('log', u)), div(mul(v, du), u)))
        raise ValueError(f"Unknown operator '{node.operator}'")

    def visit_unary_operation(self, node: UnaryOperation) -> Expression:
        return neg(node.operand.accept(self))

    def visit_function_call(self, node: FunctionCall) -> Expression:
        u = node.arguments[0]
        du = u.accept(self)
        if _is(du, 0):
            return NumberLiteral(0)

        if node.name == 'sin':
            outer = call('cos', u)
        elif node.name == 'cos':
            outer = neg(call('sin', u))
        elif node.name == 'tan':
            outer = div(NumberLiteral(1), power(call('cos', u), NumberLiteral(2)))
        elif node.name == 'exp':
            outer = node
        elif node.name == 'log':
            return div(du, u)
        elif node.name == 'sqrt':
            return div(du, mul(NumberLiteral(2), node))
        elif node.name == 'abs':
            outer = call('sign', u)
        elif node.name == 'sign':
            return NumberLiteral(0)
        else:
            raise ValueError(f"Unknown function '{node.name}'")

        return mul(outer, du)


def differentiate(expr: Expression, variable: str) -> Expression:
    """Производная выражения по переменной."""
    return expr.accept(Differentiator(variable))


def gradient(expr: Expression, variables: tuple[str, ...] = ('x1', 'x2', 'x3')) -> list[Expression]:
    """Градиент по набору переменных."""
    return [differentiate(expr, name) for name in variables]


class Substitution(ASTVisitor):
    """Замена переменной выражением."""

    def __init__(self, variable: str, replacement: Expression) -> None:
        self.variable = variable
        self.replacement = replacement

    def visit_number_literal(self, node: NumberLiteral) -> Expression:
        return node

    def visit_identifier(self, node: Identifier) -> Expression:
        return self.replacement if node.name == self.variable else node

    def visit_binary_operation(self, node: BinaryOperation) -> Expression:
        return BinaryOperation(node.left.accept(self), node.operator, node.right.accept(self))

    def visit_unary_operation(self, node: UnaryOperation) -> Expression:
        return UnaryOperation(node.operator, node.operand.accept(self))

    def visit_function_call(self, node: FunctionCall) -> Expression:
        return FunctionCall(node.name, tuple(argument.accept(self) for argument in node.arguments))


def substitute(expr: Expression, variable: str, replacement: Expression) -> Expression:
    return expr.accept(Substitution(variable, replacement))
