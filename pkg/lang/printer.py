"""Печать AST обратно в текст, устойчивая к повторному разбору."""

from typing import Tuple

from .ast_nodes import (
    ASTVisitor,
    Expression,
    NumberLiteral,
    Identifier,
    BinaryOperation,
    UnaryOperation,
    FunctionCall,
)

# Приоритеты операций
PREC_ADD = 1
PREC_MUL = 2
PREC_UNARY = 3
PREC_POW = 4
PREC_ATOM = 5

BINARY_PRECEDENCE = {
    '+': PREC_ADD,
    '-': PREC_ADD,
    '*': PREC_MUL,
    '/': PREC_MUL,
    '^': PREC_POW,
}

BINARY_SPELLING = {
    '+': ' + ',
    '-': ' - ',
    '*': '*',
    '/': '/',
    '^': '^',
}


def format_number(value: int | float) -> str:
    """Текстовая форма числа; отрицательные числа берутся в скобки."""
    text = repr(float(value)) if isinstance(value, float) else str(value)
    if value < 0:
        return f"({text})"
    return text


class ExpressionPrinter(ASTVisitor):
    """Печать с минимальной расстановкой скобок.

    Каждый visit возвращает пару (текст, приоритет).
    """

    def visit_number_literal(self, node: NumberLiteral) -> Tuple[str, int]:
        return format_number(node.value), PREC_ATOM

    def visit_identifier(self, node: Identifier) -> Tuple[str, int]:
        return node.name, PREC_ATOM

    def visit_binary_operation(self, node: BinaryOperation) -> Tuple[str, int]:
        prec = BINARY_PRECEDENCE[node.operator]
        left_text, left_prec = node.left.accept(self)
        right_text, right_prec = node.right.accept(self)

        if node.operator == '^':
            # Основание степени: только атомы; показатель может быть унарным
            if left_prec <= PREC_POW:
                left_text = f"({left_text})"
            if right_prec < PREC_UNARY:
                right_text = f"({right_text})"
        else:
            if left_prec < prec:
                left_text = f"({left_text})"
            if right_prec <= prec:
                right_text = f"({right_text})"

        return f"{left_text}{BINARY_SPELLING[node.operator]}{right_text}", prec

    def visit_unary_operation(self, node: UnaryOperation) -> Tuple[str, int]:
        if isinstance(node.operand, NumberLiteral):
            return format_number(-node.operand.value), PREC_ATOM
        operand_text, operand_prec = node.operand.accept(self)
        if operand_prec < PREC_UNARY:
            operand_text = f"({operand_text})"
        return f"-{operand_text}", PREC_UNARY

    def visit_function_call(self, node: FunctionCall) -> Tuple[str, int]:
        arguments = ", ".join(arg.accept(self)[0] for arg in node.arguments)
        return f"{node.name}({arguments})", PREC_ATOM


def to_text(expr: Expression) -> str:
    """Напечатать выражение."""
    text, _ = expr.accept(ExpressionPrinter())
    return str(text)
