"""Vectorised evaluation of expression trees on numpy arrays."""

from typing import Any, Mapping

import numpy as np
import numpy.typing as npt

from .ast_nodes import (
    ASTVisitor,
    Expression,
    NumberLiteral,
    Identifier,
    BinaryOperation,
    UnaryOperation,
    FunctionCall,
)
from .printer import to_text
from .tokens import CONSTANTS

FloatArray = npt.NDArray[np.float64]


class EvaluationError(Exception):
    """Ошибка вычисления: выход из области определения операции."""

    def __init__(self, message: str, node: Expression | None = None) -> None:
        self.message = message
        self.node = node
        where = f" in '{to_text(node)}'" if node is not None else ""
        super().__init__(f"Evaluation error{where}: {message}")


class Evaluator(ASTVisitor):
    """Вычислитель выражений.

    В строгом режиме выход из области определения (деление на ноль, логарифм
    неположительного числа, корень из отрицательного) вызывает EvaluationError.
    В режиме с маской такие узлы получают NaN и отмечаются в ``invalid``.
    """

    def __init__(self, env: Mapping[str, Any], *, strict: bool = True) -> None:
        self.env = {name: np.asarray(value, dtype=np.float64) for name, value in env.items()}
        self.strict = strict
        shapes = [value.shape for value in self.env.values()]
        self.shape: tuple[int, ...] = np.broadcast_shapes(*shapes) if shapes else ()
        self.invalid: npt.NDArray[np.bool_] = np.zeros(self.shape, dtype=bool)

    def _reject(self, bad: Any, values: FloatArray, node: Expression, message: str) -> FloatArray:
        """Обработать узлы вне области определения."""
        bad = np.broadcast_to(np.asarray(bad, dtype=bool), np.shape(values))
        if not np.any(bad):
            return values
        if self.strict:
            raise EvaluationError(message, node)
        self.invalid = self.invalid | bad
        return np.where(bad, np.nan, values)

    def _finite(self, values: FloatArray, node: Expression, *operands: FloatArray) -> FloatArray:
        """Переполнение при конечных операндах тоже считается ошибкой."""
        inputs_finite = np.ones(np.shape(values), dtype=bool)
        for operand in operands:
            inputs_finite &= np.broadcast_to(np.isfinite(operand), np.shape(values))
        return self._reject(inputs_finite & ~np.isfinite(values), values, node, "non-finite result")

    def visit_number_literal(self, node: NumberLiteral) -> FloatArray:
        return np.asarray(float(node.value))

    def visit_identifier(self, node: Identifier) -> FloatArray:
        if node.name in self.env:
            return self.env[node.name]
        if node.name in CONSTANTS:
            return np.asarray(CONSTANTS[node.name])
        raise EvaluationError(f"variable '{node.name}' is not bound", node)

    def visit_binary_operation(self, node: BinaryOperation) -> FloatArray:
        left = node.left.accept(self)
        right = node.right.accept(self)

        with np.errstate(all='ignore'):
            if node.operator == '+':
                result = left + right
            elif node.operator == '-':
                result = left - right
            elif node.operator == '*':
                result = left * right
            elif node.operator == '/':
                result = left / right
                result = self._reject(right == 0.0, result, node, "division by zero")
            elif node.operator == '^':
                result = np.power(left, right)
                fractional = right != np.round(right)
                result = self._reject((left < 0.0) & fractional, result, node,
                                      "negative base with fractional exponent")
                result = self._reject((left == 0.0) & (right < 0.0), result, node,
                                      "zero base with negative exponent")
            else:
                raise EvaluationError(f"unknown operator '{node.operator}'", node)

        return self._finite(result, node, left, right)

    def visit_unary_operation(self, node: UnaryOperation) -> FloatArray:
        operand = node.operand.accept(self)
        if node.operator != '-':
            raise EvaluationError(f"unknown unary operator '{node.operator}'", node)
        return -operand

    def visit_function_call(self, node: FunctionCall) -> FloatArray:
        argument = node.arguments[0].accept(self)

        with np.errstate(all='ignore'):
            if node.name == 'sin':
                result = np.sin(argument)
            elif node.name == 'cos':
                result = np.cos(argument)
            elif node.name == 'tan':
                result = np.tan(argument)
            elif node.name == 'exp':
                result = np.exp(argument)
            elif node.name == 'log':
                result = np.log(argument)
                result = self._reject(argument <= 0.0, result, node, "logarithm of non-positive value")
            elif node.name == 'sqrt':
                result = np.sqrt(argument)
                result = self._reject(argument < 0.0, result, node, "square root of negative value")
            elif node.name == 'abs':
                result = np.abs(argument)
            elif node.name == 'sign':
                result = np.sign(argument)
            else:
                raise EvaluationError(f"unknown function '{node.name}'", node)

        return self._finite(result, node, argument)


def evaluate(expr: Expression, env: Mapping[str, Any]) -> FloatArray:
    """Вычислить выражение в строгом режиме; результат приводится к форме окружения."""
    evaluator = Evaluator(env, strict=True)
    values = expr.accept(evaluator)
    return np.broadcast_to(values, evaluator.shape).astype(np.float64)


def evaluate_masked(expr: Expression, env: Mapping[str, Any]) -> tuple[FloatArray, npt.NDArray[np.bool_]]:
    """Вычислить выражение, отмечая узлы вне области определения."""
    evaluator = Evaluator(env, strict=False)
    values = np.broadcast_to(expr.accept(evaluator), evaluator.shape).astype(np.float64)
    invalid = np.broadcast_to(evaluator.invalid, evaluator.shape) | ~np.isfinite(values)
    return np.where(invalid, np.nan, values), np.array(invalid)

