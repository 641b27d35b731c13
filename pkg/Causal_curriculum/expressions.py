from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import FrozenSet, Mapping

import pyparsing as pp

from Causal_curriculum.exceptions import SpecFormatError, TaskError

pp.ParserElement.enable_packrat()

KEYWORDS = ("not", "xor", "and", "or", "if", "then", "else")

_CANONICAL = {
    "not": "not",
    "¬": "not",
    "!": "not",
    "*": "mul",
    "xor": "xor",
    "⊕": "xor",
    "^": "xor",
    "=": "eq",
    "==": "eq",
    "and": "and",
    "∧": "and",
    "&": "and",
    "or": "or",
    "∨": "or",
    "|": "or",
}

_SYMBOLS = {"mul": "*", "xor": "xor", "eq": "=", "and": "and", "or": "or"}


def _truth(value: Fraction) -> bool:
    return value != 0


def _as_value(flag: bool) -> Fraction:
    return Fraction(1) if flag else Fraction(0)


class Expression(ABC):
    """Узел дерева выражения структурной функции."""

    @abstractmethod
    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        """Вычислить выражение при заданных значениях переменных.

        Аргументы:
            env (Mapping[str, Fraction]): Значения переменных.

        Возвращает:
            Fraction: Точный результат; логические операции дают 0 или 1.

        Исключения:
            TaskError: Если переменная не задана.
        """

    @abstractmethod
    def variables(self) -> FrozenSet[str]:
        """Вернуть имена переменных, встречающихся в выражении."""

    @abstractmethod
    def to_text(self) -> str:
        """Вернуть каноническую запись, которую parse_expression читает обратно."""


@dataclass(frozen=True)
class Const(Expression):
    value: Fraction

    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        return self.value

    def variables(self) -> FrozenSet[str]:
        return frozenset()

    def to_text(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Var(Expression):
    name: str

    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        try:
            return Fraction(env[self.name])
        except KeyError:
            raise TaskError(f"Переменная {self.name} не задана") from None

    def variables(self) -> FrozenSet[str]:
        return frozenset({self.name})

    def to_text(self) -> str:
        return self.name


@dataclass(frozen=True)
class Unary(Expression):
    op: str
    operand: Expression

    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        return _as_value(not _truth(self.operand.evaluate(env)))

    def variables(self) -> FrozenSet[str]:
        return self.operand.variables()

    def to_text(self) -> str:
        return f"(not {self.operand.to_text()})"


@dataclass(frozen=True)
class Binary(Expression):
    op: str
    left: Expression
    right: Expression

    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "mul":
            return a * b
        if self.op == "xor":
            return _as_value(_truth(a) != _truth(b))
        if self.op == "eq":
            return _as_value(a == b)
        if self.op == "and":
            return _as_value(_truth(a) and _truth(b))
        if self.op == "or":
            return _as_value(_truth(a) or _truth(b))
        raise TaskError(f"Неизвестная операция {self.op}")

    def variables(self) -> FrozenSet[str]:
        return self.left.variables() | self.right.variables()

    def to_text(self) -> str:
        return f"({self.left.to_text()} {_SYMBOLS[self.op]} {self.right.to_text()})"


@dataclass(frozen=True)
class IfThenElse(Expression):
    condition: Expression
    then: Expression
    otherwise: Expression

    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        if _truth(self.condition.evaluate(env)):
            return self.then.evaluate(env)
        return self.otherwise.evaluate(env)

    def variables(self) -> FrozenSet[str]:
        return (
            self.condition.variables()
            | self.then.variables()
            | self.otherwise.variables()
        )

    def to_text(self) -> str:
        return (
            f"(if {self.condition.to_text()} then {self.then.to_text()} "
            f"else {self.otherwise.to_text()})"
        )


def _unary_action(tokens: pp.ParseResults) -> Expression:
    op, operand = tokens[0]
    return Unary(_CANONICAL[op], operand)


def _binary_action(tokens: pp.ParseResults) -> Expression:
    items = tokens[0]
    node = items[0]
    for i in range(1, len(items), 2):
        node = Binary(_CANONICAL[items[i]], node, items[i + 1])
    return node


def _build_grammar() -> pp.ParserElement:
    keyword = pp.MatchFirst([pp.Keyword(k) for k in KEYWORDS])
    number = pp.Regex(r"-?\d+(?:\.\d+|/\d+)?").set_parse_action(
        lambda t: Const(Fraction(t[0]))
    )
    identifier = (~keyword + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")).set_parse_action(
        lambda t: Var(t[0])
    )

    expression = pp.Forward()
    conditional = (
        pp.Keyword("if").suppress()
        + expression
        + pp.Keyword("then").suppress()
        + expression
        + pp.Keyword("else").suppress()
        + expression
    ).set_parse_action(lambda t: IfThenElse(t[0], t[1], t[2]))
    operand = conditional | number | identifier

    expression <<= pp.infix_notation(
        operand,
        [
            (
                pp.Keyword("not") | pp.Literal("¬") | pp.Literal("!"),
                1,
                pp.OpAssoc.RIGHT,
                _unary_action,
            ),
            (pp.Literal("*"), 2, pp.OpAssoc.LEFT, _binary_action),
            (
                pp.Keyword("xor") | pp.Literal("⊕") | pp.Literal("^"),
                2,
                pp.OpAssoc.LEFT,
                _binary_action,
            ),
            (pp.Literal("==") | pp.Literal("="), 2, pp.OpAssoc.LEFT, _binary_action),
            (
                pp.Keyword("and") | pp.Literal("∧") | pp.Literal("&"),
                2,
                pp.OpAssoc.LEFT,
                _binary_action,
            ),
            (
                pp.Keyword("or") | pp.Literal("∨") | pp.Literal("|"),
                2,
                pp.OpAssoc.LEFT,
                _binary_action,
            ),
        ],
    )
    return expression


_GRAMMAR = _build_grammar()


def parse_expression(text: str, path: str = "expression") -> Expression:
    """Разобрать выражение структурной функции.

    Приоритеты от сильного к слабому: not, *, xor, =, and, or, затем
    if-then-else. Так 'not H xor X2 and Z' читается как ((not H) xor X2) and Z.

    Аргументы:
        text (str): Текст выражения, например '0.5*(H xor X1)'.
        path (str): Путь элемента документа для сообщения об ошибке.

    Возвращает:
        Expression: Дерево выражения.

    Исключения:
        SpecFormatError: Если текст не соответствует грамматике.
    """
    try:
        result = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise SpecFormatError(
            path, f"Ошибка разбора выражения {text!r}: {exc.msg} (позиция {exc.loc})"
        ) from None
    return result[0]
