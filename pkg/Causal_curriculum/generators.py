import logging
from fractions import Fraction
from typing import AbstractSet, Dict, Iterable, List, Type, Union

import numpy as np

from Causal_curriculum.baseGenerator import GeneratorHook
from Causal_curriculum.causal_diagram import topological_order
from Causal_curriculum.exceptions import TaskError
from Causal_curriculum.task_model import (
    Edit,
    FiniteTask,
    ReweightExogenous,
    SetConstant,
    as_fraction,
)

logger = logging.getLogger(__name__)


def _private_exogenous(target: FiniteTask, node: str) -> Union[str, None]:
    """Экзогенный родитель, у которого node единственный потомок."""
    exogenous = {var.name for var in target.exogenous}
    for parent in target.functions[node].parents:
        if parent not in exogenous:
            continue
        children = [n for n, f in target.functions.items() if parent in f.parents]
        if children == [node]:
            return parent
    return None


class ShufflingGenerator(GeneratorHook):
    """Перемешивание механизмов начальных состояний из Δ.

    Вершины с собственным экзогенным родителем получают равномерное
    распределение этого родителя. Остальные фиксируются константами,
    которые перебираются по раундам в смешанной системе счисления:
    быстрее всех меняется самая поздняя по времени вершина. Порядок значений
    каждого разряда и его сдвиг задаются зерном.
    """

    name = "shuffle"

    def generate(
        self, target: FiniteTask, delta: AbstractSet[str], round_index: int, seed: int
    ) -> List[Edit]:
        edits: List[Edit] = []
        position = {n: i for i, n in enumerate(topological_order(target.intervened))}
        digits = []
        for node in sorted(delta, key=lambda n: -position[n]):
            private = _private_exogenous(target, node)
            if private is not None:
                var = target.exogenous_var(private)
                share = Fraction(1, len(var.domain))
                edits.append(ReweightExogenous(private, tuple([share] * len(var.domain))))
            else:
                digits.append(node)

        stride = 1
        for index, node in enumerate(digits):
            values = target.domains[node].values
            rng = np.random.default_rng((seed, index))
            permutation = rng.permutation(len(values))
            offset = int(rng.integers(len(values)))
            digit = (round_index // stride + offset) % len(values)
            edits.append(SetConstant(node, values[int(permutation[digit])]))
            stride *= len(values)
        logger.debug(
            "Раунд %d: перемешаны %s, зафиксированы %s",
            round_index,
            [e.name for e in edits if isinstance(e, ReweightExogenous)],
            digits,
        )
        return edits


class FixedGenerator(GeneratorHook):
    """Фиксирует каждую вершину Δ первым значением её области."""

    name = "fixed"

    def generate(
        self, target: FiniteTask, delta: AbstractSet[str], round_index: int, seed: int
    ) -> List[Edit]:
        return [SetConstant(n, target.domains[n].values[0]) for n in sorted(delta)]


class IdentityGenerator(GeneratorHook):
    """Не вносит правок: исходная задача совпадает с целевой."""

    name = "identity"

    def generate(
        self, target: FiniteTask, delta: AbstractSet[str], round_index: int, seed: int
    ) -> List[Edit]:
        return []


class ColorFixingGenerator(GeneratorHook):
    """Фиксирует заданные вершины Δ одной константой.

    Аргументы:
        nodes (Iterable[str]): Вершины, которые нужно зафиксировать.
        value: Значение константы.
    """

    name = "color_fixing"

    def __init__(self, nodes: Iterable[str] = (), value: Union[int, str, Fraction] = 0):
        self.nodes = frozenset(nodes)
        self.value = as_fraction(value)

    def generate(
        self, target: FiniteTask, delta: AbstractSet[str], round_index: int, seed: int
    ) -> List[Edit]:
        chosen = sorted(n for n in delta if not self.nodes or n in self.nodes)
        skipped = sorted(self.nodes - set(delta))
        if skipped:
            logger.warning("Вершины %s вне Δ и не фиксируются", skipped)
        return [SetConstant(n, self.value) for n in chosen]


GENERATORS: Dict[str, Type[GeneratorHook]] = {
    cls.name: cls
    for cls in (ShufflingGenerator, FixedGenerator, IdentityGenerator, ColorFixingGenerator)
}


def make_generator(name: str, **options) -> GeneratorHook:
    """Создать генератор по имени из реестра.

    Исключения:
        TaskError: Если имя неизвестно.
    """
    try:
        cls = GENERATORS[name]
    except KeyError:
        raise TaskError(
            f"Неизвестный генератор {name}; доступны {sorted(GENERATORS)}"
        ) from None
    return cls(**options)
