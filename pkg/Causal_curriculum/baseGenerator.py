from abc import ABC, abstractmethod
from typing import AbstractSet, List

from Causal_curriculum.exceptions import TaskError
from Causal_curriculum.task_model import Edit, FiniteTask


class GeneratorHook(ABC):
    """Абстрактный генератор исходных задач Gen(T, Δ).

    Дочерние классы реализуют generate; вызов экземпляра проверяет, что
    правки затрагивают только вершины из Δ.

    Атрибуты:
        name (str): Имя генератора в реестре.
    """

    name = "abstract"

    @abstractmethod
    def generate(
        self, target: FiniteTask, delta: AbstractSet[str], round_index: int, seed: int
    ) -> List[Edit]:
        """Построить правки очередной исходной задачи.

        Аргументы:
            target (FiniteTask): Целевая задача.
            delta (AbstractSet[str]): Допустимые цели правок.
            round_index (int): Номер раунда, начиная с 0.
            seed (int): Зерно; результат детерминирован по (round_index, seed).

        Возвращает:
            List[Edit]: Правки с целями из delta.
        """
        pass

    def __call__(
        self, target: FiniteTask, delta: AbstractSet[str], round_index: int, seed: int
    ) -> List[Edit]:
        """Сгенерировать правки и проверить их цели.

        Исключения:
            TaskError: Если правка выходит за пределы Δ.
        """
        edits = list(self.generate(target, delta, round_index, seed))
        for edit in edits:
            outside = sorted(edit.targets(target) - set(delta))
            if outside:
                raise TaskError(
                    f"Генератор {self.name} правит вершины {outside} вне Δ"
                )
        return edits
