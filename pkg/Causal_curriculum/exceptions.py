from typing import Iterable, Optional, Tuple


class CausalCurriculumError(ValueError):
    """Базовое исключение пакета.

    Наследуется от ValueError, чтобы вызывающий код, перехватывающий
    ValueError, продолжал работать.
    """


class DiagramError(CausalCurriculumError):
    """Ошибка структуры диаграммы или некорректный запрос к ней."""


class TaskError(CausalCurriculumError):
    """Нарушение инвариантов задачи, правки или политики."""


class SpecFormatError(TaskError):
    """Ошибка схемы документа задачи или файла политики.

    Атрибуты:
        path (str): Путь к ошибочному элементу, например 'functions.Y1.parents'.
        line (Optional[int]): Номер строки для синтаксических ошибок JSON.
    """

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}" if line is None else f"{path} (строка {line})"
        super().__init__(f"{where}: {message}")


class UnsupportedEventError(CausalCurriculumError):
    """Условие имеет нулевую вероятность."""


class BudgetExceededError(CausalCurriculumError):
    """Превышен бюджет перебора."""


class NotSolubleError(CausalCurriculumError):
    """Задача не является разрешимой.

    Атрибуты:
        component (Tuple[str, ...]): Действия, нарушающие разрешимость.
        witness (Optional[Tuple[int, int]]): Пара индексов (j, i), на которой
            нарушается условие независимости.
    """

    def __init__(
        self,
        component: Iterable[str],
        witness: Optional[Tuple[int, int]] = None,
    ):
        self.component = tuple(component)
        self.witness = witness
        super().__init__(
            f"Задача не разрешима: компонента {list(self.component)}, "
            f"свидетель {witness}"
        )


class CoverageNotReachedError(CausalCurriculumError):
    """Покрытие входов действия не достигнуто за отведённое число раундов.

    Атрибуты:
        action (str): Действие, для которого не хватило покрытия.
        missing (Tuple[tuple, ...]): Непокрытые значения входов.
    """

    def __init__(self, action: str, missing: Iterable[tuple]):
        self.action = action
        self.missing = tuple(sorted(missing))
        super().__init__(
            f"Покрытие входов {action} не достигнуто: "
            f"осталось {len(self.missing)} значений"
        )
