import logging
import os
from fractions import Fraction

logger = logging.getLogger(__name__)


class Settings:
    """Настройки по умолчанию.

    Атрибуты:
        ENUMERATION_BUDGET_ENV (str): Переменная окружения с бюджетом перебора.
        LOG_LEVEL_ENV (str): Переменная окружения с уровнем логирования.
        DEFAULT_ENUMERATION_BUDGET (int): Максимум перебираемых миров на запрос.
        JOINT_ACTION_CAP (int): Максимум совместных правил для одной SCC.
        COVERAGE_ROUND_CAP (int): Максимум раундов покрытия на действие.
        LEARNING_RATE (Fraction): Шаг обучения табличного агента.
        EXPLORATION_RATE (Fraction): Вероятность случайного действия.
        EPISODES (int): Число эпизодов обучения.
        CACHE_SIZE (int): Размер кэша проверок d-разделимости.
    """

    ENUMERATION_BUDGET_ENV = "CAUSAL_CURRICULUM_ENUMERATION_BUDGET"
    LOG_LEVEL_ENV = "CAUSAL_CURRICULUM_LOG_LEVEL"

    DEFAULT_ENUMERATION_BUDGET = 2_000_000
    JOINT_ACTION_CAP = 4096
    COVERAGE_ROUND_CAP = 32
    LEARNING_RATE = Fraction(1, 10)
    EXPLORATION_RATE = Fraction(1, 10)
    EPISODES = 100_000
    CACHE_SIZE = 4096
    DEFAULT_LOG_LEVEL = "WARNING"

    @classmethod
    def enumeration_budget(cls) -> int:
        """Прочитать бюджет перебора из окружения.

        Возвращает:
            int: Значение переменной окружения или значение по умолчанию,
            если переменная не задана или некорректна.
        """
        raw = os.environ.get(cls.ENUMERATION_BUDGET_ENV)
        if raw is None:
            return cls.DEFAULT_ENUMERATION_BUDGET
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value <= 0:
            logger.warning(
                "Некорректный бюджет перебора %r, используется %d",
                raw,
                cls.DEFAULT_ENUMERATION_BUDGET,
            )
            return cls.DEFAULT_ENUMERATION_BUDGET
        return value

    @classmethod
    def log_level(cls) -> str:
        return os.environ.get(cls.LOG_LEVEL_ENV, cls.DEFAULT_LOG_LEVEL).upper()
