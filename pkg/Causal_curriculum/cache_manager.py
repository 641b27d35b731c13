import logging
from typing import Any, Hashable, Optional

from cachetools import LRUCache

from Causal_curriculum.config import Settings

logger = logging.getLogger(__name__)


class CacheManager:
    """Менеджер кэша результатов проверок d-разделимости.

    Хранит вердикты, вычисленные для неизменяемых диаграмм, поэтому время
    жизни записей не ограничено; при переполнении вытесняются давно
    использованные записи.

    Атрибуты:
        cache (LRUCache): Внутренний объект кэша.
        hits (int): Число попаданий.
        misses (int): Число промахов.
    """

    def __init__(self, maxsize: Optional[int] = None):
        """Инициализировать менеджер кэша с максимальным размером.

        Аргументы:
            maxsize (Optional[int]): Максимальное количество элементов в кэше
                (по умолчанию: Settings.CACHE_SIZE).
        """
        self.cache: LRUCache[Hashable, Any] = LRUCache(
            maxsize=maxsize or Settings.CACHE_SIZE
        )
        self.hits = 0
        self.misses = 0

    def get(self, key: Hashable):
        """Получить значение из кэша.

        Аргументы:
            key (Hashable): Ключ для поиска.

        Возвращает:
            Значение из кэша или None, если ключ не найден.
        """
        value = self.cache.get(key)
        if value is None:
            self.misses += 1
            logger.debug("Промах кэша: %s", key)
        else:
            self.hits += 1
        return value

    def set(self, key: Hashable, value) -> None:
        """Сохранить значение в кэше.

        Аргументы:
            key (Hashable): Ключ для сохранения значения.
            value: Значение для кэширования.
        """
        self.cache[key] = value

    def clear(self) -> None:
        self.cache.clear()
        self.hits = 0
        self.misses = 0

    def __contains__(self, key: Hashable) -> bool:
        """Проверить, существует ли ключ в кэше.

        Аргументы:
            key (Hashable): Ключ для проверки.

        Возвращает:
            bool: True, если ключ существует, иначе False.
        """
        return key in self.cache

    def __len__(self) -> int:
        return len(self.cache)
