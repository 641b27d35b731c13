import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx

from Causal_curriculum.cache_manager import CacheManager
from Causal_curriculum.causal_diagram import (
    CausalDiagram,
    NodeRole,
    SeparationQuery,
    augment_edit_indicators,
    augment_regime,
    d_separated,
    descendants,
    intervened_diagram,
)
from Causal_curriculum.exceptions import DiagramError, NotSolubleError
from Causal_curriculum.task_model import FiniteTask

logger = logging.getLogger(__name__)

verdict_cache = CacheManager()


@dataclass(frozen=True)
class EditabilityQuery:
    """Запрос: редактируемо ли Δ относительно множества действий.

    Атрибуты:
        diagram (CausalDiagram): Диаграмма; сводится к G_π при проверке.
        delta (FrozenSet[str]): Цели правок.
        actions (FrozenSet[str]): Действия X^(j).
    """

    diagram: CausalDiagram
    delta: FrozenSet[str]
    actions: FrozenSet[str]

    @classmethod
    def of(
        cls, diagram: CausalDiagram, delta: Iterable[str], actions: Iterable[str]
    ) -> "EditabilityQuery":
        return cls(diagram, frozenset(delta), frozenset(actions))


@dataclass(frozen=True)
class RelevanceGraph:
    """Граф релевантности действий и его разбиение на SCC.

    Атрибуты:
        nodes (Tuple[str, ...]): Действия в порядке времени.
        edges (Tuple[Tuple[str, str], ...]): Рёбра X' → X.
        components (Tuple[Tuple[str, ...], ...]): SCC в порядке конденсации,
            первой идёт компонента, оптимизируемая первой.
    """

    nodes: Tuple[str, ...]
    edges: Tuple[Tuple[str, str], ...]
    components: Tuple[Tuple[str, ...], ...]

    @property
    def acyclic(self) -> bool:
        return all(len(c) == 1 for c in self.components)

    @property
    def order(self) -> Tuple[str, ...]:
        return tuple(a for component in self.components for a in component)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "components": [list(c) for c in self.components],
            "acyclic": self.acyclic,
        }


def _downstream_rewards(g: CausalDiagram, action: str) -> Tuple[str, ...]:
    reached = descendants(g, [action])
    return tuple(y for y in g.rewards if y in reached)


def _check_actions(g: CausalDiagram, actions: Iterable[str]) -> Tuple[str, ...]:
    actions = tuple(sorted(set(actions)))
    if not actions:
        raise DiagramError("Множество действий пусто")
    for action in actions:
        if g.role(action) != NodeRole.ACTION:
            raise DiagramError(f"Вершина {action} не является действием")
    return actions


def _check_pool(g: CausalDiagram, pool: Iterable[str]) -> Tuple[str, ...]:
    pool = tuple(sorted(set(pool)))
    for node in pool:
        role = g.role(node)
        if role != NodeRole.STATE:
            raise DiagramError(f"Правка вершины {node} с ролью {role.value} запрещена")
    return pool


def _candidates(g: CausalDiagram) -> Tuple[str, ...]:
    return g.nodes_with_role(NodeRole.STATE)


def _criterion(g: CausalDiagram, delta: FrozenSet[str], action: str) -> bool:
    """(τ ⫫ Y ∩ De(X) | X, S_X) в G_π с индикатором τ → Δ."""
    key = ("edit", g.fingerprint, delta, action)
    cached = verdict_cache.get(key)
    if cached is not None:
        return cached
    rewards = _downstream_rewards(g, action)
    if not rewards:
        verdict = True
    else:
        augmented, tau = augment_edit_indicators(g, delta)
        verdict = d_separated(
            augmented,
            SeparationQuery.of([tau], rewards, (action,) + g.inputs_of(action)),
        )
    verdict_cache.set(key, verdict)
    return verdict


def _editable(g: CausalDiagram, delta: FrozenSet[str], actions: Sequence[str]) -> bool:
    return all(_criterion(g, delta, action) for action in actions)


def is_edit(q: EditabilityQuery) -> bool:
    """Проверить, редактируемо ли Δ относительно действий.

    Каждое действие X проверяется отдельно: (τ ⫫ Y ∩ De(X) | X, S_X) в G_π,
    дополненной индикатором τ с рёбрами во все вершины Δ. Пустое множество
    Y ∩ De(X) считается разделённым.

    Аргументы:
        q (EditabilityQuery): Запрос.

    Возвращает:
        bool: True, если условие выполняется для всех действий. Здесь
        False возвращается при d-связности, а не при независимости.

    Исключения:
        DiagramError: Если Δ пусто или содержит действие, вознаграждение или
            неизвестную вершину.
    """
    g = intervened_diagram(q.diagram)
    if not q.delta:
        raise DiagramError("Множество правок пусто")
    delta = frozenset(_check_pool(g, q.delta))
    actions = _check_actions(g, q.actions)
    return _editable(g, delta, actions)


def find_max_edit(
    d: CausalDiagram,
    actions: Iterable[str],
    order: Optional[Sequence[str]] = None,
) -> Tuple[str, ...]:
    """Найти максимальное редактируемое множество состояний.

    Кандидаты перебираются по одному: вершина добавляется, и если условие
    нарушено, удаляется. Результат не зависит от порядка перебора.

    Аргументы:
        d (CausalDiagram): Диаграмма задачи.
        actions (Iterable[str]): Действия, относительно которых ищется Δ.
        order (Optional[Sequence[str]]): Порядок перебора кандидатов
            (по умолчанию по имени).

    Возвращает:
        Tuple[str, ...]: Максимальное Δ, отсортированное по имени.
    """
    g = intervened_diagram(d)
    actions = _check_actions(g, actions)
    if order is None:
        candidates = _candidates(g)
    else:
        _check_pool(g, order)
        candidates = tuple(order)
    delta: List[str] = []
    for node in candidates:
        delta.append(node)
        if not _editable(g, frozenset(delta), actions):
            delta.pop()
    logger.debug("Максимальное Δ для %s: %s", list(actions), sorted(delta))
    return tuple(sorted(delta))


def find_edit(
    d: CausalDiagram,
    actions: Iterable[str],
    pool: Optional[Iterable[str]] = None,
) -> Tuple[str, ...]:
    """Найти максимальное редактируемое подмножество пула кандидатов."""
    if pool is None:
        return find_max_edit(d, actions)
    g = intervened_diagram(d)
    return find_max_edit(g, actions, order=_check_pool(g, pool))


def list_edits(d: CausalDiagram, actions: Iterable[str]) -> Iterator[Tuple[str, ...]]:
    """Перечислить все непустые редактируемые множества.

    Маска идёт от 2^k − 1 к 1; старший бит соответствует первому по имени
    элементу максимального множества.
    """
    elements = find_max_edit(d, actions)
    k = len(elements)
    mask = (1 << k) - 1
    while mask:
        yield tuple(elements[k - 1 - b] for b in reversed(range(k)) if mask >> b & 1)
        mask -= 1


def _relevant(g: CausalDiagram, source: str, target: str) -> bool:
    """π_source ⫫̸ Y ∩ De(target) | S_target, target в G_π."""
    key = ("relevance", g.fingerprint, source, target)
    cached = verdict_cache.get(key)
    if cached is not None:
        return cached
    rewards = _downstream_rewards(g, target)
    if not rewards:
        verdict = False
    else:
        augmented, regime = augment_regime(g, source)
        verdict = not d_separated(
            augmented,
            SeparationQuery.of([regime], rewards, (target,) + g.inputs_of(target)),
        )
    verdict_cache.set(key, verdict)
    return verdict


def relevance_graph(t: FiniteTask) -> RelevanceGraph:
    """Построить граф релевантности и упорядочить его SCC.

    Компоненты конденсации упорядочены топологически; при выборе между
    несвязанными компонентами первой идёт та, чьё последнее действие позже.
    """
    g = t.intervened
    actions = g.actions
    graph = nx.DiGraph()
    graph.add_nodes_from(actions)
    for source in actions:
        for target in actions:
            if source != target and _relevant(g, source, target):
                graph.add_edge(source, target)

    position = {a: i for i, a in enumerate(actions)}
    condensed = nx.condensation(graph)
    order = nx.lexicographical_topological_sort(
        condensed,
        key=lambda c: -max(position[a] for a in condensed.nodes[c]["members"]),
    )
    components = tuple(
        tuple(sorted(condensed.nodes[c]["members"], key=position.__getitem__))
        for c in order
    )
    edges = tuple(sorted(graph.edges, key=lambda e: (position[e[0]], position[e[1]])))
    logger.debug("Граф релевантности %s: компоненты %s", t.name, components)
    return RelevanceGraph(actions, edges, components)


def solubility_witness(t: FiniteTask) -> Optional[Tuple[int, int]]:
    """Первая пара (j, i), j < i, нарушающая (Y ∩ De(X_i) ⫫ π_j | S_i, X_i).

    Индексы считаются от 1 в порядке времени; None, если задача разрешима.
    """
    g = t.intervened
    actions = g.actions
    for i in range(len(actions)):
        for j in range(i):
            if _relevant(g, actions[j], actions[i]):
                return (j + 1, i + 1)
    return None


def is_soluble(t: FiniteTask) -> bool:
    return solubility_witness(t) is None


def soluble_order(t: FiniteTask) -> Tuple[str, ...]:
    """Вернуть возрастающий разрешимый порядок действий.

    Исключения:
        NotSolubleError: Если задача не разрешима; содержит SCC, в которую
            попало нарушающее действие, или пару действий свидетеля.
    """
    witness = solubility_witness(t)
    graph = relevance_graph(t)
    if witness is None:
        return graph.order
    actions = t.actions
    pair = {actions[witness[0] - 1], actions[witness[1] - 1]}
    for component in graph.components:
        if pair <= set(component):
            raise NotSolubleError(component, witness)
    raise NotSolubleError(sorted(pair), witness)


def expanded_action_set(order: Sequence[str], actions: Iterable[str]) -> Tuple[str, ...]:
    """Замыкание X+ = X ∪ {X' | X' ≺ X, X ∈ X} по разрешимому порядку."""
    order = tuple(order)
    actions = set(actions)
    unknown = sorted(actions - set(order))
    if unknown:
        raise DiagramError(f"Действия {unknown} отсутствуют в порядке")
    if not actions:
        return ()
    last = max(order.index(a) for a in actions)
    return tuple(sorted(order[: last + 1]))
