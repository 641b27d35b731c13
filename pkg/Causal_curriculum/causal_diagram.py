import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import networkx as nx

from Causal_curriculum.exceptions import DiagramError

logger = logging.getLogger(__name__)

_UP = "up"
_DOWN = "down"


class NodeRole(str, Enum):
    """Роль вершины в причинной диаграмме."""

    STATE = "state"
    ACTION = "action"
    REWARD = "reward"
    EDIT_INDICATOR = "edit_indicator"
    REGIME = "regime"


AUXILIARY_ROLES = frozenset({NodeRole.EDIT_INDICATOR, NodeRole.REGIME})


@dataclass(frozen=True)
class SeparationQuery:
    """Запрос d-разделимости (X ⫫ Y | Z)."""

    x: FrozenSet[str]
    y: FrozenSet[str]
    z: FrozenSet[str] = frozenset()

    @classmethod
    def of(
        cls, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()
    ) -> "SeparationQuery":
        return cls(frozenset(x), frozenset(y), frozenset(z))


@dataclass(frozen=True)
class ValidationReport:
    """Отчёт о проверке: пустой список нарушений означает корректность.

    Атрибуты:
        violations (Tuple[str, ...]): Нарушения инвариантов.
        warnings (Tuple[str, ...]): Замечания, не делающие модель некорректной.
    """

    violations: Tuple[str, ...] = ()
    warnings: Tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def merged(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(
            self.violations + other.violations, self.warnings + other.warnings
        )

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": list(self.violations),
            "warnings": list(self.warnings),
        }


class CausalDiagram:
    """Смешанный причинный граф с ролями вершин.

    Диаграмма неизменяема: все операции хирургии возвращают новый объект.
    Двунаправленные рёбра хранятся как неупорядоченные пары и при проверке
    d-разделимости заменяются скрытыми родителями, которые наружу не выдаются.

    Атрибуты:
        nodes (Tuple[str, ...]): Вершины, отсортированные по имени.
        actions (Tuple[str, ...]): Действия в порядке времени.
    """

    def __init__(
        self,
        roles: Mapping[str, NodeRole],
        directed: Iterable[Tuple[str, str]] = (),
        bidirected: Iterable[Tuple[str, str]] = (),
        action_inputs: Optional[Mapping[str, Sequence[str]]] = None,
    ):
        """Создать диаграмму.

        Аргументы:
            roles (Mapping[str, NodeRole]): Роль каждой вершины.
            directed (Iterable[Tuple[str, str]]): Ориентированные рёбра.
            bidirected (Iterable[Tuple[str, str]]): Двунаправленные рёбра.
            action_inputs (Optional[Mapping[str, Sequence[str]]]): Входные
                состояния S_i каждого действия; порядок ключей задаёт порядок
                действий во времени.
        """
        self._roles: Dict[str, NodeRole] = {
            str(name): NodeRole(role) for name, role in roles.items()
        }
        self._directed: FrozenSet[Tuple[str, str]] = frozenset(
            (u, v) for u, v in directed
        )
        self._bidirected: FrozenSet[FrozenSet[str]] = frozenset(
            frozenset((u, v)) for u, v in bidirected
        )
        self._inputs: Dict[str, Tuple[str, ...]] = {
            action: tuple(states) for action, states in (action_inputs or {}).items()
        }

    @property
    def nodes(self) -> Tuple[str, ...]:
        return tuple(sorted(self._roles))

    @property
    def roles(self) -> Dict[str, NodeRole]:
        return dict(self._roles)

    @property
    def directed_edges(self) -> Tuple[Tuple[str, str], ...]:
        return tuple(sorted(self._directed))

    @property
    def bidirected_edges(self) -> Tuple[Tuple[str, ...], ...]:
        return tuple(sorted(tuple(sorted(pair)) for pair in self._bidirected))

    @property
    def action_inputs(self) -> Dict[str, Tuple[str, ...]]:
        return dict(self._inputs)

    @property
    def actions(self) -> Tuple[str, ...]:
        declared = [a for a in self._inputs if self._roles.get(a) == NodeRole.ACTION]
        rest = sorted(
            n
            for n, r in self._roles.items()
            if r == NodeRole.ACTION and n not in self._inputs
        )
        return tuple(declared + rest)

    @property
    def rewards(self) -> Tuple[str, ...]:
        return self.nodes_with_role(NodeRole.REWARD)

    def nodes_with_role(self, role: NodeRole) -> Tuple[str, ...]:
        return tuple(sorted(n for n, r in self._roles.items() if r == role))

    def has_node(self, name: str) -> bool:
        return name in self._roles

    def role(self, name: str) -> NodeRole:
        self._require([name])
        return self._roles[name]

    def inputs_of(self, action: str) -> Tuple[str, ...]:
        if action not in self._inputs:
            raise DiagramError(f"Для действия {action} не заданы входные состояния")
        return self._inputs[action]

    def time_index(self, action: str) -> int:
        """Вернуть номер действия во времени, начиная с 1."""
        try:
            return self.actions.index(action) + 1
        except ValueError:
            raise DiagramError(f"Вершина {action} не является действием") from None

    def parents(self, name: str) -> Tuple[str, ...]:
        self._require([name])
        return tuple(sorted(self._graph.predecessors(name)))

    def children(self, name: str) -> Tuple[str, ...]:
        self._require([name])
        return tuple(sorted(self._graph.successors(name)))

    def spouses(self, name: str) -> Tuple[str, ...]:
        self._require([name])
        return tuple(
            sorted(
                other
                for pair in self._bidirected
                if name in pair
                for other in pair
                if other != name
            )
        )

    def ancestors(self, names: Iterable[str]) -> FrozenSet[str]:
        names = list(names)
        self._require(names)
        result: Set[str] = set(names)
        for name in names:
            result |= nx.ancestors(self._graph, name)
        return frozenset(result)

    def descendants(self, names: Iterable[str]) -> FrozenSet[str]:
        names = list(names)
        self._require(names)
        result: Set[str] = set(names)
        for name in names:
            result |= nx.descendants(self._graph, name)
        return frozenset(result)

    def without_node(self, name: str) -> "CausalDiagram":
        """Удалить вершину вместе с её рёбрами."""
        self._require([name])
        return CausalDiagram(
            {n: r for n, r in self._roles.items() if n != name},
            [(u, v) for u, v in self._directed if name not in (u, v)],
            [tuple(p) for p in self._bidirected if name not in p],
            {
                a: [s for s in states if s != name]
                for a, states in self._inputs.items()
                if a != name
            },
        )

    @cached_property
    def fingerprint(self) -> str:
        canonical = repr(
            (
                sorted((n, r.value) for n, r in self._roles.items()),
                self.directed_edges,
                self.bidirected_edges,
                list(self._inputs.items()),
            )
        )
        return hashlib.sha1(canonical.encode("utf-8")).hexdigest()

    @cached_property
    def _graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self._roles)
        graph.add_edges_from(self._directed)
        return graph

    @cached_property
    def _latent_graph(self) -> nx.DiGraph:
        # u <-> v превращается в u <- h -> v; h не является строкой
        graph = self._graph.copy()
        for pair in self._bidirected:
            u, v = sorted(pair)
            latent = ("<->", u, v)
            graph.add_edge(latent, u)
            graph.add_edge(latent, v)
        return graph

    def _require(self, names: Iterable[str]) -> None:
        for name in names:
            if name not in self._roles:
                raise DiagramError(f"Неизвестная вершина {name}")

    def _active_reach(
        self, sources: FrozenSet[str], conditioned: FrozenSet[str]
    ) -> Set[str]:
        """Вершины, достижимые из sources по активным путям при условии conditioned."""
        graph = self._latent_graph
        observed_ancestors: Set = set()
        frontier = list(conditioned)
        while frontier:
            node = frontier.pop()
            if node in observed_ancestors:
                continue
            observed_ancestors.add(node)
            frontier.extend(graph.predecessors(node))

        visited: Set = set()
        reached: Set = set()
        stack: List = [(source, _UP) for source in sources]
        while stack:
            node, direction = stack.pop()
            if (node, direction) in visited:
                continue
            visited.add((node, direction))
            if node not in conditioned:
                reached.add(node)
            if direction == _UP and node not in conditioned:
                stack.extend((p, _UP) for p in graph.predecessors(node))
                stack.extend((c, _DOWN) for c in graph.successors(node))
            elif direction == _DOWN:
                if node not in conditioned:
                    stack.extend((c, _DOWN) for c in graph.successors(node))
                if node in observed_ancestors:
                    stack.extend((p, _UP) for p in graph.predecessors(node))
        return {node for node in reached if isinstance(node, str)}

    def _with(
        self,
        roles: Mapping[str, NodeRole],
        directed: Iterable[Tuple[str, str]],
        bidirected: Iterable[Tuple[str, ...]],
    ) -> "CausalDiagram":
        return CausalDiagram(roles, directed, bidirected, self._inputs)

    def _fresh_name(self, base: str) -> str:
        if base not in self._roles:
            return base
        k = 2
        while f"{base}_{k}" in self._roles:
            k += 1
        return f"{base}_{k}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CausalDiagram):
            return NotImplemented
        return (
            self._roles == other._roles
            and self._directed == other._directed
            and self._bidirected == other._bidirected
            and self._inputs == other._inputs
        )

    def __hash__(self) -> int:
        return hash(self.fingerprint)

    def __repr__(self) -> str:
        return (
            f"CausalDiagram(nodes={len(self._roles)}, "
            f"directed={len(self._directed)}, bidirected={len(self._bidirected)})"
        )


def validate_diagram(d: CausalDiagram) -> ValidationReport:
    """Проверить структурные инварианты диаграммы.

    Проверяются висячие рёбра, циклы, роли вспомогательных вершин и
    ограничения пространства политик: действие не является потомком будущих
    действий, а его входы не являются потомками текущего и будущих действий.

    Аргументы:
        d (CausalDiagram): Диаграмма для проверки.

    Возвращает:
        ValidationReport: Нарушения и предупреждения.
    """
    roles = d.roles
    violations: List[str] = []
    warnings: List[str] = []

    for u, v in d.directed_edges:
        if u not in roles or v not in roles:
            violations.append(f"Висячее ребро {u}->{v}")
        if u == v:
            violations.append(f"Петля {u}->{v}")
    for pair in d.bidirected_edges:
        if len(pair) != 2:
            violations.append(f"Двунаправленное ребро у вершины {pair[0]} замкнуто")
            continue
        for name in pair:
            if name not in roles:
                violations.append(f"Висячее ребро {pair[0]}<->{pair[1]}")
            elif roles[name] in AUXILIARY_ROLES:
                violations.append(
                    f"Вспомогательная вершина {name} не может иметь двунаправленных рёбер"
                )
    if violations:
        return ValidationReport(tuple(violations))

    for name, role in sorted(roles.items()):
        if role in AUXILIARY_ROLES and d.parents(name):
            violations.append(f"Вспомогательная вершина {name} имеет родителей")
        if role == NodeRole.REWARD:
            endogenous = [
                c for c in d.children(name) if roles[c] not in AUXILIARY_ROLES
            ]
            if endogenous:
                warnings.append(f"Вознаграждение {name} имеет потомков {endogenous}")

    try:
        topological_order(d)
    except DiagramError as exc:
        violations.append(str(exc))

    inputs = d.action_inputs
    for name, role in sorted(roles.items()):
        if role == NodeRole.ACTION and name not in inputs:
            violations.append(f"Для действия {name} не заданы входные состояния")
    for action, states in inputs.items():
        if roles.get(action) != NodeRole.ACTION:
            violations.append(f"Входы заданы для вершины {action}, не являющейся действием")
            continue
        for state in states:
            if state not in roles:
                violations.append(f"Неизвестный вход {state} действия {action}")
            elif roles[state] in AUXILIARY_ROLES:
                violations.append(f"Вспомогательная вершина {state} не может быть входом")
    if violations:
        return ValidationReport(tuple(violations), tuple(warnings))

    violations.extend(_policy_space_violations(d))
    return ValidationReport(tuple(violations), tuple(warnings))


def _policy_space_violations(d: CausalDiagram) -> List[str]:
    inputs = d.action_inputs
    order = list(inputs)
    graph = nx.DiGraph()
    graph.add_nodes_from(d.nodes)
    graph.add_edges_from((u, v) for u, v in d.directed_edges if v not in inputs)
    graph.add_edges_from((s, a) for a, states in inputs.items() for s in states)

    def descendants(names: Sequence[str]) -> Set[str]:
        result: Set[str] = set(names)
        for name in names:
            result |= nx.descendants(graph, name)
        return result

    violations = []
    for idx, action in enumerate(order):
        future = order[idx + 1 :]
        if future and action in descendants(future):
            violations.append(f"Действие {action} является потомком будущих действий")
        current = descendants(order[idx:])
        for state in inputs[action]:
            if state in current:
                violations.append(
                    f"Вход {state} действия {action} является потомком "
                    f"действий {order[idx:]}"
                )
    return violations


def ancestors(d: CausalDiagram, s: Iterable[str]) -> FrozenSet[str]:
    """An(s) вместе с самими s."""
    return d.ancestors(s)


def descendants(d: CausalDiagram, s: Iterable[str]) -> FrozenSet[str]:
    """De(s) вместе с самими s."""
    return d.descendants(s)


def d_separated(d: CausalDiagram, q: SeparationQuery) -> bool:
    """Проверить d-разделимость достижимостью за O(n+m).

    Аргументы:
        d (CausalDiagram): Диаграмма.
        q (SeparationQuery): Попарно непересекающиеся множества X, Y, Z.

    Возвращает:
        bool: True, если каждый путь из X в Y заблокирован множеством Z.

    Исключения:
        DiagramError: Если вершина неизвестна, X или Y пусты либо множества
            пересекаются.
    """
    d._require(q.x | q.y | q.z)
    if not q.x or not q.y:
        raise DiagramError("Множества X и Y запроса должны быть непустыми")
    if q.x & q.y or q.x & q.z or q.y & q.z:
        raise DiagramError("Множества X, Y, Z запроса должны не пересекаться")
    return not (d._active_reach(q.x, q.z) & q.y)


def intervened_diagram(d: CausalDiagram) -> CausalDiagram:
    """Построить G_π: родители каждого действия X_i становятся ровно S_i.

    Исключения:
        DiagramError: Если диаграмма не проходит проверку.
    """
    report = validate_diagram(d)
    if not report.valid:
        raise DiagramError(f"Диаграмма некорректна: {'; '.join(report.violations)}")
    inputs = d.action_inputs
    directed = [(u, v) for u, v in d.directed_edges if v not in inputs]
    directed += [(s, a) for a, states in inputs.items() for s in states]
    bidirected = [
        pair for pair in d.bidirected_edges if not any(n in inputs for n in pair)
    ]
    return d._with(d.roles, directed, bidirected)


def augment_edit_indicators(
    d: CausalDiagram, targets: Iterable[str]
) -> Tuple[CausalDiagram, str]:
    """Добавить индикатор правок τ с рёбрами во все целевые вершины.

    Возвращает:
        Tuple[CausalDiagram, str]: Новая диаграмма и имя индикатора.

    Исключения:
        DiagramError: Если множество пусто или содержит действие либо
            вознаграждение.
    """
    targets = sorted(set(targets))
    if not targets:
        raise DiagramError("Множество правок пусто")
    d._require(targets)
    roles = d.roles
    for target in targets:
        if roles[target] != NodeRole.STATE:
            raise DiagramError(
                f"Правка вершины {target} с ролью {roles[target].value} запрещена"
            )
    tau = d._fresh_name("tau")
    roles[tau] = NodeRole.EDIT_INDICATOR
    directed = list(d.directed_edges) + [(tau, t) for t in targets]
    return d._with(roles, directed, d.bidirected_edges), tau


def augment_regime(d: CausalDiagram, action: str) -> Tuple[CausalDiagram, str]:
    """Добавить узел режима π_j с единственным ребром в действие."""
    if d.role(action) != NodeRole.ACTION:
        raise DiagramError(f"Вершина {action} не является действием")
    roles = d.roles
    regime = d._fresh_name(f"pi_{action}")
    roles[regime] = NodeRole.REGIME
    directed = list(d.directed_edges) + [(regime, action)]
    return d._with(roles, directed, d.bidirected_edges), regime


def topological_order(d: CausalDiagram) -> List[str]:
    """Топологический порядок с разрешением ничьих по имени.

    Исключения:
        DiagramError: Если ориентированная часть содержит цикл.
    """
    try:
        return list(nx.lexicographical_topological_sort(d._graph))
    except nx.NetworkXUnfeasible:
        raise DiagramError("Граф содержит цикл") from None
