import itertools
import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from typing import (
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np

from Causal_curriculum.causal_diagram import (
    CausalDiagram,
    NodeRole,
    ValidationReport,
    descendants,
    intervened_diagram,
    topological_order,
    validate_diagram,
)
from Causal_curriculum.config import Settings
from Causal_curriculum.exceptions import (
    BudgetExceededError,
    TaskError,
    UnsupportedEventError,
)
from Causal_curriculum.expressions import Expression, parse_expression

logger = logging.getLogger(__name__)

Row = Tuple[Fraction, ...]


def as_fraction(value: Union[int, str, Fraction]) -> Fraction:
    """Привести значение к точной дроби; float не принимается."""
    if isinstance(value, float):
        raise TaskError(f"Ожидалось точное число, получено {value!r}")
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise TaskError(f"Некорректное рациональное число {value!r}") from None


@dataclass(frozen=True)
class FiniteDomain:
    """Конечная область значений переменной.

    Атрибуты:
        values (Tuple[Fraction, ...]): Упорядоченные различные значения.
        labels (Tuple[str, ...]): Необязательные имена значений.
    """

    values: Tuple[Fraction, ...]
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        values = tuple(as_fraction(v) for v in self.values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        if not values:
            raise TaskError("Область значений пуста")
        if len(set(values)) != len(values):
            raise TaskError(f"Повторяющиеся значения в области {list(map(str, values))}")
        if self.labels and len(self.labels) != len(values):
            raise TaskError("Число меток не совпадает с числом значений")

    @classmethod
    def of(cls, *values: Union[int, str, Fraction]) -> "FiniteDomain":
        return cls(tuple(as_fraction(v) for v in values))

    @classmethod
    def labelled(cls, **pairs: Union[int, str, Fraction]) -> "FiniteDomain":
        return cls(tuple(as_fraction(v) for v in pairs.values()), tuple(pairs))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[Fraction]:
        return iter(self.values)

    def __contains__(self, value: object) -> bool:
        return value in self.values

    def index(self, value: Fraction) -> int:
        return self.values.index(value)

    def label(self, value: Fraction) -> str:
        if self.labels:
            return self.labels[self.index(value)]
        return str(value)

    def value_of(self, token: str) -> Fraction:
        """Найти значение по метке или по записи числа."""
        if token in self.labels:
            return self.values[self.labels.index(token)]
        value = as_fraction(token)
        if value not in self.values:
            raise TaskError(f"Значение {token} вне области {list(map(str, self.values))}")
        return value


@dataclass(frozen=True)
class ExogenousVar:
    """Экзогенная переменная с точным распределением.

    Корректность распределения проверяет validate_task, чтобы документ с
    ошибкой можно было загрузить и получить отчёт.
    """

    name: str
    domain: FiniteDomain
    probabilities: Tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "probabilities", tuple(as_fraction(p) for p in self.probabilities)
        )

    def support(self) -> List[Tuple[Fraction, Fraction]]:
        return [(v, p) for v, p in zip(self.domain.values, self.probabilities) if p > 0]


@dataclass(frozen=True, eq=False)
class StructuralFunction:
    """Структурная функция V ← f(PA_V, U_V), заданная таблицей и/или выражением.

    Атрибуты:
        output (str): Имя вычисляемой вершины.
        parents (Tuple[str, ...]): Эндогенные и экзогенные аргументы.
        table (Optional[Mapping[Row, Fraction]]): Таблица значений.
        expression (Optional[Expression]): Дерево выражения.
    """

    output: str
    parents: Tuple[str, ...]
    table: Optional[Mapping[Row, Fraction]] = None
    expression: Optional[Expression] = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        if isinstance(self.expression, str):
            object.__setattr__(
                self,
                "expression",
                parse_expression(self.expression, f"functions.{self.output}.expression"),
            )
        if self.table is not None:
            table = {
                tuple(as_fraction(v) for v in key): as_fraction(value)
                for key, value in self.table.items()
            }
            object.__setattr__(self, "table", table)
        if self.table is None and self.expression is None:
            raise TaskError(f"Для функции {self.output} не задано ни таблицы, ни выражения")

    @classmethod
    def constant(cls, output: str, value: Union[int, str, Fraction]) -> "StructuralFunction":
        return cls(output, (), table={(): as_fraction(value)})

    def evaluate(self, env: Mapping[str, Fraction]) -> Fraction:
        if self.table is not None:
            key = tuple(env[p] for p in self.parents)
            try:
                return self.table[key]
            except KeyError:
                raise TaskError(
                    f"Таблица функции {self.output} не содержит строки {key}"
                ) from None
        assert self.expression is not None
        return self.expression.evaluate(env)

    def to_table(self, domains: Mapping[str, FiniteDomain]) -> Dict[Row, Fraction]:
        """Вычислить функцию на всём произведении областей родителей."""
        if self.table is not None:
            return dict(self.table)
        table = {}
        for key in itertools.product(*(domains[p].values for p in self.parents)):
            table[key] = self.evaluate(dict(zip(self.parents, key)))
        return table


@dataclass(frozen=True)
class DecisionRule:
    """Правило решения π_i(X_i | S_i): строка входов → распределение значений."""

    action: str
    inputs: Tuple[str, ...]
    rows: Mapping[Row, Mapping[Fraction, Fraction]]

    def distribution(self, row: Row) -> Mapping[Fraction, Fraction]:
        try:
            return self.rows[row]
        except KeyError:
            raise TaskError(
                f"Правило действия {self.action} не содержит строки {row}"
            ) from None

    def choice(self, row: Row) -> Fraction:
        """Значение с наибольшей вероятностью; при равенстве наименьшее."""
        dist = self.distribution(row)
        best = max(dist.values())
        return min(v for v, p in dist.items() if p == best)

    @property
    def is_deterministic(self) -> bool:
        return all(
            sum(1 for p in dist.values() if p > 0) == 1 for dist in self.rows.values()
        )


@dataclass(frozen=True)
class Policy:
    """Набор правил решения для всех действий пространства политик.

    Атрибуты:
        rules (Mapping[str, DecisionRule]): Правило для каждого действия.
        provenance (str): Происхождение: 'uniform', 'exact' или 'learned'.
    """

    rules: Mapping[str, DecisionRule]
    provenance: str = "exact"

    @classmethod
    def uniform(cls, task: "FiniteTask") -> "Policy":
        rules = {}
        for action in task.actions:
            domain = task.domains[action]
            share = Fraction(1, len(domain))
            rows = {row: {v: share for v in domain} for row in task.input_rows(action)}
            rules[action] = DecisionRule(action, task.inputs_of(action), rows)
        return cls(rules, "uniform")

    @classmethod
    def deterministic(
        cls,
        task: "FiniteTask",
        choices: Mapping[str, Union[int, Fraction, Mapping[Row, Fraction], Callable]],
        provenance: str = "exact",
    ) -> "Policy":
        """Построить детерминированную политику.

        Аргументы:
            task (FiniteTask): Задача, задающая входы и области.
            choices: Для каждого действия константа, таблица строка → значение
                или функция от значений входов.
            provenance (str): Метка происхождения.
        """
        rules = {}
        for action in task.actions:
            if action not in choices:
                raise TaskError(f"Не задано правило для действия {action}")
            spec = choices[action]
            rows: Dict[Row, Mapping[Fraction, Fraction]] = {}
            for row in task.input_rows(action):
                if callable(spec):
                    value = spec(*row)
                elif isinstance(spec, Mapping):
                    value = spec[row]
                else:
                    value = spec
                rows[row] = {as_fraction(value): Fraction(1)}
            rules[action] = DecisionRule(action, task.inputs_of(action), rows)
        return cls(rules, provenance)

    @property
    def actions(self) -> Tuple[str, ...]:
        return tuple(self.rules)

    def rule(self, action: str) -> DecisionRule:
        try:
            return self.rules[action]
        except KeyError:
            raise TaskError(f"Политика не содержит правила для {action}") from None

    def replace(self, action: str, rule: DecisionRule) -> "Policy":
        rules = dict(self.rules)
        rules[action] = rule
        return Policy(rules, self.provenance)

    def with_rows(self, action: str, choices: Mapping[Row, Fraction]) -> "Policy":
        """Заменить строки правила действия детерминированными значениями."""
        rule = self.rule(action)
        rows = dict(rule.rows)
        for row, value in choices.items():
            rows[row] = {value: Fraction(1)}
        return self.replace(action, DecisionRule(action, rule.inputs, rows))

    def choices(self, action: str) -> Dict[Row, Fraction]:
        rule = self.rule(action)
        return {row: rule.choice(row) for row in rule.rows}

    def check(self, task: "FiniteTask") -> None:
        """Проверить, что политика покрывает пространство политик задачи.

        Исключения:
            TaskError: Если нет правила, строки или строка не нормирована.
        """
        for action in task.actions:
            rule = self.rule(action)
            if tuple(rule.inputs) != task.inputs_of(action):
                raise TaskError(
                    f"Входы правила {action} {list(rule.inputs)} не совпадают "
                    f"с {list(task.inputs_of(action))}"
                )
            domain = task.domains[action]
            for row in task.input_rows(action):
                dist = rule.distribution(row)
                if any(v not in domain for v in dist):
                    raise TaskError(f"Правило {action} выводит значение вне области")
                if any(p < 0 for p in dist.values()) or sum(dist.values()) != 1:
                    raise TaskError(f"Строка {row} правила {action} не нормирована")


@dataclass(frozen=True, eq=False)
class FiniteTask:
    """Целевая задача ⟨M, Π, R⟩ над конечной SCM.

    Атрибуты:
        diagram (CausalDiagram): Диаграмма с входами действий.
        domains (Mapping[str, FiniteDomain]): Области эндогенных вершин.
        exogenous (Tuple[ExogenousVar, ...]): Экзогенные переменные.
        functions (Mapping[str, StructuralFunction]): Функции всех эндогенных
            вершин, кроме действий.
        reward_nodes (Tuple[str, ...]): Вознаграждения в порядке времени.
        discount (Fraction): Коэффициент γ ∈ (0, 1].
        horizon (Optional[int]): Число шагов, если задано.
        name (str): Имя задачи для отчётов.
    """

    diagram: CausalDiagram
    domains: Mapping[str, FiniteDomain]
    exogenous: Tuple[ExogenousVar, ...]
    functions: Mapping[str, StructuralFunction]
    reward_nodes: Tuple[str, ...]
    discount: Fraction = Fraction(1)
    horizon: Optional[int] = None
    name: str = "task"

    def __post_init__(self):
        object.__setattr__(self, "exogenous", tuple(self.exogenous))
        object.__setattr__(self, "reward_nodes", tuple(self.reward_nodes))
        object.__setattr__(self, "discount", as_fraction(self.discount))
        object.__setattr__(self, "domains", dict(self.domains))
        object.__setattr__(self, "functions", dict(self.functions))

    @property
    def actions(self) -> Tuple[str, ...]:
        return self.diagram.actions

    @property
    def policy_space(self) -> Dict[str, Tuple[str, ...]]:
        return self.diagram.action_inputs

    def inputs_of(self, action: str) -> Tuple[str, ...]:
        return self.diagram.inputs_of(action)

    def input_rows(self, action: str) -> List[Row]:
        """Все строки произведения областей входов действия в порядке областей."""
        return list(
            itertools.product(*(self.domains[s].values for s in self.inputs_of(action)))
        )

    def exogenous_var(self, name: str) -> ExogenousVar:
        for var in self.exogenous:
            if var.name == name:
                return var
        raise TaskError(f"Неизвестная экзогенная переменная {name}")

    @property
    def all_domains(self) -> Dict[str, FiniteDomain]:
        result = dict(self.domains)
        for var in self.exogenous:
            result[var.name] = var.domain
        return result

    def reward_weights(
        self, rewards: Optional[Iterable[str]] = None
    ) -> Dict[str, Fraction]:
        """Веса γ^(k) вознаграждений; k считается от нуля в порядке времени."""
        weights = {
            y: self.discount**k for k, y in enumerate(self.reward_nodes)
        }
        if rewards is None:
            return weights
        return {y: weights[y] for y in rewards}

    @cached_property
    def intervened(self) -> CausalDiagram:
        return intervened_diagram(self.diagram)

    def downstream_rewards(self, actions: Iterable[str]) -> Tuple[str, ...]:
        """Y ∩ De(actions) в G_π в порядке времени."""
        reached = descendants(self.intervened, actions)
        return tuple(y for y in self.reward_nodes if y in reached)

    @cached_property
    def _plan(self) -> "_Plan":
        return _Plan.compile(self)


@dataclass(frozen=True)
class _Step:
    node: str
    parents: Tuple[str, ...]
    table: Optional[Dict[Row, Fraction]]
    introduce: Tuple[ExogenousVar, ...]


@dataclass(frozen=True)
class _Plan:
    """Скомпилированный порядок вычисления SCM с таблицами функций."""

    steps: Tuple[_Step, ...]
    uses: Dict[str, int]

    @classmethod
    def compile(cls, task: FiniteTask) -> "_Plan":
        roles = task.diagram.roles
        order = [
            n
            for n in topological_order(task.intervened)
            if roles[n] in (NodeRole.STATE, NodeRole.ACTION, NodeRole.REWARD)
        ]
        all_domains = task.all_domains
        exogenous = {var.name: var for var in task.exogenous}
        introduced: Set[str] = set()
        steps = []
        last_use: Dict[str, int] = {}
        for index, node in enumerate(order):
            if roles[node] == NodeRole.ACTION:
                parents = task.inputs_of(node)
                table = None
            else:
                if node not in task.functions:
                    raise TaskError(f"Для вершины {node} не задана структурная функция")
                function = task.functions[node]
                parents = function.parents
                table = function.to_table(all_domains)
            fresh = []
            for p in parents:
                if p in exogenous and p not in introduced:
                    introduced.add(p)
                    fresh.append(exogenous[p])
                last_use[p] = index
            steps.append(_Step(node, tuple(parents), table, tuple(fresh)))
        return cls(tuple(steps), last_use)


def _propagate(
    task: FiniteTask,
    policy: Policy,
    keep: Sequence[str],
    rewards: Mapping[str, Fraction],
    budget: Optional[int] = None,
) -> Dict[Tuple[Row, Fraction], Fraction]:
    """Точно распространить распределение по SCM под do(π).

    Состояние хранит только живые переменные и накопленное взвешенное
    вознаграждение; переменные после последнего использования
    маргинализуются.

    Возвращает:
        Dict[Tuple[Row, Fraction], Fraction]: (значения keep, сумма
        вознаграждений) → вероятность.

    Исключения:
        BudgetExceededError: Если число порождённых состояний превышает бюджет.
    """
    budget = Settings.enumeration_budget() if budget is None else budget
    plan = task._plan
    keep_set = set(keep)
    live: List[str] = []
    states: Dict[Tuple[Row, Fraction], Fraction] = {((), Fraction(0)): Fraction(1)}
    produced = 0

    def charge(count: int) -> None:
        nonlocal produced
        produced += count
        if produced > budget:
            raise BudgetExceededError(
                f"Перебор задачи {task.name} превысил бюджет {budget} состояний"
            )

    for index, step in enumerate(plan.steps):
        for var in step.introduce:
            support = var.support()
            expanded: Dict[Tuple[Row, Fraction], Fraction] = {}
            for (values, acc), prob in states.items():
                for value, p in support:
                    expanded[(values + (value,), acc)] = prob * p
            charge(len(expanded))
            states = expanded
            live.append(var.name)

        position = {name: i for i, name in enumerate(live)}
        slots = [position[p] for p in step.parents]
        weight = rewards.get(step.node)
        advanced: Dict[Tuple[Row, Fraction], Fraction] = {}
        if step.table is None:
            rule = policy.rule(step.node)
            for (values, acc), prob in states.items():
                row = tuple(values[i] for i in slots)
                for value, p in rule.distribution(row).items():
                    if p > 0:
                        key = (values + (value,), acc)
                        advanced[key] = advanced.get(key, 0) + prob * p
        else:
            for (values, acc), prob in states.items():
                value = step.table[tuple(values[i] for i in slots)]
                if weight is not None:
                    key = (values + (value,), acc + weight * value)
                else:
                    key = (values + (value,), acc)
                advanced[key] = advanced.get(key, 0) + prob
        charge(len(advanced))
        live.append(step.node)

        alive = [
            i
            for i, name in enumerate(live)
            if name in keep_set or plan.uses.get(name, -1) > index
        ]
        if len(alive) < len(live):
            merged: Dict[Tuple[Row, Fraction], Fraction] = {}
            for (values, acc), prob in advanced.items():
                key = (tuple(values[i] for i in alive), acc)
                merged[key] = merged.get(key, 0) + prob
            live = [live[i] for i in alive]
            advanced = merged
        states = advanced

    position = {name: i for i, name in enumerate(live)}
    result: Dict[Tuple[Row, Fraction], Fraction] = {}
    for (values, acc), prob in states.items():
        key = (tuple(values[position[name]] for name in keep), acc)
        result[key] = result.get(key, 0) + prob
    return result


def _model(t: Union[FiniteTask, "SourceTask"]) -> FiniteTask:
    return t.model if isinstance(t, SourceTask) else t


def _require_endogenous(task: FiniteTask, names: Iterable[str]) -> None:
    for name in names:
        if name not in task.domains:
            raise TaskError(f"Неизвестная эндогенная вершина {name}")


def interventional_distribution(
    t: Union[FiniteTask, "SourceTask"],
    policy: Policy,
    query: Sequence[str],
    given: Optional[Mapping[str, Union[int, Fraction]]] = None,
    budget: Optional[int] = None,
) -> Dict[Row, Fraction]:
    """Точное распределение P(query | given; do(π)).

    Аргументы:
        t: Задача или исходная задача.
        policy (Policy): Политика вмешательства.
        query (Sequence[str]): Переменные запроса в нужном порядке.
        given (Optional[Mapping]): Частичное присваивание для обусловливания.
        budget (Optional[int]): Предел числа состояний перебора.

    Возвращает:
        Dict[Row, Fraction]: Строки значений запроса с положительной
        вероятностью; сумма равна 1.

    Исключения:
        UnsupportedEventError: Если условие имеет нулевую вероятность.
    """
    task = _model(t)
    query = list(query)
    given = {k: as_fraction(v) for k, v in (given or {}).items()}
    _require_endogenous(task, query + list(given))
    keep = query + [g for g in given if g not in query]
    joint = _propagate(task, policy, keep, {}, budget)
    table: Dict[Row, Fraction] = {}
    for (values, _), prob in joint.items():
        assignment = dict(zip(keep, values))
        if all(assignment[k] == v for k, v in given.items()):
            row = values[: len(query)]
            table[row] = table.get(row, 0) + prob
    total = sum(table.values(), Fraction(0))
    if total == 0:
        raise UnsupportedEventError(
            f"Условие {{{', '.join(f'{k}={v}' for k, v in given.items())}}} "
            f"имеет нулевую вероятность"
        )
    return {row: p / total for row, p in sorted(table.items()) if p > 0}


def expected_reward(
    t: Union[FiniteTask, "SourceTask"], policy: Policy, budget: Optional[int] = None
) -> Fraction:
    """E[Σ γ^(i−1) Y_i; do(π)] точно."""
    task = _model(t)
    joint = _propagate(task, policy, (), task.reward_weights(), budget)
    return sum((prob * acc for (_, acc), prob in joint.items()), Fraction(0))


def reachable_values(
    t: Union[FiniteTask, "SourceTask"],
    policy: Policy,
    s: Sequence[str],
    budget: Optional[int] = None,
) -> FrozenSet[Row]:
    """Носитель Ω(S; π) = {s : P(s; π) > 0}."""
    task = _model(t)
    s = list(s)
    _require_endogenous(task, s)
    joint = _propagate(task, policy, s, {}, budget)
    return frozenset(values for (values, _), prob in joint.items() if prob > 0)


def conditional_reward_distribution(
    t: Union[FiniteTask, "SourceTask"],
    policy: Policy,
    action: str,
    budget: Optional[int] = None,
) -> Dict[Tuple[Row, Fraction], Dict[Row, Fraction]]:
    """P(Y ∩ De(X) | S_X, X; π) для каждой достижимой строки (s, x)."""
    task = _model(t)
    inputs = list(task.inputs_of(action))
    rewards = list(task.downstream_rewards([action]))
    keep = inputs + [action] + rewards
    joint = _propagate(task, policy, keep, {}, budget)
    grouped: Dict[Tuple[Row, Fraction], Dict[Row, Fraction]] = {}
    for (values, _), prob in joint.items():
        if prob == 0:
            continue
        row = values[: len(inputs)]
        x = values[len(inputs)]
        ys = values[len(inputs) + 1 :]
        bucket = grouped.setdefault((row, x), {})
        bucket[ys] = bucket.get(ys, 0) + prob
    result = {}
    for key in sorted(grouped):
        bucket = grouped[key]
        total = sum(bucket.values(), Fraction(0))
        result[key] = {ys: p / total for ys, p in sorted(bucket.items())}
    return result


@dataclass(frozen=True)
class Episode:
    """Траектория: значения всех эндогенных вершин и суммарное вознаграждение."""

    assignment: Dict[str, Fraction]
    reward: Fraction


def _sample_one(task: FiniteTask, policy: Policy, rng: np.random.Generator) -> Episode:
    plan = task._plan
    env: Dict[str, Fraction] = {}
    weights = task.reward_weights()
    total = Fraction(0)
    for step in plan.steps:
        for var in step.introduce:
            p = np.array([float(x) for x in var.probabilities])
            env[var.name] = var.domain.values[int(rng.choice(len(p), p=p / p.sum()))]
        row = tuple(env[p] for p in step.parents)
        if step.table is None:
            dist = sorted(policy.rule(step.node).distribution(row).items())
            p = np.array([float(x) for _, x in dist])
            env[step.node] = dist[int(rng.choice(len(dist), p=p / p.sum()))][0]
        else:
            env[step.node] = step.table[row]
            if step.node in weights:
                total += weights[step.node] * env[step.node]
    endogenous = {k: v for k, v in env.items() if k in task.domains}
    return Episode(endogenous, total)


def sample_episodes(
    t: Union[FiniteTask, "SourceTask"],
    policy: Policy,
    count: int,
    seed: Union[int, np.random.Generator] = 0,
) -> Iterator[Episode]:
    """Поток траекторий из одного генератора numpy."""
    task = _model(t)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(count):
        yield _sample_one(task, policy, rng)


def sample_episode(
    t: Union[FiniteTask, "SourceTask"],
    policy: Policy,
    seed: Union[int, np.random.Generator] = 0,
) -> Episode:
    return next(sample_episodes(t, policy, 1, seed))


@dataclass(frozen=True)
class SetConstant:
    """Правка V ← const; родители V в SCM отбрасываются, диаграмма не меняется."""

    node: str
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", as_fraction(self.value))

    def targets(self, task: FiniteTask) -> FrozenSet[str]:
        return frozenset({self.node})

    def apply(self, task: FiniteTask) -> FiniteTask:
        _require_editable(task, self.node)
        if self.value not in task.domains[self.node]:
            raise TaskError(f"Значение {self.value} вне области вершины {self.node}")
        functions = dict(task.functions)
        functions[self.node] = StructuralFunction.constant(self.node, self.value)
        return replace(task, functions=functions)


@dataclass(frozen=True)
class ReplaceFunction:
    """Правка f_V ← f'_V с родителями из прежнего множества родителей."""

    node: str
    function: StructuralFunction

    def targets(self, task: FiniteTask) -> FrozenSet[str]:
        return frozenset({self.node})

    def apply(self, task: FiniteTask) -> FiniteTask:
        _require_editable(task, self.node)
        if self.function.output != self.node:
            raise TaskError(
                f"Функция вычисляет {self.function.output}, а правка задана для {self.node}"
            )
        allowed = set(task.diagram.parents(self.node)) | set(
            task.functions[self.node].parents
        )
        extra = sorted(set(self.function.parents) - allowed)
        if extra:
            raise TaskError(f"Правка {self.node} добавляет родителей {extra}")
        domain = task.domains[self.node]
        for value in self.function.to_table(task.all_domains).values():
            if value not in domain:
                raise TaskError(f"Правка {self.node} выводит значение {value} вне области")
        functions = dict(task.functions)
        functions[self.node] = self.function
        return replace(task, functions=functions)


@dataclass(frozen=True)
class ReweightExogenous:
    """Правка P(U) ← P'(U); цели правки: все эндогенные потомки U."""

    name: str
    probabilities: Tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "probabilities", tuple(as_fraction(p) for p in self.probabilities)
        )

    def targets(self, task: FiniteTask) -> FrozenSet[str]:
        task.exogenous_var(self.name)
        return frozenset(
            node for node, f in task.functions.items() if self.name in f.parents
        )

    def apply(self, task: FiniteTask) -> FiniteTask:
        var = task.exogenous_var(self.name)
        for node in sorted(self.targets(task)):
            _require_editable(task, node)
        if len(self.probabilities) != len(var.domain):
            raise TaskError(f"Число вероятностей не совпадает с областью {self.name}")
        if any(p < 0 for p in self.probabilities) or sum(self.probabilities) != 1:
            raise TaskError(f"Новое распределение {self.name} не нормировано")
        exogenous = tuple(
            ExogenousVar(v.name, v.domain, self.probabilities) if v.name == self.name else v
            for v in task.exogenous
        )
        return replace(task, exogenous=exogenous)


Edit = Union[SetConstant, ReplaceFunction, ReweightExogenous]


def _require_editable(task: FiniteTask, node: str) -> None:
    if node not in task.domains:
        raise TaskError(f"Неизвестная вершина правки {node}")
    role = task.diagram.role(node)
    if role != NodeRole.STATE:
        raise TaskError(f"Правка вершины {node} с ролью {role.value} запрещена")


@dataclass(frozen=True, eq=False)
class SourceTask:
    """Исходная задача T^(j) = ⟨M^(j), Π, R, Δ^(j)⟩.

    Атрибуты:
        base (FiniteTask): Целевая задача.
        edits (Tuple[Edit, ...]): Применённые правки.
        delta (FrozenSet[str]): Цели правок.
        model (FiniteTask): Отредактированная SCM с той же диаграммой.
    """

    base: FiniteTask
    edits: Tuple[Edit, ...]
    delta: FrozenSet[str]
    model: FiniteTask

    @property
    def diagram(self) -> CausalDiagram:
        return self.base.diagram

    @property
    def actions(self) -> Tuple[str, ...]:
        return self.base.actions


def apply_edits(t: FiniteTask, edits: Iterable[Edit]) -> SourceTask:
    """Применить правки к целевой задаче.

    Исключения:
        TaskError: Если правка затрагивает действие или вознаграждение либо
            нарушает область значений.
    """
    edits = tuple(edits)
    model = t
    delta: Set[str] = set()
    for edit in edits:
        delta |= edit.targets(t)
        model = edit.apply(model)
    model = replace(model, name=f"{t.name}[{','.join(sorted(delta))}]" if delta else t.name)
    logger.debug("Правки %s применены к %s", sorted(delta), t.name)
    return SourceTask(t, edits, frozenset(delta), model)


def validate_task(t: FiniteTask) -> ValidationReport:
    """Проверить согласованность задачи.

    Проверяются диаграмма, области, функции и их родители, таблицы,
    распределения экзогенных переменных, соответствие двунаправленных рёбер
    общим экзогенным родителям, вознаграждения и коэффициент γ.
    """
    report = validate_diagram(t.diagram)
    violations: List[str] = []
    roles = t.diagram.roles
    endogenous = sorted(
        n
        for n, r in roles.items()
        if r in (NodeRole.STATE, NodeRole.ACTION, NodeRole.REWARD)
    )
    exogenous_names = [v.name for v in t.exogenous]

    for name in endogenous:
        if name not in t.domains:
            violations.append(f"Для вершины {name} не задана область значений")
    for name in sorted(set(t.domains) - set(endogenous)):
        violations.append(f"Область задана для неизвестной вершины {name}")
    if len(set(exogenous_names)) != len(exogenous_names):
        violations.append("Повторяющиеся имена экзогенных переменных")
    for name in sorted(set(exogenous_names) & set(roles)):
        violations.append(f"Имя {name} занято и эндогенной, и экзогенной переменной")

    for var in t.exogenous:
        if len(var.probabilities) != len(var.domain):
            violations.append(f"Число вероятностей {var.name} не совпадает с областью")
        if any(p < 0 for p in var.probabilities):
            violations.append(f"Отрицательная вероятность у {var.name}")
        if sum(var.probabilities) != 1:
            violations.append(
                f"Вероятности {var.name} дают в сумме {sum(var.probabilities)}, а не 1"
            )

    domains = t.all_domains
    for name in endogenous:
        role = roles[name]
        if role == NodeRole.ACTION:
            if name in t.functions:
                violations.append(f"Для действия {name} задана структурная функция")
            continue
        function = t.functions.get(name)
        if function is None:
            violations.append(f"Для вершины {name} не задана структурная функция")
            continue
        unknown = [p for p in function.parents if p not in domains]
        if unknown:
            violations.append(f"Неизвестные родители {unknown} функции {name}")
            continue
        inner = {p for p in function.parents if p in roles}
        graph_parents = {p for p in t.diagram.parents(name) if p in roles}
        graph_parents -= {
            p for p in graph_parents if roles[p] in (NodeRole.EDIT_INDICATOR, NodeRole.REGIME)
        }
        if inner != graph_parents:
            violations.append(
                f"Родители функции {name} {sorted(inner)} не совпадают с "
                f"рёбрами диаграммы {sorted(graph_parents)}"
            )
        if name in t.domains and not unknown:
            violations.extend(_function_violations(function, domains, t.domains[name]))
    for name in sorted(set(t.functions) - set(endogenous)):
        violations.append(f"Функция задана для неизвестной вершины {name}")

    children: Dict[str, Set[str]] = {}
    for node, function in t.functions.items():
        for p in function.parents:
            if p in exogenous_names:
                children.setdefault(p, set()).add(node)
    shared = set()
    for nodes in children.values():
        for u, v in itertools.combinations(sorted(nodes), 2):
            shared.add((u, v))
    declared = {
        tuple(pair)
        for pair in t.diagram.bidirected_edges
        if not any(roles.get(n) == NodeRole.ACTION for n in pair)
    }
    for u, v in sorted(shared - declared):
        violations.append(f"{u} и {v} имеют общий экзогенный родитель без ребра {u}<->{v}")
    for u, v in sorted(declared - shared):
        violations.append(f"Ребро {u}<->{v} не подкреплено общим экзогенным родителем")

    rewards = tuple(n for n in endogenous if roles[n] == NodeRole.REWARD)
    if sorted(t.reward_nodes) != sorted(rewards) or len(set(t.reward_nodes)) != len(
        t.reward_nodes
    ):
        violations.append(
            f"Список вознаграждений {list(t.reward_nodes)} не совпадает "
            f"с вершинами роли reward {list(rewards)}"
        )
    if not (0 < t.discount <= 1):
        violations.append(f"Коэффициент γ={t.discount} вне (0, 1]")
    if t.horizon is not None and t.horizon < 1:
        violations.append(f"Горизонт {t.horizon} должен быть положительным")

    return report.merged(ValidationReport(tuple(violations)))


def _function_violations(
    function: StructuralFunction,
    domains: Mapping[str, FiniteDomain],
    output: FiniteDomain,
) -> List[str]:
    violations = []
    keys = list(itertools.product(*(domains[p].values for p in function.parents)))
    if function.table is not None:
        missing = [k for k in keys if k not in function.table]
        if missing:
            violations.append(
                f"Таблица функции {function.output} не покрывает {len(missing)} строк"
            )
        if any(v not in output for v in function.table.values()):
            violations.append(f"Таблица функции {function.output} выводит значение вне области")
    if function.expression is not None:
        free = sorted(function.expression.variables() - set(function.parents))
        if free:
            violations.append(
                f"Выражение функции {function.output} использует не-родителей {free}"
            )
            return violations
        for key in keys:
            env = dict(zip(function.parents, key))
            value = function.expression.evaluate(env)
            if value not in output:
                violations.append(
                    f"Выражение функции {function.output} даёт {value} вне области"
                )
                break
            if function.table is not None and function.table.get(key, value) != value:
                violations.append(
                    f"Таблица и выражение функции {function.output} расходятся на {key}"
                )
                break
    return violations
