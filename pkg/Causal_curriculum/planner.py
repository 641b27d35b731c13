import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from Causal_curriculum.config import Settings
from Causal_curriculum.editability import relevance_graph
from Causal_curriculum.exceptions import BudgetExceededError, TaskError
from Causal_curriculum.task_model import (
    DecisionRule,
    FiniteTask,
    Policy,
    Row,
    SourceTask,
    _model,
    _propagate,
    as_fraction,
    expected_reward,
    reachable_values,
    sample_episodes,
)

logger = logging.getLogger(__name__)

AnyTask = Union[FiniteTask, SourceTask]


def _uniform_rule(task: FiniteTask, action: str) -> DecisionRule:
    return Policy.uniform(task).rule(action)


def _deterministic_rule(
    task: FiniteTask, action: str, choices: Mapping[Row, Fraction]
) -> DecisionRule:
    rows = {row: {choices[row]: Fraction(1)} for row in task.input_rows(action)}
    return DecisionRule(action, task.inputs_of(action), rows)


def _row_statistics(
    task: FiniteTask, action: str, policy: Policy, budget: Optional[int]
) -> Tuple[Dict[Row, Dict[Fraction, Fraction]], Dict[Row, Dict[Fraction, Fraction]]]:
    """Накопленное вознаграждение и масса для каждой пары (s, x) при равномерном X."""
    probe = policy.replace(action, _uniform_rule(task, action))
    inputs = list(task.inputs_of(action))
    weights = task.reward_weights(task.downstream_rewards([action]))
    joint = _propagate(task, probe, inputs + [action], weights, budget)
    totals: Dict[Row, Dict[Fraction, Fraction]] = {}
    mass: Dict[Row, Dict[Fraction, Fraction]] = {}
    for (values, acc), prob in joint.items():
        row, x = values[:-1], values[-1]
        totals.setdefault(row, {}).setdefault(x, Fraction(0))
        mass.setdefault(row, {}).setdefault(x, Fraction(0))
        totals[row][x] += prob * acc
        mass[row][x] += prob
    return totals, mass


def action_values(
    t: AnyTask, action: str, policy: Policy, budget: Optional[int] = None
) -> Dict[Row, Dict[Fraction, Fraction]]:
    """E[R(Y ∩ De(X)) | s, x] для каждой достижимой строки s.

    Остальные действия следуют policy; строки, недостижимые при любом
    значении X, не возвращаются.
    """
    task = _model(t)
    totals, mass = _row_statistics(task, action, policy, budget)
    values = {}
    for row in sorted(totals):
        values[row] = {
            x: totals[row][x] / mass[row][x]
            for x in sorted(totals[row])
            if mass[row][x] > 0
        }
    return {row: v for row, v in values.items() if v}


def _argmax(values: Mapping[Fraction, Fraction]) -> Fraction:
    best_value: Optional[Fraction] = None
    best = None
    for x in sorted(values):
        if best_value is None or values[x] > best_value:
            best_value = values[x]
            best = x
    assert best is not None
    return best


def _fallback(
    task: FiniteTask, action: str, row: Row, init: Optional[Policy]
) -> Fraction:
    if init is not None:
        return init.rule(action).choice(row)
    return min(task.domains[action].values)


def _solve_single(
    task: FiniteTask,
    action: str,
    policy: Policy,
    init: Optional[Policy],
    budget: Optional[int],
) -> DecisionRule:
    values = action_values(task, action, policy, budget)
    choices = {}
    for row in task.input_rows(action):
        if row in values:
            choices[row] = _argmax(values[row])
        else:
            choices[row] = _fallback(task, action, row, init)
    logger.debug("Правило %s: %d достижимых строк", action, len(values))
    return _deterministic_rule(task, action, choices)


def _solve_component(
    task: FiniteTask,
    members: Sequence[str],
    policy: Policy,
    init: Optional[Policy],
    joint_cap: int,
    budget: Optional[int],
) -> Policy:
    slots = [(a, row) for a in members for row in task.input_rows(a)]
    count = 1
    for action, _ in slots:
        count *= len(task.domains[action])
        if count > joint_cap:
            raise BudgetExceededError(
                f"Число совместных правил действий {list(members)} больше {joint_cap}"
            )
    weights = task.reward_weights(task.downstream_rewards(members))
    best_value: Optional[Fraction] = None
    best_policy = policy
    domains = [sorted(task.domains[a].values) for a, _ in slots]
    for combination in itertools.product(*domains):
        candidate = policy
        for action in members:
            choices = {
                row: value
                for (a, row), value in zip(slots, combination)
                if a == action
            }
            candidate = candidate.replace(
                action, _deterministic_rule(task, action, choices)
            )
        joint = _propagate(task, candidate, (), weights, budget)
        value = sum((p * acc for (_, acc), p in joint.items()), Fraction(0))
        if best_value is None or value > best_value:
            best_value = value
            best_policy = candidate
    if init is not None:
        for action in members:
            probe = best_policy
            for other in members:
                if other != action:
                    probe = probe.replace(other, _uniform_rule(task, other))
            reached = reachable_values(task, probe, task.inputs_of(action), budget)
            keep = {
                row: init.rule(action).choice(row)
                for row in task.input_rows(action)
                if row not in reached
            }
            best_policy = best_policy.with_rows(action, keep)
    return best_policy


def solve_optimal(
    t: AnyTask,
    init: Optional[Policy] = None,
    joint_cap: Optional[int] = None,
    budget: Optional[int] = None,
) -> Policy:
    """Найти точную оптимальную политику обратной индукцией.

    Компоненты графа релевантности обрабатываются в порядке конденсации;
    ещё не решённые действия равномерны, поэтому каждая строка, достижимая
    при какой-либо политике, получает оптимальное значение. SCC из
    нескольких действий решается перебором совместных правил.

    Аргументы:
        t: Задача или исходная задача.
        init (Optional[Policy]): Политика, чьи правила сохраняются на
            недостижимых строках.
        joint_cap (Optional[int]): Предел числа совместных правил SCC.
        budget (Optional[int]): Предел числа состояний перебора.

    Возвращает:
        Policy: Детерминированная политика; при равенстве выбирается
        наименьшее значение действия.

    Исключения:
        BudgetExceededError: Если превышен один из пределов.
    """
    task = _model(t)
    joint_cap = Settings.JOINT_ACTION_CAP if joint_cap is None else joint_cap
    policy = Policy.uniform(task)
    for component in relevance_graph(task).components:
        logger.debug("Решается компонента %s задачи %s", list(component), task.name)
        if len(component) == 1:
            action = component[0]
            policy = policy.replace(
                action, _solve_single(task, action, policy, init, budget)
            )
        else:
            policy = _solve_component(task, component, policy, init, joint_cap, budget)
    return Policy(policy.rules, "exact")


@dataclass(frozen=True)
class LearnerConfig:
    """Параметры табличного обучения.

    Атрибуты:
        episodes (int): Число эпизодов; 0 оставляет начальную политику.
        learning_rate (Fraction): Шаг обучения в (0, 1].
        exploration_rate (Fraction): Вероятность случайного действия в (0, 1].
        seed (int): Зерно генератора.
    """

    episodes: int = Settings.EPISODES
    learning_rate: Fraction = Settings.LEARNING_RATE
    exploration_rate: Fraction = Settings.EXPLORATION_RATE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "learning_rate", as_fraction(self.learning_rate))
        object.__setattr__(self, "exploration_rate", as_fraction(self.exploration_rate))
        if self.episodes < 0:
            raise TaskError("Число эпизодов должно быть неотрицательным")
        for name in ("learning_rate", "exploration_rate"):
            value = getattr(self, name)
            if not (0 < value <= 1):
                raise TaskError(f"Параметр {name}={value} вне (0, 1]")


class TabularLearner:
    """Табличный TD-агент над строками (S_i, X_i).

    Таблицы Q хранятся между задачами, поэтому один агент проходит весь
    учебный план. Вознаграждение Y засчитывается последнему по времени
    действию, потомком которого оно является в G_π.

    Атрибуты:
        q (Dict[str, np.ndarray]): Таблицы формы (строки, значения).
        visits (Dict[str, np.ndarray]): Число посещений строк.
    """

    def __init__(self, task: AnyTask):
        task = _model(task)
        self.actions = task.actions
        self.rows: Dict[str, Dict[Row, int]] = {}
        self.values: Dict[str, Tuple[Fraction, ...]] = {}
        self.q: Dict[str, np.ndarray] = {}
        self.visits: Dict[str, np.ndarray] = {}
        for action in self.actions:
            rows = task.input_rows(action)
            self.rows[action] = {row: i for i, row in enumerate(rows)}
            self.values[action] = task.domains[action].values
            self.q[action] = np.zeros((len(rows), len(self.values[action])))
            self.visits[action] = np.zeros(len(rows), dtype=np.int64)
        self.credit: Dict[str, str] = {}
        for y in task.reward_nodes:
            owners = [a for a in self.actions if y in task.downstream_rewards([a])]
            if owners:
                self.credit[y] = owners[-1]

    def train(self, t: AnyTask, cfg: LearnerConfig) -> None:
        """Обучить агента в задаче cfg.episodes эпизодов."""
        task = _model(t)
        if cfg.episodes == 0:
            return
        rng = np.random.default_rng(cfg.seed)
        plan = task._plan
        weights = {y: float(w) for y, w in task.reward_weights().items()}
        alpha = float(cfg.learning_rate)
        epsilon = float(cfg.exploration_rate)
        n = cfg.episodes

        draws = {}
        for step in plan.steps:
            for var in step.introduce:
                p = np.array([float(x) for x in var.probabilities])
                draws[var.name] = rng.choice(len(p), size=n, p=p / p.sum())
        explore = rng.random((n, len(self.actions))) < epsilon
        random_pick = {
            a: rng.integers(len(self.values[a]), size=n) for a in self.actions
        }
        position = {a: i for i, a in enumerate(self.actions)}
        exogenous = {
            var.name: var.domain.values for step in plan.steps for var in step.introduce
        }

        for episode in range(n):
            env: Dict[str, Fraction] = {}
            trace: List[Tuple[str, int, int]] = []
            rewards = dict.fromkeys(self.actions, 0.0)
            for step in plan.steps:
                for var in step.introduce:
                    env[var.name] = exogenous[var.name][draws[var.name][episode]]
                row = tuple(env[p] for p in step.parents)
                if step.table is None:
                    action = step.node
                    r = self.rows[action][row]
                    if explore[episode, position[action]]:
                        a = int(random_pick[action][episode])
                    else:
                        a = int(np.argmax(self.q[action][r]))
                    env[action] = self.values[action][a]
                    trace.append((action, r, a))
                else:
                    env[step.node] = step.table[row]
                    owner = self.credit.get(step.node)
                    if owner is not None:
                        rewards[owner] += weights[step.node] * float(env[step.node])
            for k, (action, r, a) in enumerate(trace):
                target = rewards[action]
                if k + 1 < len(trace):
                    nxt, nr, _ = trace[k + 1]
                    target += float(self.q[nxt][nr].max())
                self.q[action][r, a] += alpha * (target - self.q[action][r, a])
                self.visits[action][r] += 1
            if episode and episode % 10_000 == 0:
                logger.debug("Задача %s: %d эпизодов", task.name, episode)

    def greedy(self, init: Policy) -> Policy:
        """Жадная политика; непосещённые строки сохраняют правило init."""
        rules = {}
        for action in self.actions:
            base = init.rule(action)
            rows = dict(base.rows)
            for row, r in self.rows[action].items():
                if self.visits[action][r] == 0:
                    continue
                q = self.q[action][r]
                best = np.flatnonzero(q == q.max())
                value = min(self.values[action][i] for i in best)
                rows[row] = {value: Fraction(1)}
            rules[action] = DecisionRule(action, base.inputs, rows)
        return Policy(rules, "learned")


def q_learn(
    t: AnyTask, cfg: LearnerConfig, init: Optional[Policy] = None
) -> Policy:
    """Обучить табличного агента в одной задаче и вернуть жадную политику."""
    task = _model(t)
    init = init if init is not None else Policy.uniform(task)
    if cfg.episodes == 0:
        return init
    learner = TabularLearner(task)
    learner.train(task, cfg)
    return learner.greedy(init)


@dataclass(frozen=True)
class ActionOverlap:
    """Сравнение правил одного действия на пересечении достижимых строк."""

    action: str
    agree: Tuple[Row, ...]
    differ: Tuple[Row, ...]

    @property
    def invariant(self) -> bool:
        return not self.differ

    def to_dict(self) -> dict:
        return {
            "agree": [[str(v) for v in row] for row in self.agree],
            "differ": [[str(v) for v in row] for row in self.differ],
            "invariant": self.invariant,
        }


def rule_overlap(
    a: Policy,
    b: Policy,
    a_task: AnyTask,
    b_task: Optional[AnyTask] = None,
    actions: Optional[Iterable[str]] = None,
    budget: Optional[int] = None,
) -> Dict[str, ActionOverlap]:
    """Сравнить правила a и b на Ω(S; a в a_task) ∩ Ω(S; b в b_task).

    Пустое пересечение даёт инвариантное правило.
    """
    b_task = a_task if b_task is None else b_task
    model = _model(a_task)
    report = {}
    for action in actions if actions is not None else model.actions:
        inputs = model.inputs_of(action)
        shared = reachable_values(a_task, a, inputs, budget) & reachable_values(
            b_task, b, inputs, budget
        )
        agree, differ = [], []
        for row in sorted(shared):
            same = a.rule(action).choice(row) == b.rule(action).choice(row)
            (agree if same else differ).append(row)
        report[action] = ActionOverlap(action, tuple(agree), tuple(differ))
    return report


def normalized_iqm(
    values: Sequence[Union[int, Fraction]],
    lower: Union[int, Fraction],
    upper: Union[int, Fraction],
) -> Fraction:
    """Нормированное межквартильное среднее.

    Отбрасывается ⌊n/4⌋ значений с каждого края; для n, кратного 4, это
    совпадает с усреднением средней половины.

    Исключения:
        TaskError: Если список пуст или lower >= upper.
    """
    lower, upper = as_fraction(lower), as_fraction(upper)
    if not values:
        raise TaskError("Список значений пуст")
    if lower >= upper:
        raise TaskError(f"Некорректные границы [{lower}, {upper}]")
    ordered = sorted(as_fraction(v) for v in values)
    k = len(ordered) // 4
    middle = ordered[k : len(ordered) - k]
    return sum(((x - lower) / (upper - lower) for x in middle), Fraction(0)) / len(
        middle
    )


@dataclass(frozen=True)
class EvalReport:
    """Оценка политики.

    Атрибуты:
        expected_reward (Fraction): Точное ожидаемое вознаграждение.
        overlap (Optional[Dict[str, ActionOverlap]]): Сравнение с эталоном.
        iqm (Optional[Fraction]): Нормированное IQM выборочных возвратов.
        episodes (int): Число выборочных эпизодов.
    """

    expected_reward: Fraction
    overlap: Optional[Dict[str, ActionOverlap]] = None
    iqm: Optional[Fraction] = None
    episodes: int = 0

    def to_dict(self) -> dict:
        result: dict = {
            "expected_reward": str(self.expected_reward),
            "expected_reward_float": float(self.expected_reward),
        }
        if self.overlap is not None:
            result["overlap"] = {a: o.to_dict() for a, o in self.overlap.items()}
        if self.iqm is not None:
            result["normalized_iqm"] = str(self.iqm)
            result["episodes"] = self.episodes
        return result


def evaluate_policy(
    t: AnyTask,
    policy: Policy,
    reference: Optional[Policy] = None,
    episodes: int = 0,
    seed: int = 0,
    lower: Optional[Union[int, Fraction]] = None,
    upper: Optional[Union[int, Fraction]] = None,
    budget: Optional[int] = None,
) -> EvalReport:
    """Собрать EvalReport: точное значение, сравнение с эталоном и IQM."""
    value = expected_reward(t, policy, budget)
    overlap = None
    if reference is not None:
        overlap = rule_overlap(policy, reference, t, budget=budget)
    iqm = None
    if episodes > 0:
        if lower is None or upper is None:
            raise TaskError("Для IQM нужны границы вознаграждения")
        returns = [e.reward for e in sample_episodes(t, policy, episodes, seed)]
        iqm = normalized_iqm(returns, lower, upper)
    return EvalReport(value, overlap, iqm, episodes)
