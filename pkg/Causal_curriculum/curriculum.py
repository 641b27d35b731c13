import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import (
    Callable,
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Set,
    Tuple,
)

from tenacity import retry, retry_if_exception_type, stop_after_attempt

from Causal_curriculum.baseGenerator import GeneratorHook
from Causal_curriculum.config import Settings
from Causal_curriculum.editability import (
    EditabilityQuery,
    find_max_edit,
    is_edit,
    soluble_order,
)
from Causal_curriculum.exceptions import CoverageNotReachedError, TaskError
from Causal_curriculum.planner import (
    LearnerConfig,
    TabularLearner,
    rule_overlap,
    solve_optimal,
)
from Causal_curriculum.task_model import (
    FiniteTask,
    Policy,
    Row,
    SetConstant,
    SourceTask,
    apply_edits,
    expected_reward,
    reachable_values,
)

logger = logging.getLogger(__name__)

LEARNERS = ("exact", "tabular")

Trainer = Callable[[SourceTask, Policy, int], Policy]


@dataclass(frozen=True)
class CurriculumStage:
    """Исходная задача учебного плана.

    Атрибуты:
        source (SourceTask): Отредактированная задача.
        actions (Tuple[str, ...]): Объявленное множество действий X^(j).
        delta (Tuple[str, ...]): Допустимое множество правок Δ^(j).
    """

    source: SourceTask
    actions: Tuple[str, ...]
    delta: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Curriculum:
    """Упорядоченная последовательность исходных задач одной целевой задачи."""

    target: FiniteTask
    stages: Tuple[CurriculumStage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        for stage in self.stages:
            if stage.source.diagram != self.target.diagram:
                raise TaskError("Исходная задача построена для другой диаграммы")

    def __len__(self) -> int:
        return len(self.stages)

    def __iter__(self) -> Iterator[CurriculumStage]:
        return iter(self.stages)


@dataclass(frozen=True)
class RunLogEntry:
    """Запись журнала обучения; step является монотонным счётчиком."""

    step: int
    task: str
    source_value: Fraction
    target_value: Fraction
    policy: Policy
    action: Optional[str] = None
    round_index: Optional[int] = None

    def to_dict(self) -> dict:
        result = {
            "step": self.step,
            "task": self.task,
            "source_value": str(self.source_value),
            "target_value": str(self.target_value),
        }
        if self.action is not None:
            result["action"] = self.action
            result["round"] = self.round_index
        return result


@dataclass
class RunLog:
    """Журнал обучения по учебному плану."""

    entries: List[RunLogEntry] = field(default_factory=list)

    def record(
        self,
        source: SourceTask,
        target: FiniteTask,
        policy: Policy,
        action: Optional[str] = None,
        round_index: Optional[int] = None,
    ) -> RunLogEntry:
        entry = RunLogEntry(
            step=len(self.entries) + 1,
            task=source.model.name,
            source_value=expected_reward(source, policy),
            target_value=expected_reward(target, policy),
            policy=policy,
            action=action,
            round_index=round_index,
        )
        self.entries.append(entry)
        logger.info(
            "Шаг %d (%s): значение в исходной задаче %s, в целевой %s",
            entry.step,
            entry.task,
            entry.source_value,
            entry.target_value,
        )
        return entry

    @property
    def target_values(self) -> List[Fraction]:
        return [e.target_value for e in self.entries]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}


def _make_trainer(
    target: FiniteTask, learner: str, seed: int, cfg: Optional[LearnerConfig]
) -> Trainer:
    if learner not in LEARNERS:
        raise TaskError(f"Неизвестный режим обучения {learner}; доступны {list(LEARNERS)}")
    if learner == "exact":
        return lambda source, policy, step: solve_optimal(source, init=policy)
    tabular = TabularLearner(target)
    cfg = cfg or LearnerConfig(seed=seed)

    def train(source: SourceTask, policy: Policy, step: int) -> Policy:
        tabular.train(source, replace(cfg, seed=seed + step))
        return tabular.greedy(policy)

    return train


def curriculum_learning(
    c: Curriculum,
    learner: str = "exact",
    seed: int = 0,
    cfg: Optional[LearnerConfig] = None,
) -> Tuple[Policy, RunLog]:
    """Обучить политику последовательно во всех задачах учебного плана.

    Аргументы:
        c (Curriculum): Учебный план.
        learner (str): 'exact' (solve_optimal с тёплым стартом) или 'tabular'
            (Q-таблицы продолжают обучение между задачами).
        seed (int): Зерно табличного агента.
        cfg (Optional[LearnerConfig]): Параметры табличного агента.

    Возвращает:
        Tuple[Policy, RunLog]: Итоговая политика и журнал значений.
    """
    trainer = _make_trainer(c.target, learner, seed, cfg)
    policy = Policy.uniform(c.target)
    log = RunLog()
    for step, stage in enumerate(c.stages):
        policy = trainer(stage.source, policy, step)
        log.record(stage.source, c.target, policy)
    return policy, log


def find_causal_curriculum(
    t: FiniteTask, gen: GeneratorHook, seed: int = 0
) -> Curriculum:
    """Построить причинно согласованный учебный план.

    Для j = H..1 берётся X^(j) = {X_j, …, X_H} и Δ^(j) = find_max_edit
    относительно X^(j); правки исходной задачи строит генератор.

    Исключения:
        NotSolubleError: Если задача не разрешима.
    """
    soluble_order(t)
    actions = t.actions
    horizon = len(actions)
    stages = []
    for j in range(horizon, 0, -1):
        declared = tuple(actions[j - 1 :])
        delta = find_max_edit(t.diagram, declared)
        edits = gen(t, set(delta), horizon - j, seed) if delta else []
        source = apply_edits(t, edits)
        stages.append(CurriculumStage(source, declared, delta))
        logger.info("Задача %d: действия %s, Δ %s", j, list(declared), list(delta))
    return Curriculum(t, tuple(stages))


@dataclass(frozen=True)
class AlignmentStep:
    """Сравнение множеств инвариантных правил задач j и j + 1.

    Атрибуты:
        index (int): Номер j, начиная с 1.
        lost (Tuple[str, ...]): Действия, инвариантные после j, но не после j + 1.
        witnesses (Dict[str, Tuple[Row, ...]]): Строки, где правило разошлось.
    """

    index: int
    lost: Tuple[str, ...]
    witnesses: Dict[str, Tuple[Row, ...]]

    @property
    def verdict(self) -> str:
        return "shrinking" if self.lost else "expanding"

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "verdict": self.verdict,
            "lost": list(self.lost),
            "witnesses": {
                a: [[str(v) for v in row] for row in rows]
                for a, rows in self.witnesses.items()
            },
        }


@dataclass(frozen=True)
class AlignmentReport:
    """Отчёт о причинной согласованности учебного плана."""

    invariant: Tuple[Tuple[str, ...], ...]
    steps: Tuple[AlignmentStep, ...]

    @property
    def aligned(self) -> bool:
        return all(not step.lost for step in self.steps)

    def to_dict(self) -> dict:
        return {
            "aligned": self.aligned,
            "invariant": [list(s) for s in self.invariant],
            "steps": [s.to_dict() for s in self.steps],
        }


def check_causally_aligned(t: FiniteTask, c: Curriculum) -> AlignmentReport:
    """Проверить, что множества инвариантных оптимальных правил расширяются.

    Правило действия инвариантно, если совпадает с правилом π* на
    пересечении достижимых строк, либо если подстановка его строк в π* не
    меняет оптимального значения целевой задачи.
    """
    star = solve_optimal(t)
    optimum = expected_reward(t, star)
    invariant: List[Tuple[str, ...]] = []
    differing: List[Dict[str, Tuple[Row, ...]]] = []
    for stage in c.stages:
        source_optimal = solve_optimal(stage.source)
        overlap = rule_overlap(source_optimal, star, stage.source, t)
        kept = []
        for action, report in overlap.items():
            if report.invariant:
                kept.append(action)
                continue
            rows = report.agree + report.differ
            candidate = star.with_rows(
                action, {row: source_optimal.rule(action).choice(row) for row in rows}
            )
            if expected_reward(t, candidate) == optimum:
                kept.append(action)
        invariant.append(tuple(sorted(kept)))
        differing.append({a: o.differ for a, o in overlap.items()})

    steps = []
    for j in range(len(invariant) - 1):
        lost = tuple(sorted(set(invariant[j]) - set(invariant[j + 1])))
        witnesses = {a: differing[j + 1][a] for a in lost}
        steps.append(AlignmentStep(j + 1, lost, witnesses))
    report = AlignmentReport(tuple(invariant), tuple(steps))
    logger.info("Согласованность учебного плана %s: %s", t.name, report.aligned)
    return report


class CoverageLoop:
    """Цикл покрытия входов действий для обучения по учебному плану.

    Один раунд генерирует исходную задачу, обучает в ней политику и
    проверяет покрытие Ω(S_i; π*) ⊆ ⋃ Ω^(j)(S_i; π). Раунд повторяется, пока
    покрытие не достигнуто, но не более round_cap раз.

    Атрибуты:
        ROUND_CAP (int): Предел раундов по умолчанию.
    """

    ROUND_CAP = Settings.COVERAGE_ROUND_CAP

    def __init__(
        self,
        target: FiniteTask,
        gen: GeneratorHook,
        trainer: Trainer,
        seed: int = 0,
        round_cap: Optional[int] = None,
        log: Optional[RunLog] = None,
    ):
        self.target = target
        self.gen = gen
        self.trainer = trainer
        self.seed = seed
        self.log = log if log is not None else RunLog()
        self.star = solve_optimal(target)
        self.steps = 0
        self.run_round = retry(
            stop=stop_after_attempt(round_cap or self.ROUND_CAP),
            retry=retry_if_exception_type(CoverageNotReachedError),
            reraise=True,
        )(self._round)

    def cover(self, action: str, policy: Policy) -> Policy:
        """Обучать политику, пока входы действия не покрыты."""
        self.action = action
        self.inputs = self.target.inputs_of(action)
        self.delta: Set[str] = set(find_max_edit(self.target.diagram, [action]))
        self.needed = reachable_values(self.target, self.star, self.inputs)
        self.covered: Set[Row] = set()
        self.round_index = 0
        self.policy = policy
        self.run_round()
        logger.info(
            "Входы %s покрыты за %d раундов", action, self.round_index
        )
        return self.policy

    def _round(self) -> None:
        edits = self.gen(self.target, self.delta, self.round_index, self.seed)
        source = apply_edits(self.target, edits)
        self.policy = self.trainer(source, self.policy, self.steps)
        self.steps += 1
        self.covered |= reachable_values(source, self.policy, self.inputs)
        self.log.record(source, self.target, self.policy, self.action, self.round_index)
        self.round_index += 1
        missing = self.needed - self.covered
        if missing:
            logger.debug("Раунд %d: не покрыто %d строк", self.round_index, len(missing))
            raise CoverageNotReachedError(self.action, missing)


def causal_curriculum_learning(
    t: FiniteTask,
    gen: GeneratorHook,
    learner: str = "exact",
    seed: int = 0,
    cfg: Optional[LearnerConfig] = None,
    round_cap: Optional[int] = None,
) -> Tuple[Policy, RunLog]:
    """Обучение по причинному учебному плану с проверкой покрытия входов.

    Действия обрабатываются в возрастающем разрешимом порядке; для каждого
    строятся исходные задачи с Δ = find_max_edit относительно этого
    действия, пока входы, достижимые при π*, не будут покрыты.

    Исключения:
        NotSolubleError: Если задача не разрешима.
        CoverageNotReachedError: Если покрытие не достигнуто за round_cap раундов.
    """
    order = soluble_order(t)
    trainer = _make_trainer(t, learner, seed, cfg)
    loop = CoverageLoop(t, gen, trainer, seed, round_cap)
    policy = Policy.uniform(t)
    for action in order:
        policy = loop.cover(action, policy)
    return policy, loop.log


def misaligned_fraction(t: FiniteTask, candidates: Sequence[SourceTask]) -> Fraction:
    """Доля исходных задач, чьё Δ не редактируемо относительно всех действий.

    Пустое Δ считается согласованным.
    """
    if not candidates:
        return Fraction(0)
    misaligned = sum(
        1
        for source in candidates
        if source.delta
        and not is_edit(EditabilityQuery.of(t.diagram, source.delta, t.actions))
    )
    return Fraction(misaligned, len(candidates))


def singleton_candidates(t: FiniteTask, nodes: Iterable[str]) -> List[SourceTask]:
    """Исходные задачи с одной правкой V ← первое значение области."""
    return [apply_edits(t, [SetConstant(n, t.domains[n].values[0])]) for n in nodes]
