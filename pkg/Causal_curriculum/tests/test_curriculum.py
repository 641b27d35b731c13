import logging
from fractions import Fraction

import pytest

from Causal_curriculum.baseGenerator import GeneratorHook
from Causal_curriculum.curriculum import (
    Curriculum,
    CurriculumStage,
    causal_curriculum_learning,
    check_causally_aligned,
    curriculum_learning,
    find_causal_curriculum,
)
from Causal_curriculum.editability import is_soluble
from Causal_curriculum.exceptions import (
    CoverageNotReachedError,
    NotSolubleError,
    TaskError,
)
from Causal_curriculum.fixtures import example1_sokoban_chain, example2_curriculum
from Causal_curriculum.generators import (
    ColorFixingGenerator,
    FixedGenerator,
    IdentityGenerator,
    ShufflingGenerator,
    make_generator,
)
from Causal_curriculum.planner import LearnerConfig
from Causal_curriculum.task_model import (
    ReweightExogenous,
    SetConstant,
    apply_edits,
    expected_reward,
)


def test_two_stage_curriculum_overwrites_first_rule(two_stage, pi1):
    """После T1 политика равна π1, после T2 значение падает до 1/2."""
    policy, log = curriculum_learning(example2_curriculum(two_stage))
    assert log.target_values == [Fraction(11, 20), Fraction(1, 2)]
    assert [e.source_value for e in log.entries] == [Fraction(19, 20)] * 2
    assert log.entries[0].policy.choices("X1") == pi1.choices("X1")
    assert log.entries[0].policy.choices("X2") == pi1.choices("X2")
    assert policy.rule("X1").choice((Fraction(0),)) == 0
    assert policy.rule("X2").choice((Fraction(1),)) == 0

    data = log.to_dict()
    assert [e["step"] for e in data["entries"]] == [1, 2]
    assert data["entries"][1]["target_value"] == "1/2"
    assert data["entries"][0]["task"] == "example2_two_stage[H]"


def test_two_stage_curriculum_is_not_aligned(two_stage):
    """Правило X1, инвариантное после T1, теряется после T2."""
    report = check_causally_aligned(two_stage, example2_curriculum(two_stage))
    assert report.invariant == (("X1",), ("X2",))
    assert not report.aligned
    (step,) = report.steps
    assert step.lost == ("X1",)
    assert step.witnesses == {"X1": ((Fraction(0),),)}
    assert step.verdict == "shrinking"
    assert report.to_dict()["steps"][0]["witnesses"] == {"X1": [["0"]]}


def test_find_causal_curriculum_sokoban(sokoban):
    """Построенный план согласован и приводит к оптимальной политике."""
    curriculum = find_causal_curriculum(sokoban, ShufflingGenerator(), seed=3)
    assert [s.actions for s in curriculum] == [
        ("X3",),
        ("X2", "X3"),
        ("X1", "X2", "X3"),
    ]
    assert curriculum.stages[1].delta == ("B1", "B2", "C1", "L1", "L2")
    assert curriculum.stages[2].delta == ("B1", "L1")
    for stage in curriculum:
        assert stage.source.delta <= frozenset(stage.delta)

    assert check_causally_aligned(sokoban, curriculum).aligned
    policy, log = curriculum_learning(curriculum)
    assert len(log.entries) == 3
    assert expected_reward(sokoban, policy) == Fraction(659, 160)


def test_find_causal_curriculum_requires_solubility(two_stage):
    with pytest.raises(NotSolubleError):
        find_causal_curriculum(two_stage, ShufflingGenerator())


def test_causal_curriculum_learning_reaches_optimum(sokoban):
    """Цикл покрытия с перемешиванием находит оптимальную политику."""
    policy, log = causal_curriculum_learning(sokoban, ShufflingGenerator(), seed=1)
    assert expected_reward(sokoban, policy) == Fraction(659, 160)
    assert {e.action for e in log.entries} == {"X1", "X2", "X3"}
    assert log.entries[0].action == "X3"
    assert [e.step for e in log.entries] == list(range(1, len(log.entries) + 1))
    assert log.to_dict()["entries"][0]["round"] == 0


def test_causal_curriculum_learning_fixed_generator_stalls(sokoban):
    """Генератор без разнообразия не покрывает входы X3."""
    with pytest.raises(CoverageNotReachedError) as excinfo:
        causal_curriculum_learning(sokoban, FixedGenerator(), round_cap=2)
    assert excinfo.value.action == "X3"
    assert excinfo.value.missing


def test_causal_curriculum_learning_requires_solubility(two_stage):
    with pytest.raises(NotSolubleError):
        causal_curriculum_learning(two_stage, ShufflingGenerator())


def test_misaligned_color_curriculum(sokoban):
    """Сначала все ящики жёлтые, затем все синие: итоговая политика не толкает."""
    colors = ("C1", "C2", "C3")
    stages = tuple(
        CurriculumStage(
            apply_edits(sokoban, [SetConstant(c, value) for c in colors]),
            sokoban.actions,
            colors,
        )
        for value in (0, 1)
    )
    policy, log = curriculum_learning(Curriculum(sokoban, stages))
    assert log.target_values[-1] == Fraction(-3, 10)
    assert expected_reward(sokoban, policy) == Fraction(-3, 10)


def test_tabular_curriculum_learning(two_stage):
    cfg = LearnerConfig(episodes=2_000, seed=4)
    policy, log = curriculum_learning(example2_curriculum(two_stage), "tabular", cfg=cfg)
    assert policy.provenance == "learned"
    assert len(log.entries) == 2
    policy.check(two_stage)


def test_unknown_learner_and_foreign_stage(two_stage, sokoban):
    with pytest.raises(TaskError, match="Неизвестный режим обучения"):
        curriculum_learning(example2_curriculum(two_stage), "genetic")
    foreign = CurriculumStage(apply_edits(sokoban, []), sokoban.actions)
    with pytest.raises(TaskError, match="другой диаграммы"):
        Curriculum(two_stage, (foreign,))


def test_shuffling_generator_reweights_private_noise(sokoban):
    """L1 и B1 имеют собственный шум, поэтому он делается равномерным."""
    edits = ShufflingGenerator()(sokoban, {"L1", "B1"}, 0, 0)
    assert all(isinstance(e, ReweightExogenous) for e in edits)
    weights = {e.name: e.probabilities for e in edits}
    assert weights["U_B1"] == (Fraction(1, 3),) * 3
    assert weights["U_L1"] == (Fraction(1, 2),) * 2


def test_shuffling_generator_enumerates_constants(sokoban):
    """Шум цвета общий с наградой: цвета фиксируются и перебираются по раундам."""
    gen = ShufflingGenerator()
    combos = set()
    for round_index in range(4):
        edits = gen(sokoban, {"C1", "C2"}, round_index, 7)
        assert all(isinstance(e, SetConstant) for e in edits)
        combos.add(tuple(sorted((e.node, e.value) for e in edits)))
    assert len(combos) == 4
    assert gen(sokoban, {"C1", "C2"}, 2, 7) == gen(sokoban, {"C1", "C2"}, 2, 7)


def test_generator_registry_and_hooks(sokoban, caplog):
    assert isinstance(make_generator("fixed"), FixedGenerator)
    assert make_generator("identity")(sokoban, {"L1"}, 0, 0) == []
    with pytest.raises(TaskError, match="Неизвестный генератор"):
        make_generator("random")

    color = make_generator("color_fixing", nodes=["C1", "C9"], value=1)
    assert isinstance(color, ColorFixingGenerator)
    with caplog.at_level(logging.WARNING):
        edits = color(sokoban, {"C1", "L1"}, 0, 0)
    assert edits == [SetConstant("C1", 1)]
    assert "C9" in caplog.text


def test_generator_hook_rejects_edits_outside_delta(sokoban):
    class Leaky(GeneratorHook):
        name = "leaky"

        def generate(self, target, delta, round_index, seed):
            return [SetConstant("C1", 0)]

    with pytest.raises(TaskError, match="вне Δ"):
        Leaky()(sokoban, {"L1"}, 0, 0)
    assert isinstance(IdentityGenerator(), GeneratorHook)


def test_short_chain_curriculum_by_horizon():
    """Для горизонта 1 план состоит из одной задачи."""
    task = example1_sokoban_chain(1)
    curriculum = find_causal_curriculum(task, FixedGenerator())
    assert len(curriculum) == 1
    assert curriculum.stages[0].actions == ("X1",)


def test_found_curricula_are_aligned_on_random_tasks(make_random_task):
    """Планы для случайных разрешимых задач согласованы, действия вложены."""
    checked = 0
    for seed in range(300):
        if checked >= 50:
            break
        t = make_random_task(seed, confounded=True)
        if not is_soluble(t):
            continue
        curriculum = find_causal_curriculum(t, ShufflingGenerator(), seed)
        declared = [set(stage.actions) for stage in curriculum]
        assert all(a <= b for a, b in zip(declared, declared[1:]))
        assert declared[-1] == set(t.actions)
        report = check_causally_aligned(t, curriculum)
        assert report.aligned, (seed, report.to_dict())
        for actions, invariant in zip(declared, report.invariant):
            assert actions <= set(invariant), seed
        checked += 1
    assert checked >= 50
