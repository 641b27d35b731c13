import logging

from Causal_curriculum import (
    check_causally_aligned,
    curriculum_learning,
    expected_reward,
    find_causal_curriculum,
    find_max_edit,
    load_fixture,
    solve_optimal,
)
from Causal_curriculum.editability import solubility_witness
from Causal_curriculum.fixtures import example2_curriculum
from Causal_curriculum.generators import ShufflingGenerator


def main():
    """Демонстрирует анализ редактируемости и обучение по учебным планам."""
    logging.basicConfig(level=logging.WARNING)

    # Пример с цепочкой Sokoban: редактируемые состояния и согласованный план
    sokoban = load_fixture("example1")
    print(f"max_edit(все действия) = {find_max_edit(sokoban.diagram, sokoban.actions)}")
    print(f"max_edit(X3) = {find_max_edit(sokoban.diagram, ['X3'])}")
    curriculum = find_causal_curriculum(sokoban, ShufflingGenerator())
    policy, log = curriculum_learning(curriculum)
    print(f"Согласован: {check_causally_aligned(sokoban, curriculum).aligned}")
    print(f"Значения в целевой задаче: {[str(v) for v in log.target_values]}")
    print(f"Оптимум: {expected_reward(sokoban, solve_optimal(sokoban))}")

    # Пример с двухшаговой задачей: план [T1, T2] перезаписывает правило X1
    two_stage = load_fixture("example2")
    policy, log = curriculum_learning(example2_curriculum(two_stage))
    report = check_causally_aligned(two_stage, example2_curriculum(two_stage))
    print(f"Значения после T1 и T2: {[str(v) for v in log.target_values]}")
    print(f"Потеряны правила: {[list(s.lost) for s in report.steps]}")
    print(f"Свидетель неразрешимости: {solubility_witness(two_stage)}")


if __name__ == "__main__":
    main()
