from fractions import Fraction

import pytest

from Causal_curriculum.exceptions import BudgetExceededError, TaskError
from Causal_curriculum.fixtures import (
    ALIASES,
    FIXTURES,
    example2_curriculum,
    load_fixture,
    mini_button_maze,
    mini_colored_sokoban,
)
from Causal_curriculum.task_model import (
    Policy,
    expected_reward,
    interventional_distribution,
    validate_task,
)

PUSH, SOUTH = 4, 1


@pytest.mark.parametrize("fixture_id", sorted(FIXTURES))
def test_fixtures_are_valid(fixture_id):
    assert validate_task(load_fixture(fixture_id)).valid


def test_load_fixture_aliases_and_params():
    assert load_fixture("example1").name == "example1_sokoban_chain"
    assert load_fixture("example2").actions == ("X1", "X2")
    assert set(ALIASES.values()) <= set(FIXTURES)
    grid = load_fixture("mini_colored_sokoban:3:2")
    assert grid.name == "mini_colored_sokoban_3x3_h2"
    assert grid.actions == ("X1", "X2")


def test_load_fixture_errors():
    with pytest.raises(TaskError, match="Неизвестная задача"):
        load_fixture("bogus")
    with pytest.raises(TaskError, match="целыми"):
        load_fixture("mini_button_maze:x")
    with pytest.raises(TaskError, match="Неверное число"):
        load_fixture("example2_two_stage:3")


def test_grid_limits():
    with pytest.raises(BudgetExceededError):
        load_fixture("mini_colored_sokoban:7")
    with pytest.raises(BudgetExceededError):
        mini_button_maze(3, 13)
    with pytest.raises(BudgetExceededError):
        mini_colored_sokoban(1, 2)


def test_colored_sokoban_never_push():
    """Без толкания каждый шаг стоит −1/10."""
    task = mini_colored_sokoban(4, 6)
    still = Policy.deterministic(task, dict.fromkeys(task.actions, 0))
    assert expected_reward(task, still) == Fraction(-3, 5)


def test_colored_sokoban_push_towards_goal():
    """Агент слева от ящика толкает его вправо, к цели в углу."""
    task = mini_colored_sokoban(3, 2)
    push = Policy.deterministic(task, {"X1": PUSH, "X2": PUSH})
    assert interventional_distribution(task, push, ["L2", "B2"], given={"L1": 3}) == {
        (Fraction(4), Fraction(5)): 1
    }
    assert interventional_distribution(task, push, ["Y1", "Y2"], given={"L1": 3}) == {
        (Fraction(-1, 10), Fraction(10)): Fraction(1, 4),
        (Fraction(-1, 10), Fraction(-10)): Fraction(3, 4),
    }


def test_button_maze_switches_color_source():
    """После нажатия кнопки цвет повторяет общий шум U_C."""
    maze = mini_button_maze(2, 2)
    push = Policy.deterministic(maze, {"X1": PUSH, "X2": PUSH})
    assert interventional_distribution(maze, push, ["B2"], given={"L1": 0}) == {(Fraction(1),): 1}
    assert interventional_distribution(maze, push, ["C2"], given={"L1": 0}) == {
        (Fraction(0),): Fraction(4, 5),
        (Fraction(1),): Fraction(1, 5),
    }
    # вне клетки кнопки нажатие ничего не меняет, кроме штрафа за стояние
    assert interventional_distribution(maze, push, ["B2", "Y1"], given={"L1": 1}) == {
        (Fraction(0), Fraction(-1, 10)): 1
    }


def test_button_maze_goal_reward_sign():
    maze = mini_button_maze(2, 2)
    south = Policy.deterministic(maze, {"X1": SOUTH, "X2": SOUTH})
    assert interventional_distribution(maze, south, ["Y1"], given={"L1": 1}) == {
        (Fraction(1),): Fraction(4, 5),
        (Fraction(-1),): Fraction(1, 5),
    }


def test_example2_curriculum_stages(two_stage):
    curriculum = example2_curriculum()
    assert curriculum.target.diagram == two_stage.diagram
    assert [s.delta for s in curriculum] == [("H",), ("Z",)]
    assert [s.source.model.name for s in curriculum] == [
        "example2_two_stage[H]",
        "example2_two_stage[Z]",
    ]
