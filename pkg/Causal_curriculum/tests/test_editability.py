import random
from fractions import Fraction
from itertools import combinations

import pytest

from Causal_curriculum.causal_diagram import NodeRole
from Causal_curriculum.curriculum import misaligned_fraction, singleton_candidates
from Causal_curriculum.editability import (
    EditabilityQuery,
    expanded_action_set,
    find_edit,
    find_max_edit,
    is_edit,
    is_soluble,
    list_edits,
    relevance_graph,
    solubility_witness,
    soluble_order,
)
from Causal_curriculum.exceptions import DiagramError, NotSolubleError
from Causal_curriculum.fixtures import mini_button_maze

X3_EDITABLE = ("B1", "B2", "B3", "C1", "C2", "L1", "L2", "L3")


def test_sokoban_max_edit_all_actions(sokoban):
    """Относительно всех действий редактируемы только начальные L1 и B1."""
    assert find_max_edit(sokoban.diagram, sokoban.actions) == ("B1", "L1")
    assert is_edit(EditabilityQuery.of(sokoban.diagram, ["B1", "L1"], sokoban.actions))
    assert not is_edit(EditabilityQuery.of(sokoban.diagram, ["C1"], sokoban.actions))


def test_sokoban_max_edit_per_action(sokoban):
    """Чем позже действие, тем больше редактируемых состояний."""
    assert find_max_edit(sokoban.diagram, ["X3"]) == X3_EDITABLE
    assert find_max_edit(sokoban.diagram, ["X2"]) == ("B1", "B2", "C1", "L1", "L2")
    assert "C3" not in find_max_edit(sokoban.diagram, ["X3"])


def test_sokoban_list_edits(sokoban):
    """Перечисление идёт от полного множества к одиночным."""
    assert list(list_edits(sokoban.diagram, sokoban.actions)) == [
        ("B1", "L1"),
        ("B1",),
        ("L1",),
    ]


def test_find_edit_with_pool(sokoban):
    assert find_edit(sokoban.diagram, ["X2"], pool=["C1", "C2", "L3"]) == ("C1",)
    assert find_edit(sokoban.diagram, ["X2"]) == find_max_edit(sokoban.diagram, ["X2"])
    with pytest.raises(DiagramError, match="ролью reward"):
        find_edit(sokoban.diagram, ["X2"], pool=["Y1"])


def test_is_edit_rejects_bad_queries(sokoban):
    with pytest.raises(DiagramError, match="Множество правок пусто"):
        is_edit(EditabilityQuery.of(sokoban.diagram, [], sokoban.actions))
    with pytest.raises(DiagramError, match="ролью action"):
        is_edit(EditabilityQuery.of(sokoban.diagram, ["X1"], ["X2"]))
    with pytest.raises(DiagramError, match="не является действием"):
        is_edit(EditabilityQuery.of(sokoban.diagram, ["L1"], ["L2"]))
    with pytest.raises(DiagramError, match="Множество действий пусто"):
        find_max_edit(sokoban.diagram, [])


def test_two_stage_editability(two_stage):
    """H редактируемо для X1, но не для X2; Z не редактируемо для X2 из-за пути через H."""
    d = two_stage.diagram
    assert is_edit(EditabilityQuery.of(d, ["H"], ["X1"]))
    assert not is_edit(EditabilityQuery.of(d, ["H"], ["X2"]))
    assert not is_edit(EditabilityQuery.of(d, ["Z"], ["X2"]))
    assert find_max_edit(d, ["X1"]) == ("H",)
    assert find_max_edit(d, ["X2"]) == ()
    assert list(list_edits(d, ["X2"])) == []


def test_sokoban_relevance_and_solubility(sokoban):
    graph = relevance_graph(sokoban)
    assert graph.edges == (("X2", "X1"), ("X3", "X1"), ("X3", "X2"))
    assert graph.components == (("X3",), ("X2",), ("X1",))
    assert graph.acyclic
    assert is_soluble(sokoban)
    assert soluble_order(sokoban) == ("X3", "X2", "X1")
    assert graph.to_dict()["acyclic"] is True


def test_two_stage_not_soluble(two_stage):
    """Оба действия попадают в одну SCC, свидетель (1, 2)."""
    graph = relevance_graph(two_stage)
    assert graph.components == (("X1", "X2"),)
    assert not graph.acyclic
    assert solubility_witness(two_stage) == (1, 2)
    with pytest.raises(NotSolubleError) as excinfo:
        soluble_order(two_stage)
    assert excinfo.value.component == ("X1", "X2")
    assert excinfo.value.witness == (1, 2)


def test_button_maze_not_soluble():
    """Общий шум U_C связывает цвет первого шага с наградой второго."""
    maze = mini_button_maze(2, 2)
    assert solubility_witness(maze) == (1, 2)


def test_expanded_action_set():
    order = ("X3", "X2", "X1")
    assert expanded_action_set(order, ["X2"]) == ("X2", "X3")
    assert expanded_action_set(order, ["X1", "X3"]) == ("X1", "X2", "X3")
    assert expanded_action_set(order, []) == ()
    with pytest.raises(DiagramError, match="отсутствуют"):
        expanded_action_set(order, ["X9"])


def test_misaligned_fraction(sokoban):
    """Из восьми одиночных правок согласованы только L1 и B1."""
    candidates = singleton_candidates(sokoban, X3_EDITABLE)
    assert misaligned_fraction(sokoban, candidates) == Fraction(3, 4)
    assert misaligned_fraction(sokoban, []) == 0


def test_max_edit_is_union_of_editable_singletons(make_random_task):
    """Максимальное Δ состоит ровно из редактируемых одиночных состояний."""
    for seed in range(12):
        t = make_random_task(seed)
        states = [n for n in t.diagram.nodes if n.startswith("S")]
        for actions in ([t.actions[0]], [t.actions[-1]], list(t.actions)):
            expected = tuple(
                s for s in sorted(states) if is_edit(EditabilityQuery.of(t.diagram, [s], actions))
            )
            assert find_max_edit(t.diagram, actions) == expected


def test_max_edit_ignores_candidate_order(sokoban):
    """Результат не зависит от порядка перебора кандидатов."""
    rng = random.Random(11)
    states = list(sokoban.diagram.nodes_with_role(NodeRole.STATE))
    for actions in (["X2"], ["X3"], list(sokoban.actions)):
        expected = find_max_edit(sokoban.diagram, actions)
        for _ in range(5):
            rng.shuffle(states)
            assert find_max_edit(sokoban.diagram, actions, order=states) == expected


def test_every_listed_edit_is_editable(sokoban):
    """Каждое подмножество максимального Δ редактируемо."""
    maximal = find_max_edit(sokoban.diagram, ["X3"])
    listed = list(list_edits(sokoban.diagram, ["X3"]))
    assert len(listed) == 2 ** len(maximal) - 1
    assert len(set(listed)) == len(listed)
    for size in (1, 2, len(maximal)):
        for subset in combinations(maximal, size):
            assert subset in listed
            assert is_edit(EditabilityQuery.of(sokoban.diagram, subset, ["X3"]))


def test_max_edit_on_random_diagrams(make_random_policy_diagram):
    """На 1000 случайных диаграммах Δ не зависит от порядка, максимально и
    монотонно по множеству действий."""
    rng = random.Random(13)
    for seed in range(1000):
        d = make_random_policy_diagram(seed, size=rng.randint(3, 10))
        actions = rng.sample(d.actions, rng.randint(1, len(d.actions)))
        maximal = find_max_edit(d, actions)
        states = list(d.nodes_with_role(NodeRole.STATE))
        rng.shuffle(states)
        assert find_max_edit(d, actions, order=states) == maximal, seed
        if maximal:
            assert is_edit(EditabilityQuery.of(d, maximal, actions)), seed
        for state in states:
            if state not in maximal:
                query = EditabilityQuery.of(d, maximal + (state,), actions)
                assert not is_edit(query), (seed, state)
        for action in actions:
            assert set(maximal) <= set(find_max_edit(d, [action])), (seed, action)


def test_editability_extends_along_soluble_order(make_random_task):
    """В разрешимой задаче Δ, редактируемое для X, редактируемо для всего X+."""
    checked = 0
    for seed in range(300):
        t = make_random_task(seed, horizon=2 + seed % 2, confounded=True)
        if not is_soluble(t):
            continue
        order = soluble_order(t)
        for action in t.actions:
            delta = find_max_edit(t.diagram, [action])
            if not delta:
                continue
            expanded = expanded_action_set(order, [action])
            assert is_edit(EditabilityQuery.of(t.diagram, delta, expanded)), (seed, action)
            for earlier in expanded:
                assert set(delta) <= set(find_max_edit(t.diagram, [earlier])), seed
        checked += 1
    assert checked >= 50
