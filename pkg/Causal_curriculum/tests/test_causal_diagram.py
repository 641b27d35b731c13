import itertools
import random

import networkx as nx
import pytest

from Causal_curriculum.causal_diagram import (
    CausalDiagram,
    NodeRole,
    SeparationQuery,
    ancestors,
    augment_edit_indicators,
    augment_regime,
    d_separated,
    descendants,
    intervened_diagram,
    topological_order,
    validate_diagram,
)
from Causal_curriculum.exceptions import DiagramError

S, A, R = NodeRole.STATE, NodeRole.ACTION, NodeRole.REWARD


def _oracle(d: CausalDiagram, x, y, z) -> bool:
    """d-разделимость перебором простых путей в графе со скрытыми вершинами."""
    graph = d._latent_graph
    skeleton = graph.to_undirected()
    observed_ancestors = set()
    for node in z:
        observed_ancestors |= nx.ancestors(graph, node) | {node}
    for source, target in itertools.product(x, y):
        for path in nx.all_simple_paths(skeleton, source, target):
            active = True
            for prev, node, nxt in zip(path, path[1:], path[2:]):
                collider = graph.has_edge(prev, node) and graph.has_edge(nxt, node)
                if collider and node not in observed_ancestors:
                    active = False
                if not collider and node in z:
                    active = False
                if not active:
                    break
            if active:
                return False
    return True


def test_sokoban_diagram_structure(sokoban):
    """Диаграмма цепочки Sokoban: входы, родители наград и конфаундеры."""
    d = sokoban.diagram
    assert d.actions == ("X1", "X2", "X3")
    assert d.inputs_of("X2") == ("L2", "B2", "C2")
    assert d.parents("Y1") == ("B1", "X1")
    assert d.parents("L2") == ("L1", "X1")
    assert d.spouses("C2") == ("Y2",)
    assert d.time_index("X3") == 3
    report = validate_diagram(d)
    assert report.valid
    assert report.warnings == ()


def test_validate_diagram_detects_cycle_and_dangling():
    """Цикл и висячее ребро попадают в нарушения."""
    cyclic = CausalDiagram({"A": S, "B": S}, [("A", "B"), ("B", "A")])
    report = validate_diagram(cyclic)
    assert not report.valid
    assert any("цикл" in v for v in report.violations)

    dangling = CausalDiagram({"A": S}, [("A", "Q")])
    assert "Висячее ребро A->Q" in validate_diagram(dangling).violations


def test_validate_diagram_policy_space_rules():
    """Вход действия не может быть потомком этого действия."""
    d = CausalDiagram(
        {"S": S, "X": A, "T": S, "Y": R},
        [("S", "X"), ("X", "T"), ("T", "Y")],
        action_inputs={"X": ["S", "T"]},
    )
    report = validate_diagram(d)
    assert any("Вход T действия X" in v for v in report.violations)

    missing = CausalDiagram({"X": A, "Y": R}, [("X", "Y")])
    assert any("не заданы входные" in v for v in validate_diagram(missing).violations)


def test_validate_diagram_warns_on_reward_children():
    """Вознаграждение с эндогенным потомком даёт предупреждение, а не ошибку."""
    d = CausalDiagram(
        {"S": S, "X": A, "Y": R, "T": S},
        [("S", "X"), ("X", "Y"), ("Y", "T")],
        action_inputs={"X": ["S"]},
    )
    report = validate_diagram(d)
    assert report.valid
    assert report.warnings == ("Вознаграждение Y имеет потомков ['T']",)


def test_d_separated_basic_patterns():
    """Цепь, вилка, коллайдер и его потомок."""
    chain = CausalDiagram({"A": S, "B": S, "C": S}, [("A", "B"), ("B", "C")])
    assert not d_separated(chain, SeparationQuery.of(["A"], ["C"]))
    assert d_separated(chain, SeparationQuery.of(["A"], ["C"], ["B"]))

    collider = CausalDiagram(
        {"A": S, "B": S, "C": S, "D": S}, [("A", "B"), ("C", "B"), ("B", "D")]
    )
    assert d_separated(collider, SeparationQuery.of(["A"], ["C"]))
    assert not d_separated(collider, SeparationQuery.of(["A"], ["C"], ["B"]))
    assert not d_separated(collider, SeparationQuery.of(["A"], ["C"], ["D"]))


def test_d_separated_bidirected_edges():
    """Двунаправленное ребро открывает путь, и вершина-коллайдер тоже."""
    d = CausalDiagram({"A": S, "B": S, "C": S}, [("A", "B")], [("B", "C")])
    assert not d_separated(d, SeparationQuery.of(["B"], ["C"]))
    assert d_separated(d, SeparationQuery.of(["A"], ["C"]))
    assert not d_separated(d, SeparationQuery.of(["A"], ["C"], ["B"]))


def test_d_separated_rejects_bad_queries():
    d = CausalDiagram({"A": S, "B": S}, [("A", "B")])
    with pytest.raises(DiagramError, match="непустыми"):
        d_separated(d, SeparationQuery.of([], ["B"]))
    with pytest.raises(DiagramError, match="не пересекаться"):
        d_separated(d, SeparationQuery.of(["A"], ["B"], ["A"]))
    with pytest.raises(DiagramError, match="Неизвестная вершина Q"):
        d_separated(d, SeparationQuery.of(["A"], ["Q"]))


def test_d_separated_matches_path_oracle(make_random_diagram):
    """Достижимость совпадает с перебором путей на 1000 случайных запросах."""
    rng = random.Random(7)
    for seed in range(250):
        d = make_random_diagram(seed, size=rng.randint(3, 8))
        nodes = list(d.nodes)
        for _ in range(4):
            rng.shuffle(nodes)
            kx = rng.randint(1, 2)
            ky = rng.randint(1, min(2, len(nodes) - kx))
            x, y = nodes[:kx], nodes[kx : kx + ky]
            rest = nodes[kx + ky :]
            z = rest[: rng.randint(0, min(3, len(rest)))]
            expected = _oracle(d, x, y, z)
            assert d_separated(d, SeparationQuery.of(x, y, z)) == expected, (seed, x, y, z)
            assert d_separated(d, SeparationQuery.of(y, x, z)) == expected, (seed, y, x, z)


def test_ancestors_and_descendants():
    """Множества включают сами вершины; двунаправленные рёбра не учитываются."""
    d = CausalDiagram(
        {"A": S, "B": S, "C": S, "N": S}, [("A", "B"), ("B", "C")], [("A", "C")]
    )
    assert ancestors(d, ["C"]) == {"A", "B", "C"}
    assert descendants(d, ["A"]) == {"A", "B", "C"}
    assert descendants(d, ["B", "N"]) == {"B", "C", "N"}
    assert ancestors(d, ["N"]) == {"N"}
    assert descendants(d, ["N"]) == {"N"}
    with pytest.raises(DiagramError, match="Неизвестная вершина Q"):
        ancestors(d, ["Q"])


def test_intervened_diagram_replaces_action_parents():
    """В G_π родители действия равны входам, а конфаундеры действия удаляются."""
    d = CausalDiagram(
        {"W": S, "S": S, "X": A, "Y": R},
        [("W", "X"), ("S", "X"), ("X", "Y"), ("W", "Y")],
        [("X", "Y"), ("S", "Y")],
        {"X": ["S"]},
    )
    g = intervened_diagram(d)
    assert g.parents("X") == ("S",)
    assert g.bidirected_edges == (("S", "Y"),)
    assert g.parents("Y") == ("W", "X")


def test_intervened_diagram_rejects_invalid():
    cyclic = CausalDiagram({"A": S, "B": S}, [("A", "B"), ("B", "A")])
    with pytest.raises(DiagramError, match="некорректна"):
        intervened_diagram(cyclic)


def test_intervened_diagram_is_idempotent(sokoban, two_stage, make_random_policy_diagram):
    diagrams = [sokoban.diagram, two_stage.diagram]
    diagrams += [make_random_policy_diagram(seed, size=3 + seed % 8) for seed in range(50)]
    for d in diagrams:
        g = intervened_diagram(d)
        assert intervened_diagram(g) == g


def test_augment_then_remove_restores_diagram(sokoban, make_random_diagram):
    """Удаление добавленного индикатора или режима возвращает исходную диаграмму."""
    rng = random.Random(5)
    for seed in range(50):
        d = make_random_diagram(seed, size=rng.randint(2, 8))
        targets = rng.sample(list(d.nodes), rng.randint(1, len(d.nodes)))
        augmented, tau = augment_edit_indicators(d, targets)
        assert augmented != d
        assert augmented.without_node(tau) == d
    augmented, regime = augment_regime(sokoban.intervened, "X3")
    assert augmented.without_node(regime) == sokoban.intervened


def test_augment_edit_indicators():
    """Индикатор τ получает рёбра во все цели и свежее имя при коллизии."""
    d = CausalDiagram({"tau": S, "B": S, "C": S}, [("B", "C")])
    augmented, name = augment_edit_indicators(d, ["C", "B"])
    assert name == "tau_2"
    assert augmented.role(name) == NodeRole.EDIT_INDICATOR
    assert augmented.children(name) == ("B", "C")
    assert validate_diagram(augmented).valid
    with pytest.raises(DiagramError, match="пусто"):
        augment_edit_indicators(d, [])


def test_augment_edit_indicators_rejects_actions(sokoban):
    with pytest.raises(DiagramError, match="ролью action"):
        augment_edit_indicators(sokoban.diagram, ["X1"])


def test_augment_regime(sokoban):
    augmented, regime = augment_regime(sokoban.intervened, "X2")
    assert regime == "pi_X2"
    assert augmented.parents("X2") == ("B2", "C2", "L2", "pi_X2")
    with pytest.raises(DiagramError, match="не является действием"):
        augment_regime(sokoban.diagram, "L1")


def test_topological_order_and_fingerprint():
    """Порядок детерминирован, отпечаток зависит только от структуры."""
    d = CausalDiagram({"C": S, "A": S, "B": S}, [("A", "C"), ("B", "C")])
    assert topological_order(d) == ["A", "B", "C"]
    same = CausalDiagram({"A": S, "B": S, "C": S}, [("B", "C"), ("A", "C")])
    assert d == same
    assert d.fingerprint == same.fingerprint
    assert hash(d) == hash(same)
    with pytest.raises(DiagramError, match="Граф содержит цикл"):
        topological_order(CausalDiagram({"A": S, "B": S}, [("A", "B"), ("B", "A")]))
