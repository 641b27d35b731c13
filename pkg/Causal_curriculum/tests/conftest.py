import itertools
import random
from fractions import Fraction

import pytest

from Causal_curriculum.causal_diagram import CausalDiagram, NodeRole
from Causal_curriculum.editability import verdict_cache
from Causal_curriculum.fixtures import example1_sokoban_chain, example2_two_stage
from Causal_curriculum.parsers import parse_task
from Causal_curriculum.task_model import (
    FiniteTask,
    Policy,
    ReplaceFunction,
    StructuralFunction,
)


@pytest.fixture(autouse=True)
def clear_verdict_cache():
    """Каждый тест начинает с пустым кэшем проверок."""
    verdict_cache.clear()
    yield
    verdict_cache.clear()


@pytest.fixture
def sokoban():
    return example1_sokoban_chain()


@pytest.fixture
def two_stage():
    return example2_two_stage()


@pytest.fixture
def pi1(two_stage):
    """π1: X1 = ¬H, X2 = Z."""
    return Policy.deterministic(
        two_stage,
        {"X1": lambda h: 1 - h, "X2": lambda z: z},
    )


@pytest.fixture
def pi2(two_stage):
    """π2: X1 = 0, X2 = 0."""
    return Policy.deterministic(two_stage, {"X1": 0, "X2": 0})


def _random_table(rng: random.Random, arity: int, values):
    rows = [tuple((k >> b) & 1 for b in reversed(range(arity))) for k in range(2**arity)]
    return {",".join(map(str, row)): str(rng.choice(values)) for row in rows}


def _binary_noise(p: Fraction) -> dict:
    return {"domain": ["0", "1"], "probabilities": [str(1 - p), str(p)]}


@pytest.fixture
def make_random_task():
    """Фабрика случайных последовательных задач с двоичными переменными.

    На шаге i состояние S_i зависит от S_(i−1), X_(i−1) и собственного
    шума; вознаграждение Y_i зависит от S_i, X_i и иногда от S_(i−1).
    С confounded=True шум U_(i−1) иногда делится между S_(i−1) и S_i, а
    ненаблюдаемый контекст C_i делит шум W_i с наградой Y_i.
    """

    def make(seed: int, horizon: int = 2, confounded: bool = False) -> FiniteTask:
        rng = random.Random(seed)
        variables, exogenous, functions, actions, rewards = {}, {}, {}, [], []
        for i in range(1, horizon + 1):
            state, action, reward = f"S{i}", f"X{i}", f"Y{i}"
            noise = f"U{i}"
            p = Fraction(rng.randint(1, 4), 5)
            exogenous[noise] = _binary_noise(p)
            parents = [noise] if i == 1 else [f"S{i-1}", f"X{i-1}", noise]
            if confounded and i > 1 and rng.random() < 1 / 3:
                parents.append(f"U{i-1}")
            functions[state] = {"parents": parents, "table": _random_table(rng, len(parents), [0, 1])}
            variables[state] = {"role": "state", "domain": ["0", "1"]}
            variables[action] = {"role": "action", "domain": ["0", "1"]}
            actions.append({"name": action, "inputs": [state]})
            reward_parents = [state, action]
            if i > 1 and rng.random() < 0.5:
                reward_parents.append(f"S{i-1}")
            if confounded and rng.random() < 0.5:
                context, shared = f"C{i}", f"W{i}"
                exogenous[shared] = _binary_noise(Fraction(rng.randint(1, 4), 5))
                functions[context] = {"parents": [shared], "table": _random_table(rng, 1, [0, 1])}
                variables[context] = {"role": "state", "domain": ["0", "1"]}
                reward_parents.append(shared)
                if rng.random() < 0.5:
                    reward_parents.append(context)
            functions[reward] = {
                "parents": reward_parents,
                "table": _random_table(rng, len(reward_parents), [0, 1, 2]),
            }
            variables[reward] = {"role": "reward", "domain": ["0", "1", "2"]}
            rewards.append(reward)

        children = {}
        for node, function in functions.items():
            for parent in function["parents"]:
                if parent in exogenous:
                    children.setdefault(parent, []).append(node)
        confounders = [
            [u, v] for nodes in children.values() for u, v in itertools.combinations(nodes, 2)
        ]
        return parse_task(
            {
                "name": f"random_{seed}",
                "variables": variables,
                "exogenous": exogenous,
                "functions": functions,
                "actions": actions,
                "rewards": rewards,
                "confounders": confounders,
                "discount": "1",
                "horizon": horizon,
            }
        )

    return make


@pytest.fixture
def make_random_edits():
    """Фабрика правок, заменяющих функции вершин случайными таблицами."""

    def make(rng: random.Random, t: FiniteTask, nodes) -> list:
        edits = []
        for node in sorted(nodes):
            function = t.functions[node]
            table = {
                row: rng.choice(t.domains[node].values)
                for row in function.to_table(t.all_domains)
            }
            edits.append(
                ReplaceFunction(node, StructuralFunction(node, function.parents, table=table))
            )
        return edits

    return make


@pytest.fixture
def make_random_diagram():
    """Фабрика случайных ациклических диаграмм из вершин-состояний.

    Рёбра идут только от меньшего номера к большему, поэтому граф ацикличен.
    """

    def make(seed: int, size: int = 7, p_directed: float = 0.3, p_bidirected: float = 0.15):
        rng = random.Random(seed)
        nodes = [f"V{k}" for k in range(size)]
        directed, bidirected = [], []
        for a in range(size):
            for b in range(a + 1, size):
                if rng.random() < p_directed:
                    directed.append((nodes[a], nodes[b]))
                if rng.random() < p_bidirected:
                    bidirected.append((nodes[a], nodes[b]))
        roles = {n: NodeRole.STATE for n in nodes}
        return CausalDiagram(roles, directed, bidirected)

    return make


@pytest.fixture
def make_random_policy_diagram():
    """Фабрика случайных диаграмм с действиями и вознаграждениями.

    Первая вершина всегда состояние, последняя всегда вознаграждение.
    Родители действия совпадают с его входами, выбранными среди более ранних
    состояний; из вознаграждений рёбра не выходят.
    """

    def make(seed: int, size: int, p_directed: float = 0.35, p_bidirected: float = 0.2):
        rng = random.Random(seed)
        kinds = [NodeRole.STATE] + [
            rng.choices(
                (NodeRole.STATE, NodeRole.ACTION, NodeRole.REWARD), weights=(5, 2, 2)
            )[0]
            for _ in range(size - 2)
        ] + [NodeRole.REWARD]
        if NodeRole.ACTION not in kinds:
            kinds[rng.randint(1, size - 2)] = NodeRole.ACTION
        prefix = {NodeRole.STATE: "S", NodeRole.ACTION: "X", NodeRole.REWARD: "Y"}
        nodes = [f"{prefix[kind]}{k}" for k, kind in enumerate(kinds)]

        directed, bidirected = [], []
        inputs = {}
        for b, kind in enumerate(kinds):
            if kind == NodeRole.ACTION:
                inputs[nodes[b]] = [
                    nodes[a]
                    for a in range(b)
                    if kinds[a] == NodeRole.STATE and rng.random() < 0.4
                ]
                directed += [(s, nodes[b]) for s in inputs[nodes[b]]]
                continue
            for a in range(b):
                if kinds[a] != NodeRole.REWARD and rng.random() < p_directed:
                    directed.append((nodes[a], nodes[b]))
        for a, b in itertools.combinations(range(size), 2):
            if rng.random() < p_bidirected:
                bidirected.append((nodes[a], nodes[b]))
        return CausalDiagram(dict(zip(nodes, kinds)), directed, bidirected, inputs)

    return make
