import itertools
import logging
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from Causal_curriculum.causal_diagram import CausalDiagram, NodeRole
from Causal_curriculum.curriculum import Curriculum, CurriculumStage
from Causal_curriculum.exceptions import BudgetExceededError, TaskError
from Causal_curriculum.task_model import (
    ExogenousVar,
    FiniteDomain,
    FiniteTask,
    ReplaceFunction,
    ReweightExogenous,
    StructuralFunction,
    apply_edits,
)

logger = logging.getLogger(__name__)

GRID_SIZES = range(2, 7)
HORIZONS = range(1, 13)

BINARY = FiniteDomain.of(0, 1)
GRID_MOVES = FiniteDomain.labelled(N=0, S=1, E=2, W=3, Push=4)
PUSH = Fraction(4)


class _TaskBuilder:
    """Сборщик задачи: рёбра берутся из родителей функций, двунаправленные
    рёбра из общих экзогенных родителей."""

    def __init__(self, name: str):
        self.name = name
        self.roles: Dict[str, NodeRole] = {}
        self.domains: Dict[str, FiniteDomain] = {}
        self.exogenous: List[ExogenousVar] = []
        self.functions: Dict[str, StructuralFunction] = {}
        self.inputs: Dict[str, Tuple[str, ...]] = {}
        self.rewards: List[str] = []

    def noise(self, name: str, domain: FiniteDomain, probabilities: Sequence) -> str:
        self.exogenous.append(ExogenousVar(name, domain, tuple(probabilities)))
        return name

    def state(self, name: str, domain: FiniteDomain, function: StructuralFunction) -> None:
        self.roles[name] = NodeRole.STATE
        self.domains[name] = domain
        self.functions[name] = function

    def reward(self, name: str, domain: FiniteDomain, function: StructuralFunction) -> None:
        self.state(name, domain, function)
        self.roles[name] = NodeRole.REWARD
        self.rewards.append(name)

    def action(self, name: str, domain: FiniteDomain, inputs: Sequence[str]) -> None:
        self.roles[name] = NodeRole.ACTION
        self.domains[name] = domain
        self.inputs[name] = tuple(inputs)

    def build(self, horizon: Optional[int] = None, discount: Fraction = Fraction(1)) -> FiniteTask:
        directed = [
            (p, name)
            for name, f in self.functions.items()
            for p in f.parents
            if p in self.roles
        ]
        directed += [(s, a) for a, states in self.inputs.items() for s in states]
        exogenous = {var.name for var in self.exogenous}
        bidirected = set()
        for u in sorted(exogenous):
            children = sorted(n for n, f in self.functions.items() if u in f.parents)
            bidirected |= set(itertools.combinations(children, 2))
        diagram = CausalDiagram(self.roles, directed, sorted(bidirected), self.inputs)
        return FiniteTask(
            diagram=diagram,
            domains=self.domains,
            exogenous=tuple(self.exogenous),
            functions=self.functions,
            reward_nodes=tuple(self.rewards),
            discount=discount,
            horizon=horizon,
            name=self.name,
        )


def example1_sokoban_chain(horizon: int = 3) -> FiniteTask:
    """Цепочка Sokoban с цветными ящиками.

    Толкание ящика рядом с целью даёт +10 или −10 в зависимости от U_i,
    который же определяет цвет C_i: жёлтый ящик (C_i = 0) всегда даёт +10.
    Любое другое действие стоит −1/10.
    """
    builder = _TaskBuilder("example1_sokoban_chain")
    location = FiniteDomain.labelled(away=0, behind_box=1)
    box = FiniteDomain.labelled(far=0, next_to_goal=1, in_goal=2)
    color = FiniteDomain.labelled(yellow=0, blue=1)
    move = FiniteDomain.labelled(move=0, push=1)
    reward = FiniteDomain.of(-10, "-1/10", 10)

    builder.state(
        "L1",
        location,
        StructuralFunction("L1", ("U_L1",), expression="U_L1"),
    )
    builder.noise("U_L1", BINARY, ("1/2", "1/2"))
    builder.state("B1", box, StructuralFunction("B1", ("U_B1",), expression="U_B1"))
    builder.noise("U_B1", FiniteDomain.of(0, 1, 2), (1, 0, 0))
    for i in range(1, horizon + 1):
        if i > 1:
            builder.state(
                f"L{i}",
                location,
                StructuralFunction(
                    f"L{i}",
                    (f"X{i-1}", f"L{i-1}"),
                    expression=f"if X{i-1} = 0 then 1 else L{i-1}",
                ),
            )
            builder.state(
                f"B{i}",
                box,
                StructuralFunction(
                    f"B{i}",
                    (f"X{i-1}", f"B{i-1}"),
                    expression=f"if X{i-1} = 1 then (if B{i-1} = 0 then 1 else 2) else B{i-1}",
                ),
            )
        builder.noise(f"U{i}", BINARY, ("1/4", "3/4"))
        builder.state(f"C{i}", color, StructuralFunction(f"C{i}", (f"U{i}",), expression=f"U{i}"))
        builder.action(f"X{i}", move, (f"L{i}", f"B{i}", f"C{i}"))
        builder.reward(
            f"Y{i}",
            reward,
            StructuralFunction(
                f"Y{i}",
                (f"B{i}", f"X{i}", f"U{i}"),
                expression=(
                    f"if B{i} = 1 and X{i} = 1 then (if U{i} = 0 then 10 else -10) else -0.1"
                ),
            ),
        )
    return builder.build(horizon)


def example2_two_stage() -> FiniteTask:
    """Двухшаговая задача, на которой учебный план перезаписывает правила.

    H = U_H, Z = ¬X1 ⊕ U_Z, Y1 = 0.5·(H ⊕ X1), Y2 = ¬H ⊕ X2 ∧ Z.
    """
    builder = _TaskBuilder("example2_two_stage")
    builder.noise("U_H", BINARY, ("9/10", "1/10"))
    builder.noise("U_Z", BINARY, ("1/2", "1/2"))
    builder.state("H", BINARY, StructuralFunction("H", ("U_H",), expression="U_H"))
    builder.action("X1", BINARY, ("H",))
    builder.reward(
        "Y1",
        FiniteDomain.of(0, "1/2"),
        StructuralFunction("Y1", ("H", "X1"), expression="0.5*(H xor X1)"),
    )
    builder.state("Z", BINARY, StructuralFunction("Z", ("X1", "U_Z"), expression="not X1 xor U_Z"))
    builder.action("X2", BINARY, ("Z",))
    builder.reward(
        "Y2",
        BINARY,
        StructuralFunction("Y2", ("H", "X2", "Z"), expression="not H xor X2 and Z"),
    )
    return builder.build(2)


def example2_curriculum(task: Optional[FiniteTask] = None) -> Curriculum:
    """Учебный план [T1, T2]: T1 делает H = 1 частым, T2 задаёт Z = ¬X1."""
    task = task or example2_two_stage()
    first = apply_edits(task, [ReweightExogenous("U_H", ("1/10", "9/10"))])
    second = apply_edits(
        task,
        [ReplaceFunction("Z", StructuralFunction("Z", ("X1",), expression="not X1"))],
    )
    return Curriculum(
        task,
        (
            CurriculumStage(first, ("X1",), ("H",)),
            CurriculumStage(second, ("X2",), ("Z",)),
        ),
    )


def _check_grid(grid_size: int, horizon: int) -> None:
    if grid_size not in GRID_SIZES or horizon not in HORIZONS:
        raise BudgetExceededError(
            f"Сетка {grid_size}x{grid_size} с горизонтом {horizon} вне допустимых "
            f"пределов {GRID_SIZES.start}..{GRID_SIZES.stop - 1} и "
            f"{HORIZONS.start}..{HORIZONS.stop - 1}"
        )


def _step(cell: int, direction: int, n: int) -> Optional[int]:
    """Соседняя клетка в направлении N, S, E, W или None у стены."""
    row, col = divmod(cell, n)
    row += (-1, 1, 0, 0)[direction]
    col += (0, 0, 1, -1)[direction]
    if 0 <= row < n and 0 <= col < n:
        return row * n + col
    return None


def _adjacent(a: int, b: int, n: int) -> bool:
    return any(_step(a, d, n) == b for d in range(4))


def _table(
    parents: Sequence[FiniteDomain], rule: Callable[..., Union[int, Fraction]]
) -> Dict[Tuple[Fraction, ...], Fraction]:
    return {
        key: Fraction(rule(*key))
        for key in itertools.product(*(d.values for d in parents))
    }


def _sokoban_moves(location: int, box: int, action: int, n: int) -> Tuple[int, int]:
    if action < 4:
        target = _step(location, action, n)
        if target is None or target == box:
            return location, box
        return target, box
    for direction in range(4):
        if _step(location, direction, n) == box:
            pushed = _step(box, direction, n)
            if pushed is not None:
                return box, pushed
    return location, box


def mini_colored_sokoban(grid_size: int = 4, horizon: int = 6) -> FiniteTask:
    """Цветной Sokoban на сетке grid_size x grid_size.

    Клетки нумеруются построчно, цель в последней клетке, ящик стартует в
    центре, агент равновероятно в любой другой клетке. Толкание ящика,
    стоящего рядом с целью, даёт ±10 по знаку U_i, иначе −1/10.
    """
    _check_grid(grid_size, horizon)
    n = grid_size
    cells = FiniteDomain.of(*range(n * n))
    goal = n * n - 1
    start = ((n - 1) // 2) * n + (n - 1) // 2
    reward = FiniteDomain.of(-10, "-1/10", 10)
    builder = _TaskBuilder(f"mini_colored_sokoban_{n}x{n}_h{horizon}")

    others = Fraction(1, n * n - 1)
    builder.noise("U_L", cells, tuple(0 if c == start else others for c in range(n * n)))
    builder.state("L1", cells, StructuralFunction("L1", ("U_L",), expression="U_L"))
    builder.state("B1", cells, StructuralFunction.constant("B1", start))
    for i in range(1, horizon + 1):
        if i > 1:
            parents = (f"L{i-1}", f"B{i-1}", f"X{i-1}")
            builder.state(
                f"L{i}",
                cells,
                StructuralFunction(
                    f"L{i}",
                    parents,
                    table=_table(
                        (cells, cells, GRID_MOVES),
                        lambda l, b, x: _sokoban_moves(int(l), int(b), int(x), n)[0],
                    ),
                ),
            )
            builder.state(
                f"B{i}",
                cells,
                StructuralFunction(
                    f"B{i}",
                    parents,
                    table=_table(
                        (cells, cells, GRID_MOVES),
                        lambda l, b, x: _sokoban_moves(int(l), int(b), int(x), n)[1],
                    ),
                ),
            )
        builder.noise(f"U{i}", BINARY, ("1/4", "3/4"))
        builder.state(f"C{i}", BINARY, StructuralFunction(f"C{i}", (f"U{i}",), expression=f"U{i}"))
        builder.action(f"X{i}", GRID_MOVES, (f"L{i}", f"B{i}", f"C{i}"))
        builder.reward(
            f"Y{i}",
            reward,
            StructuralFunction(
                f"Y{i}",
                (f"B{i}", f"X{i}", f"U{i}"),
                table=_table(
                    (cells, GRID_MOVES, BINARY),
                    lambda b, x, u: (
                        (10 if u == 0 else -10)
                        if x == PUSH and _adjacent(int(b), goal, n)
                        else Fraction(-1, 10)
                    ),
                ),
            ),
        )
    logger.debug("Построен %s", builder.name)
    return builder.build(horizon)


def mini_button_maze(grid_size: int = 3, horizon: int = 4) -> FiniteTask:
    """Лабиринт с кнопкой в клетке 0 и целью в последней клетке.

    До нажатия кнопки цвет C_i = U_i, после нажатия C_i = U_C; U_C же
    определяет знак награды ±1 за вход в цель. Стояние на месте стоит −1/10,
    любой другой шаг −1/100. Push в клетке кнопки переключает её.
    """
    _check_grid(grid_size, horizon)
    n = grid_size
    cells = FiniteDomain.of(*range(n * n))
    button, goal = 0, n * n - 1
    reward = FiniteDomain.of(-1, "-1/10", "-1/100", 1)
    builder = _TaskBuilder(f"mini_button_maze_{n}x{n}_h{horizon}")

    def walk(location: int, action: int) -> int:
        if action == 4:
            return location
        target = _step(location, action, n)
        return location if target is None else target

    def pay(location: int, action: int, u_c: int) -> Fraction:
        target = walk(location, action)
        if target == location:
            return Fraction(-1, 10)
        if target == goal:
            return Fraction(1 if u_c == 0 else -1)
        return Fraction(-1, 100)

    others = Fraction(1, n * n - 1)
    builder.noise("U_C", BINARY, ("4/5", "1/5"))
    builder.noise("U_L", cells, tuple(0 if c == goal else others for c in range(n * n)))
    builder.state("L1", cells, StructuralFunction("L1", ("U_L",), expression="U_L"))
    builder.state("B1", BINARY, StructuralFunction.constant("B1", 0))
    for i in range(1, horizon + 1):
        if i > 1:
            builder.state(
                f"L{i}",
                cells,
                StructuralFunction(
                    f"L{i}",
                    (f"L{i-1}", f"X{i-1}"),
                    table=_table((cells, GRID_MOVES), lambda l, x: walk(int(l), int(x))),
                ),
            )
            builder.state(
                f"B{i}",
                BINARY,
                StructuralFunction(
                    f"B{i}",
                    (f"B{i-1}", f"L{i-1}", f"X{i-1}"),
                    table=_table(
                        (BINARY, cells, GRID_MOVES),
                        lambda b, l, x: (1 - b) if x == PUSH and l == button else b,
                    ),
                ),
            )
        builder.noise(f"U{i}", BINARY, ("1/2", "1/2"))
        builder.state(
            f"C{i}",
            BINARY,
            StructuralFunction(
                f"C{i}",
                (f"B{i}", f"U{i}", "U_C"),
                expression=f"if B{i} = 0 then U{i} else U_C",
            ),
        )
        builder.action(f"X{i}", GRID_MOVES, (f"L{i}", f"B{i}", f"C{i}"))
        builder.reward(
            f"Y{i}",
            reward,
            StructuralFunction(
                f"Y{i}",
                (f"L{i}", f"X{i}", "U_C"),
                table=_table(
                    (cells, GRID_MOVES, BINARY),
                    lambda l, x, u: pay(int(l), int(x), int(u)),
                ),
            ),
        )
    return builder.build(horizon)


FIXTURES: Dict[str, Callable[..., FiniteTask]] = {
    "example1_sokoban_chain": example1_sokoban_chain,
    "example2_two_stage": example2_two_stage,
    "mini_colored_sokoban": mini_colored_sokoban,
    "mini_button_maze": mini_button_maze,
}

ALIASES = {"example1": "example1_sokoban_chain", "example2": "example2_two_stage"}


def load_fixture(fixture_id: str) -> FiniteTask:
    """Загрузить встроенную задачу по идентификатору.

    Аргументы:
        fixture_id (str): Имя или псевдоним; сеточные задачи принимают
            параметры через двоеточие, например 'mini_colored_sokoban:4:6'.

    Исключения:
        TaskError: Если идентификатор неизвестен или параметры некорректны.
        BudgetExceededError: Если параметры сетки вне допустимых пределов.
    """
    name, *params = fixture_id.split(":")
    name = ALIASES.get(name, name)
    if name not in FIXTURES:
        raise TaskError(
            f"Неизвестная задача {fixture_id}; доступны {sorted(FIXTURES) + sorted(ALIASES)}"
        )
    try:
        args = [int(p) for p in params]
    except ValueError:
        raise TaskError(f"Параметры задачи {fixture_id} должны быть целыми") from None
    try:
        return FIXTURES[name](*args)
    except TypeError:
        raise TaskError(f"Неверное число параметров задачи {fixture_id}") from None
