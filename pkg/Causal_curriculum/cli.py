import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from Causal_curriculum.causal_diagram import SeparationQuery, d_separated
from Causal_curriculum.config import Settings
from Causal_curriculum.curriculum import (
    LEARNERS,
    causal_curriculum_learning,
    curriculum_learning,
    find_causal_curriculum,
)
from Causal_curriculum.editability import (
    EditabilityQuery,
    find_max_edit,
    is_edit,
    list_edits,
    relevance_graph,
    solubility_witness,
    soluble_order,
)
from Causal_curriculum.exceptions import BudgetExceededError, CausalCurriculumError
from Causal_curriculum.fixtures import load_fixture
from Causal_curriculum.generators import GENERATORS, make_generator
from Causal_curriculum.parsers import (
    CurriculumParser,
    Parser,
    PolicyParser,
    curriculum_to_dict,
    emit_task,
    parse_task,
    policy_to_dict,
)
from Causal_curriculum.planner import LearnerConfig, evaluate_policy, normalized_iqm
from Causal_curriculum.task_model import FiniteTask, expected_reward, validate_task

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ANALYSIS = 2
EXIT_BUDGET = 3

FIXTURE_PREFIX = "fixture:"
CURRICULUM_FILE = "curriculum.json"


class UsageError(Exception):
    """Ошибка разбора аргументов командной строки."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _names(text: str) -> Tuple[str, ...]:
    return tuple(n.strip() for n in text.split(",") if n.strip())


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"Некорректное рациональное число {text!r}") from None


def _fractions(text: str) -> List[Fraction]:
    return [_fraction(v) for v in _names(text)]


def load_spec(spec: str, validate: bool = True) -> FiniteTask:
    """Загрузить задачу из файла или по идентификатору 'fixture:<id>'."""
    if spec.startswith(FIXTURE_PREFIX):
        return load_fixture(spec[len(FIXTURE_PREFIX) :])
    text = Path(spec).read_text(encoding="utf-8")
    return parse_task(text, validate=validate)


def _actions(t: FiniteTask, text: Optional[str]) -> Tuple[str, ...]:
    return _names(text) if text else t.actions


def _validate(args) -> Tuple[dict, int]:
    t = load_spec(args.spec, validate=False)
    report = validate_task(t)
    for warning in report.warnings:
        logger.warning(warning)
    result = {"task": t.name, **report.to_dict()}
    return result, EXIT_OK if report.valid else EXIT_ANALYSIS


def _dsep(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    diagram = t.intervened if args.intervened else t.diagram
    query = SeparationQuery.of(_names(args.x), _names(args.y), _names(args.z))
    return {
        "x": sorted(query.x),
        "y": sorted(query.y),
        "z": sorted(query.z),
        "separated": d_separated(diagram, query),
    }, EXIT_OK


def _is_edit(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    actions = _actions(t, args.actions)
    delta = _names(args.delta)
    editable = is_edit(EditabilityQuery.of(t.diagram, delta, actions))
    return {"delta": sorted(delta), "actions": list(actions), "editable": editable}, EXIT_OK


def _max_edit(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    actions = _actions(t, args.actions)
    return {"actions": list(actions), "max_edit": list(find_max_edit(t.diagram, actions))}, EXIT_OK


def _list_edits(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    actions = _actions(t, args.actions)
    edits = []
    for edit in list_edits(t.diagram, actions):
        if args.limit is not None and len(edits) >= args.limit:
            break
        edits.append(list(edit))
    return {"actions": list(actions), "edits": edits}, EXIT_OK


def _soluble(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    witness = solubility_witness(t)
    result: dict = {"soluble": witness is None, "witness": None}
    if witness is None:
        result["order"] = list(soluble_order(t))
    else:
        result["witness"] = {"j": witness[0], "i": witness[1]}
    return result, EXIT_OK


def _relevance(args) -> Tuple[dict, int]:
    return relevance_graph(load_spec(args.spec)).to_dict(), EXIT_OK


def _curriculum(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    c = find_causal_curriculum(t, make_generator(args.gen), args.seed)
    result = curriculum_to_dict(c)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / CURRICULUM_FILE
        path.write_text(CurriculumParser(t).emit(c), encoding="utf-8")
        result["written"] = str(path)
    return result, EXIT_OK


def _train(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    cfg = LearnerConfig(episodes=args.episodes, seed=args.seed)
    if args.curriculum:
        path = Path(args.curriculum)
        if path.is_dir():
            path = path / CURRICULUM_FILE
        c = CurriculumParser(t).parse(path.read_text(encoding="utf-8"))
        policy, log = curriculum_learning(c, args.mode, args.seed, cfg)
    else:
        policy, log = causal_curriculum_learning(
            t, make_generator(args.gen), args.mode, args.seed, cfg
        )
    if args.policy_out:
        Path(args.policy_out).write_text(PolicyParser(t).emit(policy), encoding="utf-8")
    return {
        "mode": args.mode,
        "run_log": log.to_dict(),
        "expected_reward": str(expected_reward(t, policy)),
        "policy": policy_to_dict(policy),
    }, EXIT_OK


def _eval(args) -> Tuple[dict, int]:
    t = load_spec(args.spec)
    policy = PolicyParser(t).parse(Path(args.policy).read_text(encoding="utf-8"))
    report = evaluate_policy(
        t, policy, episodes=args.episodes, seed=args.seed, lower=args.min, upper=args.max
    )
    return report.to_dict(), EXIT_OK


def _report(args) -> Tuple[dict, int]:
    value = normalized_iqm(args.iqm, args.min, args.max)
    return {"normalized_iqm": str(value), "count": len(args.iqm)}, EXIT_OK


def _fixture(args) -> Tuple[dict, int]:
    t = load_fixture(args.id)
    if args.emit:
        return emit_task(t), EXIT_OK
    return {
        "name": t.name,
        "nodes": len(t.diagram.nodes),
        "actions": list(t.actions),
        "rewards": list(t.reward_nodes),
    }, EXIT_OK


Command = Callable[[argparse.Namespace], Tuple[dict, int]]


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="causal_curriculum",
        description="Анализ редактируемости и причинно согласованные учебные планы.",
    )
    parser.add_argument("--log-level", default=Settings.log_level())
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    def command(name: str, handler: Command, help_text: str, spec: bool = True):
        sub = commands.add_parser(name, help=help_text)
        if spec:
            sub.add_argument("spec", help="Путь к документу задачи или fixture:<id>")
        sub.set_defaults(handler=handler)
        return sub

    command("validate", _validate, "Проверить документ задачи")

    sub = command("dsep", _dsep, "Проверить d-разделимость")
    sub.add_argument("--x", required=True)
    sub.add_argument("--y", required=True)
    sub.add_argument("--z", default="")
    sub.add_argument("--intervened", action="store_true", help="Проверять в G_π")

    sub = command("is-edit", _is_edit, "Проверить редактируемость Δ")
    sub.add_argument("--delta", required=True)
    sub.add_argument("--actions")

    sub = command("max-edit", _max_edit, "Найти наибольшее редактируемое множество")
    sub.add_argument("--actions")

    sub = command("list-edits", _list_edits, "Перечислить редактируемые множества")
    sub.add_argument("--actions")
    sub.add_argument("--limit", type=int)

    command("soluble", _soluble, "Проверить разрешимость задачи")
    command("relevance", _relevance, "Построить граф релевантности")

    sub = command("curriculum", _curriculum, "Построить причинный учебный план")
    sub.add_argument("--gen", default="shuffle", choices=sorted(GENERATORS))
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out")

    sub = command("train", _train, "Обучить политику по учебному плану")
    sub.add_argument("--curriculum")
    sub.add_argument("--gen", default="shuffle", choices=sorted(GENERATORS))
    sub.add_argument("--mode", default="exact", choices=LEARNERS)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--episodes", type=int, default=Settings.EPISODES)
    sub.add_argument("--policy-out")

    sub = command("eval", _eval, "Оценить политику")
    sub.add_argument("--policy", required=True)
    sub.add_argument("--episodes", type=int, default=0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--min", type=_fraction)
    sub.add_argument("--max", type=_fraction)

    sub = command("report", _report, "Нормированное IQM", spec=False)
    sub.add_argument("--iqm", type=_fractions, required=True)
    sub.add_argument("--min", type=_fraction, required=True)
    sub.add_argument("--max", type=_fraction, required=True)

    sub = command("fixture", _fixture, "Встроенная задача", spec=False)
    sub.add_argument("id")
    sub.add_argument("--emit", action="store_true")
    return parser


def _write(doc: dict) -> None:
    sys.stdout.write(Parser.dumps(doc))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Точка входа командной строки.

    Возвращает:
        int: Код завершения: 0 успех, 1 ошибка использования, 2 ошибка
        анализа, 3 превышение бюджета.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _write({"error": "usage", "message": str(exc)})
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if not exc.code else EXIT_USAGE

    level = str(args.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        _write({"error": "usage", "message": f"Неизвестный уровень логирования {level}"})
        return EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    errors: Dict[type, Tuple[str, int]] = {
        BudgetExceededError: ("budget", EXIT_BUDGET),
        CausalCurriculumError: ("analysis", EXIT_ANALYSIS),
        OSError: ("io", EXIT_ANALYSIS),
    }
    try:
        result, code = args.handler(args)
    except tuple(errors) as exc:
        kind, code = next(v for k, v in errors.items() if isinstance(exc, k))
        logger.error("%s: %s", type(exc).__name__, exc)
        _write({"error": kind, "kind": type(exc).__name__, "message": str(exc)})
        return code
    _write(result)
    return code
