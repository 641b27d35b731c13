import json
import logging
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from Causal_curriculum.causal_diagram import CausalDiagram, NodeRole
from Causal_curriculum.curriculum import Curriculum, CurriculumStage
from Causal_curriculum.exceptions import SpecFormatError, TaskError
from Causal_curriculum.task_model import (
    DecisionRule,
    Edit,
    ExogenousVar,
    FiniteDomain,
    FiniteTask,
    Policy,
    ReplaceFunction,
    ReweightExogenous,
    Row,
    SetConstant,
    StructuralFunction,
    apply_edits,
    validate_task,
)

logger = logging.getLogger(__name__)

_ENDOGENOUS_ROLES = {"state": NodeRole.STATE, "reward": NodeRole.REWARD, "action": NodeRole.ACTION}


def _row_key(row: Sequence[Fraction]) -> str:
    return ",".join(str(v) for v in row)


def _parse_row(key: str, size: int, path: str) -> Row:
    parts = [] if key == "" else key.split(",")
    if len(parts) != size:
        raise SpecFormatError(path, f"Строка {key!r} должна содержать {size} значений")
    return tuple(_rational(p.strip(), path) for p in parts)


def _rational(value: Any, path: str) -> Fraction:
    if isinstance(value, bool) or isinstance(value, float):
        raise SpecFormatError(path, f"Ожидалась строка рационального числа, получено {value!r}")
    try:
        result = Fraction(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise SpecFormatError(path, f"Некорректное рациональное число {value!r}") from None
    return result


def _require(doc: Mapping, key: str, kind: type, path: str) -> Any:
    if key not in doc:
        raise SpecFormatError(f"{path}.{key}" if path else key, "Обязательное поле отсутствует")
    value = doc[key]
    if not isinstance(value, kind):
        raise SpecFormatError(
            f"{path}.{key}" if path else key,
            f"Ожидался тип {kind.__name__}, получено {type(value).__name__}",
        )
    return value


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFormatError("document", f"Синтаксическая ошибка JSON: {exc.msg}", exc.lineno) from None


def _domain(doc: Mapping, path: str) -> FiniteDomain:
    values = [_rational(v, f"{path}.domain") for v in _require(doc, "domain", list, path)]
    labels = doc.get("labels", [])
    try:
        return FiniteDomain(tuple(values), tuple(labels))
    except TaskError as exc:
        raise SpecFormatError(f"{path}.domain", str(exc)) from None


def _function_from_dict(name: str, doc: Mapping, path: str) -> StructuralFunction:
    parents = tuple(_require(doc, "parents", list, path))
    table = None
    if "table" in doc:
        raw = _require(doc, "table", dict, path)
        table = {
            _parse_row(k, len(parents), f"{path}.table"): _rational(v, f"{path}.table.{k}")
            for k, v in raw.items()
        }
    expression = doc.get("expression")
    if expression is not None and not isinstance(expression, str):
        raise SpecFormatError(f"{path}.expression", "Выражение должно быть строкой")
    if table is None and expression is None:
        raise SpecFormatError(path, "Нужно задать table или expression")
    try:
        return StructuralFunction(name, parents, table=table, expression=expression)
    except SpecFormatError:
        raise
    except TaskError as exc:
        raise SpecFormatError(path, str(exc)) from None


def _function_to_dict(function: StructuralFunction) -> dict:
    result: Dict[str, Any] = {"parents": list(function.parents)}
    if function.expression is not None:
        result["expression"] = function.expression.to_text()
    else:
        assert function.table is not None
        result["table"] = {_row_key(k): str(v) for k, v in function.table.items()}
    return result


def parse_task(doc: Union[str, Mapping], validate: bool = True) -> FiniteTask:
    """Построить FiniteTask из документа задачи.

    Аргументы:
        doc (Union[str, Mapping]): JSON-текст или уже разобранное дерево.
        validate (bool): Проверить задачу через validate_task.

    Возвращает:
        FiniteTask: Задача.

    Исключения:
        SpecFormatError: При нарушении схемы (с путём элемента) или если
            задача не проходит проверку.
    """
    if isinstance(doc, str):
        doc = _load_json(doc)
    if not isinstance(doc, Mapping):
        raise SpecFormatError("document", "Документ задачи должен быть объектом")

    variables = _require(doc, "variables", dict, "")
    roles: Dict[str, NodeRole] = {}
    domains: Dict[str, FiniteDomain] = {}
    for name, spec in variables.items():
        path = f"variables.{name}"
        if not isinstance(spec, dict):
            raise SpecFormatError(path, "Описание переменной должно быть объектом")
        role = spec.get("role", "state")
        if role not in _ENDOGENOUS_ROLES:
            raise SpecFormatError(f"{path}.role", f"Неизвестная роль {role!r}")
        roles[name] = _ENDOGENOUS_ROLES[role]
        domains[name] = _domain(spec, path)

    exogenous = []
    for name, spec in doc.get("exogenous", {}).items():
        path = f"exogenous.{name}"
        probabilities = [
            _rational(p, f"{path}.probabilities")
            for p in _require(spec, "probabilities", list, path)
        ]
        exogenous.append(ExogenousVar(name, _domain(spec, path), tuple(probabilities)))

    functions = {}
    directed = []
    for name, spec in doc.get("functions", {}).items():
        path = f"functions.{name}"
        if name not in roles:
            raise SpecFormatError(path, f"Функция для необъявленной переменной {name}")
        function = _function_from_dict(name, spec, path)
        functions[name] = function
        directed += [(p, name) for p in function.parents if p in variables]

    inputs: Dict[str, List[str]] = {}
    for index, spec in enumerate(_require(doc, "actions", list, "")):
        path = f"actions[{index}]"
        name = _require(spec, "name", str, path)
        if roles.get(name) != NodeRole.ACTION:
            raise SpecFormatError(f"{path}.name", f"{name} не объявлено как действие")
        inputs[name] = list(_require(spec, "inputs", list, path))
        directed += [(p, name) for p in spec.get("parents", inputs[name])]

    confounders = []
    for index, pair in enumerate(doc.get("confounders", [])):
        if not isinstance(pair, list) or len(pair) != 2:
            raise SpecFormatError(f"confounders[{index}]", "Ожидалась пара вершин")
        confounders.append(tuple(pair))

    rewards = tuple(_require(doc, "rewards", list, ""))
    horizon = doc.get("horizon")
    if horizon is not None and (not isinstance(horizon, int) or isinstance(horizon, bool)):
        raise SpecFormatError("horizon", "Горизонт должен быть целым числом")

    diagram = CausalDiagram(roles, directed, confounders, inputs)
    task = FiniteTask(
        diagram=diagram,
        domains=domains,
        exogenous=tuple(exogenous),
        functions=functions,
        reward_nodes=rewards,
        discount=_rational(doc.get("discount", "1"), "discount"),
        horizon=horizon,
        name=str(doc.get("name", "task")),
    )
    if validate:
        report = validate_task(task)
        if not report.valid:
            raise SpecFormatError("task", "; ".join(report.violations))
        for warning in report.warnings:
            logger.warning(warning)
    return task


def emit_task(t: FiniteTask) -> dict:
    """Канонический документ задачи: рациональные числа в несократимом виде."""
    roles = t.diagram.roles
    variables = {}
    for name in sorted(t.domains):
        domain = t.domains[name]
        entry: Dict[str, Any] = {
            "role": roles[name].value,
            "domain": [str(v) for v in domain.values],
        }
        if domain.labels:
            entry["labels"] = list(domain.labels)
        variables[name] = entry
    actions = []
    for action in t.actions:
        entry = {"name": action, "inputs": list(t.inputs_of(action))}
        parents = list(t.diagram.parents(action))
        if sorted(parents) != sorted(entry["inputs"]):
            entry["parents"] = parents
        actions.append(entry)
    doc = {
        "format": "task",
        "name": t.name,
        "variables": variables,
        "exogenous": {
            var.name: {
                "domain": [str(v) for v in var.domain.values],
                "probabilities": [str(p) for p in var.probabilities],
            }
            for var in t.exogenous
        },
        "confounders": [list(p) for p in t.diagram.bidirected_edges],
        "functions": {n: _function_to_dict(f) for n, f in sorted(t.functions.items())},
        "actions": actions,
        "rewards": list(t.reward_nodes),
        "discount": str(t.discount),
    }
    if t.horizon is not None:
        doc["horizon"] = t.horizon
    return doc


def policy_to_dict(policy: Policy) -> dict:
    rules = {}
    for action, rule in policy.rules.items():
        rules[action] = {
            "inputs": list(rule.inputs),
            "rows": {
                _row_key(row): {str(v): str(p) for v, p in sorted(dist.items()) if p > 0}
                for row, dist in sorted(rule.rows.items())
            },
        }
    return {"format": "policy", "provenance": policy.provenance, "rules": rules}


def policy_from_dict(doc: Mapping, task: Optional[FiniteTask] = None) -> Policy:
    """Разобрать документ политики; при заданной задаче проверить покрытие."""
    rules = {}
    for action, spec in _require(doc, "rules", dict, "").items():
        path = f"rules.{action}"
        inputs = tuple(_require(spec, "inputs", list, path))
        rows = {}
        for key, dist in _require(spec, "rows", dict, path).items():
            row = _parse_row(key, len(inputs), f"{path}.rows")
            rows[row] = {
                _rational(v, f"{path}.rows.{key}"): _rational(p, f"{path}.rows.{key}")
                for v, p in dist.items()
            }
        rules[action] = DecisionRule(action, inputs, rows)
    policy = Policy(rules, str(doc.get("provenance", "exact")))
    if task is not None:
        try:
            policy.check(task)
        except TaskError as exc:
            raise SpecFormatError("rules", str(exc)) from None
    return policy


def edit_to_dict(edit: Edit) -> dict:
    if isinstance(edit, SetConstant):
        return {"kind": "set_constant", "node": edit.node, "value": str(edit.value)}
    if isinstance(edit, ReplaceFunction):
        return {
            "kind": "replace_function",
            "node": edit.node,
            "function": _function_to_dict(edit.function),
        }
    return {
        "kind": "reweight_exogenous",
        "name": edit.name,
        "probabilities": [str(p) for p in edit.probabilities],
    }


def edit_from_dict(doc: Mapping, path: str = "edit") -> Edit:
    kind = _require(doc, "kind", str, path)
    if kind == "set_constant":
        return SetConstant(_require(doc, "node", str, path), _rational(doc.get("value"), f"{path}.value"))
    if kind == "replace_function":
        node = _require(doc, "node", str, path)
        function = _function_from_dict(node, _require(doc, "function", dict, path), f"{path}.function")
        return ReplaceFunction(node, function)
    if kind == "reweight_exogenous":
        probabilities = [
            _rational(p, f"{path}.probabilities")
            for p in _require(doc, "probabilities", list, path)
        ]
        return ReweightExogenous(_require(doc, "name", str, path), tuple(probabilities))
    raise SpecFormatError(f"{path}.kind", f"Неизвестный вид правки {kind!r}")


def curriculum_to_dict(c: Curriculum) -> dict:
    return {
        "format": "curriculum",
        "target": c.target.name,
        "stages": [
            {
                "actions": list(stage.actions),
                "delta": list(stage.delta),
                "edits": [edit_to_dict(e) for e in stage.source.edits],
            }
            for stage in c.stages
        ],
    }


def curriculum_from_dict(doc: Mapping, target: FiniteTask) -> Curriculum:
    """Восстановить учебный план, повторно применив правки к целевой задаче."""
    stages = []
    for index, spec in enumerate(_require(doc, "stages", list, "")):
        path = f"stages[{index}]"
        edits = [
            edit_from_dict(e, f"{path}.edits[{k}]")
            for k, e in enumerate(_require(spec, "edits", list, path))
        ]
        try:
            source = apply_edits(target, edits)
        except TaskError as exc:
            raise SpecFormatError(f"{path}.edits", str(exc)) from None
        stages.append(
            CurriculumStage(
                source,
                tuple(_require(spec, "actions", list, path)),
                tuple(spec.get("delta", [])),
            )
        )
    return Curriculum(target, tuple(stages))


class Parser(ABC):
    """Абстрактный базовый класс для чтения и записи документов.

    Дочерние классы реализуют parse и emit для своего формата.
    """

    @abstractmethod
    def parse(self, text: str) -> Any:
        """Распарсить текст документа.

        Аргументы:
            text (str): Необработанный текст документа.

        Возвращает:
            Объект предметной области.
        """
        pass

    @abstractmethod
    def emit(self, obj: Any) -> str:
        """Записать объект в канонический текст документа."""
        pass

    @staticmethod
    def dumps(doc: Any) -> str:
        return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class JsonTaskParser(Parser):
    """Парсер документов задач в формате JSON."""

    def __init__(self, validate: bool = True):
        self.validate = validate

    def parse(self, text: str) -> FiniteTask:
        return parse_task(text, validate=self.validate)

    def emit(self, obj: FiniteTask) -> str:
        return self.dumps(emit_task(obj))


class PolicyParser(Parser):
    """Парсер файлов политик; проверяет покрытие пространства политик задачи."""

    def __init__(self, task: Optional[FiniteTask] = None):
        self.task = task

    def parse(self, text: str) -> Policy:
        doc = _load_json(text)
        if not isinstance(doc, Mapping):
            raise SpecFormatError("document", "Документ политики должен быть объектом")
        return policy_from_dict(doc, self.task)

    def emit(self, obj: Policy) -> str:
        return self.dumps(policy_to_dict(obj))


class CurriculumParser(Parser):
    """Парсер файла curriculum.json для заданной целевой задачи."""

    def __init__(self, target: FiniteTask):
        self.target = target

    def parse(self, text: str) -> Curriculum:
        doc = _load_json(text)
        if not isinstance(doc, Mapping):
            raise SpecFormatError("document", "Документ учебного плана должен быть объектом")
        return curriculum_from_dict(doc, self.target)

    def emit(self, obj: Curriculum) -> str:
        return self.dumps(curriculum_to_dict(obj))
