from Causal_curriculum.causal_diagram import (
    CausalDiagram,
    NodeRole,
    SeparationQuery,
    d_separated,
    validate_diagram,
)
from Causal_curriculum.curriculum import (
    Curriculum,
    CurriculumStage,
    causal_curriculum_learning,
    check_causally_aligned,
    curriculum_learning,
    find_causal_curriculum,
)
from Causal_curriculum.editability import (
    EditabilityQuery,
    find_edit,
    find_max_edit,
    is_edit,
    is_soluble,
    list_edits,
    relevance_graph,
)
from Causal_curriculum.fixtures import load_fixture
from Causal_curriculum.parsers import JsonTaskParser, PolicyParser, emit_task, parse_task
from Causal_curriculum.planner import q_learn, solve_optimal
from Causal_curriculum.task_model import FiniteTask, Policy, apply_edits, expected_reward

__all__ = [
    "CausalDiagram",
    "Curriculum",
    "CurriculumStage",
    "EditabilityQuery",
    "FiniteTask",
    "JsonTaskParser",
    "NodeRole",
    "Policy",
    "PolicyParser",
    "SeparationQuery",
    "apply_edits",
    "causal_curriculum_learning",
    "check_causally_aligned",
    "curriculum_learning",
    "d_separated",
    "emit_task",
    "expected_reward",
    "find_causal_curriculum",
    "find_edit",
    "find_max_edit",
    "is_edit",
    "is_soluble",
    "list_edits",
    "load_fixture",
    "parse_task",
    "q_learn",
    "relevance_graph",
    "solve_optimal",
    "validate_diagram",
]
