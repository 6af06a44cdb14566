from .evaluate import (
    Detection,
    RelationParams,
    Verdict,
    aggregate,
    detection_from_dict,
    evaluate_image,
    format_report,
    oracle_detector,
    relation_holds,
    scene_for_record,
)
from .generate import (
    TASKS,
    PromptRecord,
    canonical_task,
    gen_prompts,
    record_from_dict,
)
from .vocab import Vocabulary, default_vocab, load_vocab

__all__ = [
    "Detection",
    "PromptRecord",
    "RelationParams",
    "TASKS",
    "Verdict",
    "Vocabulary",
    "aggregate",
    "canonical_task",
    "default_vocab",
    "detection_from_dict",
    "evaluate_image",
    "format_report",
    "gen_prompts",
    "load_vocab",
    "oracle_detector",
    "record_from_dict",
    "relation_holds",
    "scene_for_record",
]
