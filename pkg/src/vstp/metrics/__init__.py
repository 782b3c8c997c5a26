from .kie import FieldScore, entity_tree, field_f1, nted_accuracy
from .spotting import EvalReport, MODES, correct_with_lexicon, match_instances, spotting_eval
from .teds import html_to_tree, s_teds, teds
from .tree_edit import (TedsTree, TreeNode, levenshtein, normalized_levenshtein,
                        teds_rename_cost, tree_edit_distance)

__all__ = [
    "EvalReport", "FieldScore", "MODES", "TedsTree", "TreeNode", "correct_with_lexicon",
    "entity_tree", "field_f1", "html_to_tree", "levenshtein", "match_instances",
    "normalized_levenshtein", "nted_accuracy", "s_teds", "spotting_eval", "teds",
    "teds_rename_cost", "tree_edit_distance",
]
