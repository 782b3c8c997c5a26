"""Desk-scale encoder with three decoders (structured points, region, content)."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import DECODERS, ModelConfig, TrainConfig
from .decode import Decoded, greedy_decode
from .infer import ParsedDocument, ParsedInstance, decode_points, infer_document
from .loss import STRUCTURAL_WEIGHT, Batch, TrainingTarget, collate, make_target, weighted_nll_loss
from .network import Decoder, GridEncoder, OmniModel, VisualEmbeddings, encode
from .train import (Example, TrainResult, prepare, stage1_exact_match, stage1_sequence,
                    teacher_forced_accuracy, train)

__all__ = [
    "Batch", "DECODERS", "Decoded", "Decoder", "Example", "GridEncoder", "ModelConfig", "OmniModel",
    "ParsedDocument", "ParsedInstance", "STRUCTURAL_WEIGHT", "TrainConfig", "TrainResult",
    "TrainingTarget", "VisualEmbeddings", "collate", "decode_points", "encode", "greedy_decode",
    "infer_document", "load_checkpoint", "make_target", "prepare", "save_checkpoint",
    "stage1_exact_match", "stage1_sequence", "teacher_forced_accuracy", "train", "weighted_nll_loss",
]
