"""Student query optimizer: distillation training and chat-completion serving."""

from .data import DataError, fingerprint, load_pairs
from .model import PRESETS, Seq2SeqStudent
from .serve import ServerHandle, build_app, serve
from .train import (
    LoadError,
    Student,
    StudentCheckpoint,
    TrainingDiverged,
    TrainSpec,
    load_student,
    train,
)
from .vocab import Vocab, tokenize

__version__ = "0.1.0"
