"""blmkit: BLM puzzle generation and embedding-probing solvers for Italian
agreement and verb-alternation tasks."""

from .data import AnswerLabel, BlmInstance, Chunk, LexType, Number, Role, SentenceRecord, Task

__version__ = "0.1.0"

__all__ = [
    "AnswerLabel", "BlmInstance", "Chunk", "LexType", "Number", "Role",
    "SentenceRecord", "Task", "__version__",
]
