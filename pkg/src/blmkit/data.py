"""Core BLM domain types and the context/answer templates for the three tasks.

A BLM problem is a 7-sentence context that follows hidden structural rules,
paired with 8 candidate completions of which exactly one is correct.  The
three tasks covered here are Italian subject-verb agreement (with two
attractor PPs) and the two transitive/intransitive alternations: change of
state ("caus") and object drop ("od").

Everything in this module is a pure value or a pure function over values;
surface realization from a lexicon lives in :mod:`blmkit.generator`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple


class Task(Enum):
    """The three BLM tasks."""

    AGREEMENT = "agreement"
    CAUS = "caus"
    OD = "od"

    @classmethod
    def from_string(cls, value: str) -> "Task":
        aliases = {
            "agreement": cls.AGREEMENT, "agr": cls.AGREEMENT,
            "caus": cls.CAUS, "od": cls.OD,
        }
        key = value.strip().lower()
        if key not in aliases:
            raise ValueError(f"unknown task {value!r}")
        return aliases[key]


ALTERNATION_TASKS = (Task.CAUS, Task.OD)


class LexType(Enum):
    """Lexical variability of a generated instance.

    TYPE_I keeps all lexical material constant within a context, TYPE_II
    keeps only the verb constant, TYPE_III lets every word vary.
    """

    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"

    @classmethod
    def from_string(cls, value: str) -> "LexType":
        key = value.strip().upper().removeprefix("TYPE").strip("_- ")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown lexicalisation type {value!r}")


class Role(Enum):
    """Chunk roles over both task families; values are the tag spellings."""

    NP_SUBJ = "NP"
    PP1 = "PP1"
    PP2 = "PP2"
    VP = "VP"
    AG = "Ag"
    PAT = "Pat"
    AKT_V = "Akt"
    PASS_V = "Pass"
    P_NP = "P-NP"
    DA_NP = "da-NP"
    DA_AG = "da-Ag"
    DA_PAT = "da-Pat"


class Number(Enum):
    SG = "sg"
    PL = "pl"
    NA = "na"


class AnswerLabel(Enum):
    """Answer-set labels: the correct answer plus seven contrastive errors.

    Agreement uses Coord/WNA/WN1/WN2 (sequence errors) and AEV/AEN1/AEN2
    (grammatical errors).  The alternations use codes combining the violated
    rule kind (I/E/R internal/external/relational, and combinations) with
    the resulting clause shape (Int/Pass/Trans/WrBy).
    """

    CORRECT = "Correct"
    COORD = "Coord"
    WNA = "WNA"
    WN1 = "WN1"
    WN2 = "WN2"
    AEV = "AEV"
    AEN1 = "AEN1"
    AEN2 = "AEN2"
    I_INT = "I-Int"
    ER_PASS = "ER-Pass"
    IER_PASS = "IER-Pass"
    R_TRANS = "R-Trans"
    IR_TRANS = "IR-Trans"
    E_WRBY = "E-WrBy"
    IE_WRBY = "IE-WrBy"


class ChunkSpec(NamedTuple):
    """A surface-free template cell: role, grammatical number, coordination."""

    role: Role
    number: Number = Number.NA
    coord: bool = False


@dataclass(frozen=True)
class Chunk:
    """A realized phrase unit: a ChunkSpec plus its surface string.

    `coord` marks the coordinated attractor of the agreement Coord answer
    (surface "e" + PP2); it keeps that pattern distinguishable from the
    correct one.
    """

    role: Role
    number: Number
    surface: str
    coord: bool = False

    @property
    def spec(self) -> ChunkSpec:
        return ChunkSpec(self.role, self.number, self.coord)


def pattern_tag(chunks) -> str:
    """Canonical tag for a chunk sequence, e.g. ``"NP.pl PP1.sg VP.pl"``.

    Chunks without a grammatical number render as the bare role name
    (``"Pat Pass da-Ag P-NP"``); a coordinated chunk gets an ``e+`` prefix.
    Equal chunk structures always yield equal tags, and the tag separates
    every pattern of the three task templates.
    """
    if not len(chunks):
        raise ValueError("pattern_tag requires at least one chunk")
    parts = []
    for c in chunks:
        seg = ("e+" if c.coord else "") + c.role.value
        if c.number != Number.NA:
            seg += "." + c.number.value
        parts.append(seg)
    return " ".join(parts)


def spec_tag(specs) -> str:
    """pattern_tag over surface-free ChunkSpecs."""
    return pattern_tag(specs)


@dataclass(frozen=True)
class SentenceRecord:
    """A surface sentence with its structural metadata and a stable id.

    The id is a content hash of (task, pattern tag, text), so identical
    sentences generated twice collide into one record while different
    sentences essentially never share an id.
    """

    id: str
    text: str
    chunks: tuple[Chunk, ...]
    task: Task
    pattern_tag: str

    @classmethod
    def build(cls, task: Task, chunks: tuple[Chunk, ...]) -> "SentenceRecord":
        text = render_text(chunks)
        tag = pattern_tag(chunks)
        digest = hashlib.sha1(f"{task.value}|{tag}|{text}".encode("utf-8")).hexdigest()
        return cls(id=digest[:16], text=text, chunks=chunks, task=task, pattern_tag=tag)


def render_text(chunks) -> str:
    """Join chunk surfaces into a sentence, capitalizing the first letter."""
    text = " ".join(c.surface for c in chunks)
    return text[:1].upper() + text[1:]


@dataclass(frozen=True)
class BlmInstance:
    """One BLM problem: 7 context sentences and 8 labeled candidates."""

    context: tuple[SentenceRecord, ...]
    answers: tuple[tuple[SentenceRecord, AnswerLabel], ...]
    correct_index: int
    task: Task
    lex_type: LexType
    group_key: str

    def __post_init__(self) -> None:
        if len(self.context) != 7:
            raise ValueError(f"context must have 7 sentences, got {len(self.context)}")
        if len(self.answers) != 8:
            raise ValueError(f"answer set must have 8 candidates, got {len(self.answers)}")
        labels = [label for _, label in self.answers]
        if labels.count(AnswerLabel.CORRECT) != 1:
            raise ValueError("answer set must contain exactly one Correct candidate")
        if not 0 <= self.correct_index < 8:
            raise ValueError(f"correct_index out of range: {self.correct_index}")
        if labels[self.correct_index] is not AnswerLabel.CORRECT:
            raise ValueError("correct_index does not point at the Correct candidate")
        if not self.group_key:
            raise ValueError("group_key must be non-empty")

    @property
    def correct_answer(self) -> SentenceRecord:
        return self.answers[self.correct_index][0]

    @property
    def all_sentences(self) -> tuple[SentenceRecord, ...]:
        return self.context + tuple(rec for rec, _ in self.answers)

    def label_set(self) -> set[AnswerLabel]:
        return {label for _, label in self.answers}


# --- agreement templates -------------------------------------------------
#
# Context rows cycle the subject number while attractor PPs vary; rows 1-4
# carry one attractor (PP1), rows 5-7 add a second (PP2).  The subject and
# the verb agree in every row.

_SG = Number.SG
_PL = Number.PL


def _agr_row(np_n: Number, pp1_n: Number, pp2_n: Number | None, vp_n: Number,
             *, pp2_role: Role = Role.PP2, coord: bool = False) -> tuple[ChunkSpec, ...]:
    row = [ChunkSpec(Role.NP_SUBJ, np_n), ChunkSpec(Role.PP1, pp1_n)]
    if pp2_n is not None:
        row.append(ChunkSpec(pp2_role, pp2_n, coord))
    row.append(ChunkSpec(Role.VP, vp_n))
    return tuple(row)


def agreement_context_pattern() -> list[tuple[ChunkSpec, ...]]:
    """The 7 agreement context rows as (NP, PP1[, PP2], VP) chunk specs."""
    return [
        _agr_row(_SG, _SG, None, _SG),
        _agr_row(_PL, _SG, None, _PL),
        _agr_row(_SG, _PL, None, _SG),
        _agr_row(_PL, _PL, None, _PL),
        _agr_row(_SG, _SG, _SG, _SG),
        _agr_row(_PL, _SG, _SG, _PL),
        _agr_row(_SG, _PL, _SG, _SG),
    ]


def agreement_answer_patterns() -> list[tuple[tuple[ChunkSpec, ...], AnswerLabel]]:
    """The 8 labeled agreement answer rows; the correct one continues the
    context with NP-pl PP1-pl PP2-sg VP-pl."""
    return [
        (_agr_row(_PL, _PL, _SG, _PL), AnswerLabel.CORRECT),
        (_agr_row(_PL, _PL, _SG, _PL, coord=True), AnswerLabel.COORD),
        (_agr_row(_PL, _PL, None, _PL), AnswerLabel.WNA),
        (_agr_row(_PL, _SG, _SG, _PL, pp2_role=Role.PP1), AnswerLabel.WN1),
        (_agr_row(_PL, _PL, _PL, _PL), AnswerLabel.WN2),
        (_agr_row(_PL, _PL, _PL, _SG), AnswerLabel.AEV),
        (_agr_row(_PL, _SG, _PL, _SG), AnswerLabel.AEN1),
        (_agr_row(_PL, _PL, _SG, _SG), AnswerLabel.AEN2),
    ]


# --- alternation templates -----------------------------------------------
#
# Rows 1-6 are shared between caus and od: active transitive, then passive
# with and without the agentive by-phrase, alternating every two rows
# between a plain PP adjunct (P-NP) and a "da"-PP adjunct (da-NP).  Row 7
# is the intransitive and is the only context difference: the patient stays
# subject under caus, the agent under od.

def _alt_row(*roles: Role) -> tuple[ChunkSpec, ...]:
    return tuple(ChunkSpec(r) for r in roles)


_ALT_SHARED_CONTEXT = [
    _alt_row(Role.AG, Role.AKT_V, Role.PAT, Role.P_NP),
    _alt_row(Role.AG, Role.AKT_V, Role.PAT, Role.DA_NP),
    _alt_row(Role.PAT, Role.PASS_V, Role.DA_AG, Role.P_NP),
    _alt_row(Role.PAT, Role.PASS_V, Role.DA_AG, Role.DA_NP),
    _alt_row(Role.PAT, Role.PASS_V, Role.P_NP),
    _alt_row(Role.PAT, Role.PASS_V, Role.DA_NP),
]

_ALT_ANSWER_STRUCTURES = [
    _alt_row(Role.PAT, Role.AKT_V, Role.DA_NP),
    _alt_row(Role.AG, Role.AKT_V, Role.DA_NP),
    _alt_row(Role.PAT, Role.PASS_V, Role.DA_AG),
    _alt_row(Role.AG, Role.PASS_V, Role.DA_PAT),
    _alt_row(Role.PAT, Role.AKT_V, Role.AG),
    _alt_row(Role.AG, Role.AKT_V, Role.PAT),
    _alt_row(Role.PAT, Role.AKT_V, Role.DA_AG),
    _alt_row(Role.AG, Role.AKT_V, Role.DA_PAT),
]

_CAUS_ANSWER_LABELS = [
    AnswerLabel.CORRECT, AnswerLabel.I_INT,
    AnswerLabel.ER_PASS, AnswerLabel.IER_PASS,
    AnswerLabel.R_TRANS, AnswerLabel.IR_TRANS,
    AnswerLabel.E_WRBY, AnswerLabel.IE_WRBY,
]

# Same eight structures, relabeled: what is a contrastive error under caus
# is the correct completion under od, and vice versa.
_OD_ANSWER_LABELS = [
    AnswerLabel.I_INT, AnswerLabel.CORRECT,
    AnswerLabel.IER_PASS, AnswerLabel.ER_PASS,
    AnswerLabel.IR_TRANS, AnswerLabel.R_TRANS,
    AnswerLabel.IE_WRBY, AnswerLabel.E_WRBY,
]


def _require_alternation(task: Task) -> None:
    if task not in ALTERNATION_TASKS:
        raise ValueError(f"alternation templates are defined for caus/od, not {task.value}")


def alternation_context_pattern(task: Task) -> list[tuple[ChunkSpec, ...]]:
    """The 7 context rows for caus or od; only row 7 differs between them."""
    _require_alternation(task)
    subject = Role.PAT if task is Task.CAUS else Role.AG
    return list(_ALT_SHARED_CONTEXT) + [_alt_row(subject, Role.AKT_V, Role.P_NP)]


def alternation_answer_patterns(task: Task) -> list[tuple[tuple[ChunkSpec, ...], AnswerLabel]]:
    """The 8 labeled answer rows for caus or od; identical structures with
    permuted labels (the correct answer sits at row 1 for caus, row 2 for od)."""
    _require_alternation(task)
    labels = _CAUS_ANSWER_LABELS if task is Task.CAUS else _OD_ANSWER_LABELS
    return list(zip(_ALT_ANSWER_STRUCTURES, labels))


def task_label_set(task: Task) -> set[AnswerLabel]:
    """The full 8-label answer set a task's instances must carry."""
    if task is Task.AGREEMENT:
        return {label for _, label in agreement_answer_patterns()}
    return {label for _, label in alternation_answer_patterns(task)}
