"""Expand the task templates into concrete datasets.

Generation is a two-step affair: draw lexical material for each of the 15
template rows (7 context + 8 answers) under the requested lexicalisation
type, then realize every row's chunk specs against its draw.  The draw/build
split is public so callers can build structurally paired instances (e.g. a
caus and an od instance over identical material).

Splitting assigns whole groups to parts so train/dev/test never share a
group key: the correct-answer sentence for agreement, the correct verb's
lemma for the alternations.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .data import (
    AnswerLabel,
    BlmInstance,
    Chunk,
    ChunkSpec,
    LexType,
    Number,
    Role,
    SentenceRecord,
    Task,
    agreement_answer_patterns,
    agreement_context_pattern,
    alternation_answer_patterns,
    alternation_context_pattern,
    pattern_tag,
)
from .lexicon import (
    AgreementVerb,
    AlternationVerb,
    InadequateLexiconError,
    Lexicon,
    NounEntry,
    PpModifier,
    contract_da,
)

ROWS_PER_INSTANCE = 15  # 7 context rows + 8 answer rows


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the offending line number."""


class SplitError(ValueError):
    pass


# --- lexical draws --------------------------------------------------------

@dataclass(frozen=True)
class AgreementDraw:
    noun: NounEntry
    pp1: PpModifier
    pp2: PpModifier
    verb: AgreementVerb


@dataclass(frozen=True)
class AlternationDraw:
    verb: AlternationVerb
    agent: str
    patient: str
    p_np: str
    da_np: str


def draw_agreement_material(lexicon: Lexicon, lex_type: LexType,
                            rng: random.Random) -> list[AgreementDraw]:
    """One draw per template row.  Type I repeats a single draw, type II
    fixes the verb and redraws the nominals per row, type III redraws all."""
    lexicon.validate_for(Task.AGREEMENT)
    pp1s, pp2s = lexicon.pp_for(Role.PP1), lexicon.pp_for(Role.PP2)

    def fresh(verb: AgreementVerb | None) -> AgreementDraw:
        return AgreementDraw(
            noun=rng.choice(lexicon.nouns),
            pp1=rng.choice(pp1s),
            pp2=rng.choice(pp2s),
            verb=verb if verb is not None else rng.choice(lexicon.agr_verbs),
        )

    if lex_type is LexType.TYPE_I:
        return [fresh(None)] * ROWS_PER_INSTANCE
    fixed_verb = rng.choice(lexicon.agr_verbs) if lex_type is LexType.TYPE_II else None
    return [fresh(fixed_verb) for _ in range(ROWS_PER_INSTANCE)]


def draw_alternation_material(lexicon: Lexicon, task: Task, lex_type: LexType,
                              rng: random.Random) -> list[AlternationDraw]:
    lexicon.validate_for(task)
    verbs = lexicon.alt_verbs_for(task)

    def fresh(verb: AlternationVerb | None) -> AlternationDraw:
        return AlternationDraw(
            verb=verb if verb is not None else rng.choice(verbs),
            agent=rng.choice(lexicon.agents),
            patient=rng.choice(lexicon.patients),
            p_np=rng.choice(lexicon.p_nps),
            da_np=rng.choice(lexicon.da_nps),
        )

    if lex_type is LexType.TYPE_I:
        return [fresh(None)] * ROWS_PER_INSTANCE
    fixed_verb = rng.choice(verbs) if lex_type is LexType.TYPE_II else None
    return [fresh(fixed_verb) for _ in range(ROWS_PER_INSTANCE)]


# --- realization ----------------------------------------------------------

def _realize_agreement_chunk(spec: ChunkSpec, draw: AgreementDraw) -> Chunk:
    if spec.role is Role.NP_SUBJ:
        surface = draw.noun.sg if spec.number is Number.SG else draw.noun.pl
    elif spec.role is Role.PP1:
        surface = draw.pp1.sg if spec.number is Number.SG else draw.pp1.pl
    elif spec.role is Role.PP2:
        surface = draw.pp2.sg if spec.number is Number.SG else draw.pp2.pl
    elif spec.role is Role.VP:
        surface = draw.verb.sg_form if spec.number is Number.SG else draw.verb.pl_form
    else:
        raise ValueError(f"role {spec.role} has no agreement realization")
    if spec.coord:
        surface = "e " + surface
    return Chunk(spec.role, spec.number, surface, spec.coord)


def _realize_alternation_row(specs: tuple[ChunkSpec, ...],
                             draw: AlternationDraw) -> tuple[Chunk, ...]:
    chunks = []
    for i, spec in enumerate(specs):
        if spec.role is Role.AG:
            surface = draw.agent
        elif spec.role is Role.PAT:
            surface = draw.patient
        elif spec.role is Role.AKT_V:
            # Transitive active only when a bare argument NP follows the verb.
            next_role = specs[i + 1].role if i + 1 < len(specs) else None
            transitive = next_role in (Role.AG, Role.PAT)
            surface = draw.verb.active_form if transitive else draw.verb.intransitive_form
        elif spec.role is Role.PASS_V:
            surface = draw.verb.passive_form
        elif spec.role is Role.P_NP:
            surface = draw.p_np
        elif spec.role is Role.DA_NP:
            surface = draw.da_np
        elif spec.role is Role.DA_AG:
            surface = contract_da(draw.agent)
        elif spec.role is Role.DA_PAT:
            surface = contract_da(draw.patient)
        else:
            raise ValueError(f"role {spec.role} has no alternation realization")
        chunks.append(Chunk(spec.role, spec.number, surface, spec.coord))
    return tuple(chunks)


def build_agreement_instance(lex_type: LexType,
                             draws: list[AgreementDraw]) -> BlmInstance:
    if len(draws) != ROWS_PER_INSTANCE:
        raise ValueError(f"need {ROWS_PER_INSTANCE} row draws, got {len(draws)}")
    context = tuple(
        SentenceRecord.build(Task.AGREEMENT,
                             tuple(_realize_agreement_chunk(s, draws[i]) for s in row))
        for i, row in enumerate(agreement_context_pattern())
    )
    answers = []
    for j, (row, label) in enumerate(agreement_answer_patterns()):
        draw = draws[7 + j]
        rec = SentenceRecord.build(
            Task.AGREEMENT, tuple(_realize_agreement_chunk(s, draw) for s in row))
        answers.append((rec, label))
    correct_index = next(i for i, (_, l) in enumerate(answers) if l is AnswerLabel.CORRECT)
    return BlmInstance(
        context=context,
        answers=tuple(answers),
        correct_index=correct_index,
        task=Task.AGREEMENT,
        lex_type=lex_type,
        group_key=answers[correct_index][0].text,
    )


def build_alternation_instance(task: Task, lex_type: LexType,
                               draws: list[AlternationDraw]) -> BlmInstance:
    if len(draws) != ROWS_PER_INSTANCE:
        raise ValueError(f"need {ROWS_PER_INSTANCE} row draws, got {len(draws)}")
    context = tuple(
        SentenceRecord.build(task, _realize_alternation_row(row, draws[i]))
        for i, row in enumerate(alternation_context_pattern(task))
    )
    answers = []
    for j, (row, label) in enumerate(alternation_answer_patterns(task)):
        rec = SentenceRecord.build(task, _realize_alternation_row(row, draws[7 + j]))
        answers.append((rec, label))
    correct_index = next(i for i, (_, l) in enumerate(answers) if l is AnswerLabel.CORRECT)
    return BlmInstance(
        context=context,
        answers=tuple(answers),
        correct_index=correct_index,
        task=task,
        lex_type=lex_type,
        group_key=draws[7 + correct_index].verb.lemma,
    )


def generate(task: Task, lex_type: LexType, lexicon: Lexicon,
             count: int, seed: int) -> list[BlmInstance]:
    """Generate ``count`` instances, deterministic in ``seed``.

    Each instance gets its own derived RNG stream, so generation order (or
    parallel expansion) cannot change the output.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    lexicon.validate_for(task)
    instances = []
    for i in range(count):
        rng = random.Random(f"{seed}:{task.value}:{lex_type.value}:{i}")
        if task is Task.AGREEMENT:
            draws = draw_agreement_material(lexicon, lex_type, rng)
            instances.append(build_agreement_instance(lex_type, draws))
        else:
            draws = draw_alternation_material(lexicon, task, lex_type, rng)
            instances.append(build_alternation_instance(task, lex_type, draws))
    return instances


# --- splitting ------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    """Proportional weights for train/dev/test plus the grouping convention.

    Ratios are weights, not percentages (the conventional 90:20:10 sums to
    120); they are normalized before apportioning whole groups.
    """

    ratios: tuple[float, float, float] = (90.0, 20.0, 10.0)
    group_field: str = "auto"  # "correct-answer" | "verb-lemma" | "auto"

    def __post_init__(self) -> None:
        if any(r < 0 for r in self.ratios) or sum(self.ratios) <= 0:
            raise ValueError(f"ratios must be non-negative with positive sum: {self.ratios}")


def apportion(total: int, weights: tuple[float, ...]) -> list[int]:
    """Largest-remainder apportionment of ``total`` seats over ``weights``;
    every positive-weight part is guaranteed at least one seat when enough
    seats exist."""
    norm = sum(weights)
    quotas = [total * w / norm for w in weights]
    seats = [int(q) for q in quotas]
    remainders = sorted(range(len(weights)), key=lambda i: (quotas[i] - seats[i], weights[i]), reverse=True)
    for i in remainders[: total - sum(seats)]:
        seats[i] += 1
    nonzero = [i for i, w in enumerate(weights) if w > 0]
    if total >= len(nonzero):
        for i in nonzero:
            if seats[i] == 0:
                donor = max(range(len(seats)), key=lambda j: seats[j])
                seats[donor] -= 1
                seats[i] += 1
    return seats


def split(instances: list[BlmInstance], spec: SplitSpec,
          seed: int) -> tuple[list[BlmInstance], list[BlmInstance], list[BlmInstance]]:
    """Partition instances into train/dev/test with disjoint group keys."""
    groups: dict[str, list[BlmInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.group_key, []).append(inst)
    n_parts = sum(1 for r in spec.ratios if r > 0)
    if len(groups) < n_parts:
        raise SplitError(
            f"cannot split {len(groups)} group(s) into {n_parts} disjoint parts")
    keys = sorted(groups)
    random.Random(f"{seed}:split").shuffle(keys)
    seats = apportion(len(keys), spec.ratios)
    parts: list[list[BlmInstance]] = []
    start = 0
    for n in seats:
        part_keys = keys[start:start + n]
        start += n
        parts.append([inst for k in part_keys for inst in groups[k]])
    train, dev, test = parts
    return train, dev, test


# --- (de)serialization ----------------------------------------------------

def _record_to_dict(rec: SentenceRecord) -> dict:
    return {
        "id": rec.id,
        "text": rec.text,
        "tag": rec.pattern_tag,
        "chunks": [
            {"role": c.role.value, "number": c.number.value,
             "surface": c.surface, "coord": c.coord}
            for c in rec.chunks
        ],
    }


_ROLE_BY_VALUE = {r.value: r for r in Role}
_NUMBER_BY_VALUE = {n.value: n for n in Number}
_LABEL_BY_VALUE = {l.value: l for l in AnswerLabel}


def _record_from_dict(d: dict, task: Task) -> SentenceRecord:
    chunks = tuple(
        Chunk(_ROLE_BY_VALUE[c["role"]], _NUMBER_BY_VALUE[c["number"]],
              c["surface"], bool(c.get("coord", False)))
        for c in d["chunks"]
    )
    if pattern_tag(chunks) != d["tag"]:
        raise ValueError(f"pattern tag {d['tag']!r} does not match chunks")
    return SentenceRecord(id=d["id"], text=d["text"], chunks=chunks,
                          task=task, pattern_tag=d["tag"])


def instance_to_dict(inst: BlmInstance) -> dict:
    return {
        "task": inst.task.value,
        "lex_type": inst.lex_type.value,
        "correct_index": inst.correct_index,
        "group_key": inst.group_key,
        "context": [_record_to_dict(r) for r in inst.context],
        "answers": [dict(_record_to_dict(r), label=l.value) for r, l in inst.answers],
    }


def instance_from_dict(d: dict) -> BlmInstance:
    task = Task(d["task"])
    return BlmInstance(
        context=tuple(_record_from_dict(r, task) for r in d["context"]),
        answers=tuple(
            (_record_from_dict(r, task), _LABEL_BY_VALUE[r["label"]]) for r in d["answers"]
        ),
        correct_index=int(d["correct_index"]),
        task=task,
        lex_type=LexType(d["lex_type"]),
        group_key=d["group_key"],
    )


def save(instances: list[BlmInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False) + "\n")


def load(path: str | Path) -> list[BlmInstance]:
    """Read a dataset file; malformed records report their line number."""
    instances = []
    seen_texts: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                inst = instance_from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
            for rec in inst.all_sentences:
                known = seen_texts.setdefault(rec.id, rec.text)
                if known != rec.text:
                    raise DatasetFormatError(
                        f"{path}:{lineno}: id {rec.id} maps to two different texts")
            instances.append(inst)
    return instances


def sentence_inventory(instances: list[BlmInstance]) -> list[SentenceRecord]:
    """Every distinct sentence of a dataset, in first-seen order.

    Raises on an id that maps to two different texts.
    """
    seen: dict[str, SentenceRecord] = {}
    for inst in instances:
        for rec in inst.all_sentences:
            known = seen.get(rec.id)
            if known is None:
                seen[rec.id] = rec
            elif known.text != rec.text:
                raise ValueError(f"id {rec.id} maps to two different texts: "
                                 f"{known.text!r} vs {rec.text!r}")
    return list(seen.values())


def write_inventory(records: list[SentenceRecord], path: str | Path) -> None:
    """Emit the {id, text} inventory consumed by external encoders."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"id": rec.id, "text": rec.text}, ensure_ascii=False) + "\n")
