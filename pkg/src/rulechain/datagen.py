"""Balanced-depth dataset generation with oracle-true labels.

Each generated context holds facts about four distinct entities, an
attribute rule chain of the requested depth rooted at one stated fact, and
distractor facts/rules that cannot interact with the chain (their attributes
are disjoint from the chain's). Questions come in four forms, 25% each:

* affirm the chain terminal        -> label true,  derivable at exact depth
* negate an unused attribute       -> label true   (negation as failure)
* negate the chain terminal        -> label false, derivable at exact depth
* affirm an unused attribute       -> label false

so no surface form correlates with the label. Labels and depths are correct
by construction and re-derivable with :mod:`rulechain.logic`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from . import logic
from .logic import VAR, Atom, Rule
from .prng import Stream, derive_seed

ANIMAL = "animal"
PEOPLE = "people"

SPLITS = ("train", "dev", "test")

_BLOCK_PAIRS = 64  # pairs per independently seeded generation block

#: Probability of widening a non-terminal chain link into a two-antecedent
#: rule (the extra antecedent is supplied as a depth-0 fact).
_CONJUNCTION_PROB = 0.25
#: Per-link negation probability in the negation variant (at least one link
#: is always negated).
_NEGATION_PROB = 0.3

RECORD_FIELDS = ("id", "context", "question", "label", "depth")


class VocabExhausted(RuntimeError):
    """Raised when the attribute list cannot supply a chain of the requested depth."""


class MalformedRecord(ValueError):
    def __init__(self, path, line_no: int, detail: str):
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: malformed record: {detail}")


@dataclass(frozen=True, slots=True)
class Vocabularies:
    """Entity/relation/attribute inventories for both categories."""

    animal_names: tuple[str, ...] = (
        "the bald eagle", "the tiger", "the bear", "the lion", "the wolf",
        "the crocodile", "the dinosaur", "the snake", "the leopard",
        "the cat", "the dog", "the mouse", "the rabbit", "the squirrel",
    )
    people_names: tuple[str, ...] = (
        "Anne", "Alan", "Bob", "Charlie", "Dave", "Erin", "Harry", "Gary",
        "Fiona",
    )
    animal_relations: tuple[str, ...] = (
        "is", "is not", "likes", "chases", "needs", "visits", "attacks",
        "sees",
    )
    people_relations: tuple[str, ...] = ("is", "is not")
    animal_attributes: tuple[str, ...] = (
        "kind", "quiet", "round", "nice", "smart", "dull", "rough", "lazy",
        "slow", "sleepy", "furry", "small", "cute", "lovely", "beautiful",
        "big", "strong", "awful", "fierce", "heavy",
    )
    people_attributes: tuple[str, ...] = (
        "big", "strong", "high", "huge", "short", "thin", "small", "little",
        "wealthy", "smart", "nice", "quiet", "kind", "poor", "dull", "rough",
        "bad", "sad", "old", "young",
    )

    def names(self, category: str) -> tuple[str, ...]:
        return self.animal_names if category == ANIMAL else self.people_names

    def attributes(self, category: str) -> tuple[str, ...]:
        return self.animal_attributes if category == ANIMAL else self.people_attributes

    def entity_relations(self, category: str) -> tuple[str, ...]:
        """Relations that take an entity object (distractor facts)."""
        if category == ANIMAL:
            return tuple(r for r in self.animal_relations if r not in ("is", "is not"))
        return ()


VOCAB = Vocabularies()


@dataclass(frozen=True, slots=True)
class GenerationSpec:
    """Everything generate_dataset needs; output is a pure function of this."""

    category: str = PEOPLE
    negation_rules: bool = False
    depths: tuple[int, ...] = (2, 3, 4, 5)
    # counts[split][depth] = number of examples in that cell
    counts: dict[str, dict[int, int]] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.category not in (ANIMAL, PEOPLE):
            raise ValueError(f"unknown category: {self.category!r}")
        if not self.depths:
            raise ValueError("depths must be non-empty")
        if any(d < 2 for d in self.depths):
            raise ValueError("chain depths below 2 are not generated")


@dataclass(frozen=True, slots=True)
class Example:
    id: str
    context: tuple[str, ...]
    question: str
    label: bool
    depth: int


@dataclass(slots=True)
class DatasetSplit:
    name: str
    examples: list[Example]


@dataclass(frozen=True, slots=True)
class PairMeta:
    """Generation provenance used by tests (which sentences carry the chain)."""

    chain_indices: tuple[int, ...]
    chain_attributes: tuple[str, ...]
    unused_attribute: str
    subject: str


def _var_template_pool(category: str, negative_antecedent: bool) -> tuple[str, ...]:
    if negative_antecedent:
        return ("if_var", "if_entity")
    return ("group", "group_all", "if_var", "if_entity")


def _make_link(
    subject: str,
    ante_attrs: tuple[tuple[str, bool], ...],
    cons_attr: str,
    cons_pol: bool,
    template: str,
    category: str,
) -> Rule:
    noun = "animals" if category == ANIMAL else "people"
    style = "something" if category == ANIMAL else "someone"
    if template == "if_entity":
        return Rule(
            tuple(Atom(subject, "is", a, p) for a, p in ante_attrs),
            Atom(subject, "is", cons_attr, cons_pol),
            template="if_entity",
        )
    if template in ("group", "group_all"):
        return Rule(
            tuple(Atom(VAR, "is", a, p) for a, p in ante_attrs),
            Atom(VAR, "is", cons_attr, cons_pol),
            template=template,
            noun=noun,
        )
    return Rule(
        tuple(Atom(VAR, "is", a, p) for a, p in ante_attrs),
        Atom(VAR, "is", cons_attr, cons_pol),
        template="if_var",
        var_style=style,
    )


def _generate_pair(
    spec: GenerationSpec, depth: int, rng: Stream, pair_id: str
) -> tuple[tuple[Example, Example], PairMeta]:
    vocab = VOCAB
    names = rng.sample(vocab.names(spec.category), 4)
    subject = names[0]

    pool = list(vocab.attributes(spec.category))
    rng.shuffle(pool)
    need = depth + 1
    if len(pool) < need + 2:
        raise VocabExhausted(
            f"{len(pool)} attributes cannot support a depth-{depth} chain"
        )
    chain_attrs = [pool.pop() for _ in range(need)]
    unused = pool.pop()  # never mentioned in the context; only in questions

    # Negated links (negation variant only). The terminal link stays
    # affirmative so the true question is always derivable at exact depth.
    negated: set[int] = set()
    if spec.negation_rules:
        negated = {i for i in range(1, depth) if rng.uniform() < _NEGATION_PROB}
        if not negated:
            negated = {1 + rng.randint(depth - 1)}

    def sign(i: int) -> bool:
        return i not in negated

    fact_rules: list[Rule] = [Rule((), Atom(subject, "is", chain_attrs[0]))]
    chain_rules: list[Rule] = []
    for i in range(1, depth + 1):
        ante: list[tuple[str, bool]] = [(chain_attrs[i - 1], sign(i - 1))]
        conjunctive = i < depth and pool and rng.uniform() < _CONJUNCTION_PROB
        if conjunctive:
            extra = pool.pop()
            ante.append((extra, True))
            fact_rules.append(Rule((), Atom(subject, "is", extra)))
        if conjunctive:
            template = "if_var"
        else:
            template = rng.choice(_var_template_pool(spec.category, not sign(i - 1)))
        chain_rules.append(
            _make_link(subject, tuple(ante), chain_attrs[i], sign(i), template, spec.category)
        )

    # Distractors: one attribute fact per other entity, plus rules over
    # attributes disjoint from the chain, plus entity-relation facts for
    # animals. None of them can derive a chain or question atom.
    distractor_facts: list[Rule] = []
    distractor_attrs: list[str] = []
    for name in names[1:]:
        if not pool:
            break
        attr = pool.pop()
        distractor_attrs.append(attr)
        polarity = not (spec.negation_rules and rng.uniform() < 0.25)
        distractor_facts.append(Rule((), Atom(name, "is", attr, polarity)))

    distractor_rules: list[Rule] = []
    if len(pool) >= 1 and distractor_attrs:
        # Fires on one distractor fact, producing a harmless derived atom.
        cons = pool.pop()
        template = rng.choice(_var_template_pool(spec.category, False))
        distractor_rules.append(
            _make_link(
                rng.choice(names[1:]),
                ((rng.choice(distractor_attrs), True),),
                cons,
                True,
                template,
                spec.category,
            )
        )
    if len(pool) >= 2:
        a, b = pool.pop(), pool.pop()
        template = rng.choice(_var_template_pool(spec.category, False))
        distractor_rules.append(
            _make_link(names[1], ((a, True),), b, True, template, spec.category)
        )

    relation_facts: list[Rule] = []
    relations = vocab.entity_relations(spec.category)
    if relations:
        for _ in range(2):
            a, b = rng.sample(names, 2)
            relation_facts.append(Rule((), Atom(a, rng.choice(relations), b)))

    facts = fact_rules + distractor_facts + relation_facts
    rules = chain_rules + distractor_rules
    context = tuple(logic.render(r) for r in facts + rules)
    chain_idx = tuple(
        i
        for i, r in enumerate(facts + rules)
        if r in fact_rules or r in chain_rules
    )

    terminal = Atom(subject, "is", chain_attrs[depth], True)
    unused_atom = Atom(subject, "is", unused, True)
    true_q = terminal if rng.uniform() < 0.5 else unused_atom.negated()
    false_q = terminal.negated() if rng.uniform() < 0.5 else unused_atom

    true_ex = Example(
        id=f"{pair_id}-t",
        context=context,
        question=logic.render_atom(true_q) + ".",
        label=True,
        depth=depth,
    )
    false_ex = Example(
        id=f"{pair_id}-f",
        context=context,
        question=logic.render_atom(false_q) + ".",
        label=False,
        depth=depth,
    )
    meta = PairMeta(chain_idx, tuple(chain_attrs), unused, subject)
    return (true_ex, false_ex), meta


def generate_example(
    spec: GenerationSpec, depth: int, rng: Stream, pair_id: str = "pair"
) -> tuple[Example, Example]:
    """One (true-labelled, false-labelled) example pair sharing a context."""
    if depth not in spec.depths:
        raise ValueError(f"depth {depth} not in spec.depths {spec.depths}")
    pair, _ = _generate_pair(spec, depth, rng, pair_id)
    return pair


def iter_split_examples(spec: GenerationSpec, split: str) -> Iterator[Example]:
    """Stream one split's examples in their canonical order.

    Generation is blocked: each block of pairs draws from a stream derived
    from (seed, category, negation, split, depth, block), so blocks are
    independent and the whole corpus is reproducible piecewise.
    """
    per_depth = spec.counts.get(split, {})
    for depth in spec.depths:
        n = per_depth.get(depth, 0)
        pairs = (n + 1) // 2
        emitted = 0
        for block_start in range(0, pairs, _BLOCK_PAIRS):
            rng = Stream(
                derive_seed(
                    spec.seed,
                    spec.category,
                    spec.negation_rules,
                    split,
                    depth,
                    block_start,
                )
            )
            for p in range(block_start, min(block_start + _BLOCK_PAIRS, pairs)):
                pair_id = f"{split}-d{depth}-{p:07d}"
                true_ex, false_ex = generate_example(spec, depth, rng, pair_id)
                for ex in (true_ex, false_ex):
                    if emitted < n:
                        emitted += 1
                        yield ex


def generate_dataset(spec: GenerationSpec) -> dict[str, DatasetSplit]:
    """Materialize every split named in spec.counts."""
    return {
        split: DatasetSplit(split, list(iter_split_examples(spec, split)))
        for split in SPLITS
        if split in spec.counts
    }


def record_to_line(example: Example) -> str:
    rec = {
        "id": example.id,
        "context": list(example.context),
        "question": example.question,
        "label": int(example.label),
        "depth": example.depth,
    }
    return json.dumps(rec, ensure_ascii=False, separators=(", ", ": "))


def write_records(examples: Iterable[Example], path) -> int:
    """Write examples as UTF-8 JSON lines (LF, fixed key order); returns count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(record_to_line(ex))
            fh.write("\n")
            n += 1
    return n


def write_split(split: DatasetSplit, path) -> int:
    return write_records(split.examples, path)


def _example_from_record(rec: dict, path, line_no: int) -> Example:
    if not isinstance(rec, dict):
        raise MalformedRecord(path, line_no, "record is not an object")
    missing = [k for k in RECORD_FIELDS if k not in rec]
    if missing:
        raise MalformedRecord(path, line_no, f"missing fields {missing}")
    try:
        return Example(
            id=str(rec["id"]),
            context=tuple(str(s) for s in rec["context"]),
            question=str(rec["question"]),
            label=bool(int(rec["label"])),
            depth=int(rec["depth"]),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(path, line_no, str(exc)) from exc


def read_records(path, name: str = "") -> DatasetSplit:
    """Read a JSONL record file back into a DatasetSplit."""
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(path, line_no, exc.msg) from exc
            examples.append(_example_from_record(rec, path, line_no))
    return DatasetSplit(name or str(path), examples)


def verify_records(examples: Iterable[Example]) -> list[str]:
    """Oracle-check every record; returns the list of mismatch descriptions."""
    mismatches = []
    for ex in examples:
        problem = logic.verify_example(ex)
        if problem is not None:
            mismatches.append(problem)
    return mismatches
