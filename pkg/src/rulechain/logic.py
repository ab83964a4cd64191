"""Symbolic core: template grammar, forward chaining, and the answer oracle.

A context is a list of template sentences. Facts are ground atoms
("Anne is rough.", "The cat likes the dog."), rules are implications over
attribute atoms ("Rough people are young.", "If someone is kind and quiet
then they are nice."). Parsing is exact and invertible: ``render`` returns
the original sentence for every template this package emits.

Semantics:

* Atoms are signed: "X is not A" is the atom is(X, A) with negative polarity.
  Rules may state negated atoms explicitly (negative facts, negated
  antecedents or consequents); a negated antecedent matches only an
  explicitly derived negated atom. This keeps forward chaining monotone.
* Negation as failure applies at the question level only: a negated question
  is true exactly when the affirmative atom is not derivable.
* The depth of a derived atom is the number of rule applications along the
  longest root-to-leaf path of its shallowest derivation tree; facts have
  depth 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Mapping

from .prng import Stream

if TYPE_CHECKING:  # pragma: no cover
    from .datagen import Example

#: Placeholder subject used in variable rules ("someone" / "something").
VAR = "?x"

#: Marker returned as Verdict.depth when the affirmative atom is underivable.
NOT_DERIVABLE = None

_RELATION_WORDS = ("is", "likes", "chases", "needs", "visits", "attacks", "sees")
_GROUP_NOUNS = ("people", "animals")
# Variable surface forms: antecedent pronoun -> (consequent pronoun, copula).
_VAR_STYLES = {"someone": ("they", "are"), "something": ("it", "is")}


class UnparseableSentence(ValueError):
    """Raised when a sentence matches none of the grammar templates."""

    def __init__(self, sentence: str, detail: str = ""):
        self.sentence = sentence
        msg = f"cannot parse sentence: {sentence!r}"
        if detail:
            msg += f" ({detail})"
        msg += "; expected a fact, group rule, or if-then rule template"
        super().__init__(msg)


class UnknownEntity(ValueError):
    """Raised when a question's subject never appears in the context."""


@dataclass(frozen=True, slots=True)
class Atom:
    """One ground or variable statement: subject-relation-object with a sign."""

    subject: str
    relation: str
    object: str
    polarity: bool = True

    def negated(self) -> "Atom":
        return replace(self, polarity=not self.polarity)

    def affirmative(self) -> "Atom":
        return self if self.polarity else replace(self, polarity=True)


@dataclass(frozen=True, slots=True)
class Rule:
    """An implication (or a fact, when there are no antecedents).

    ``template``, ``noun``, and ``var_style`` record the surface form so the
    sentence can be rendered back verbatim; they carry no logical meaning.
    """

    antecedents: tuple[Atom, ...]
    consequent: Atom
    template: str = "fact"  # fact | group | group_all | if_var | if_entity
    noun: str | None = None  # "people" / "animals" for group templates
    var_style: str | None = None  # "someone" / "something" for if_var

    @property
    def is_fact(self) -> bool:
        return not self.antecedents


@dataclass(frozen=True, slots=True)
class KnowledgeBase:
    items: tuple[Rule, ...]
    entity_universe: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class Verdict:
    label: bool
    depth: int | None  # NOT_DERIVABLE (None) when the affirmative atom is not derivable


def _canonical_entity(words: list[str]) -> str:
    """Canonical entity spelling: article phrases lowercase, names verbatim."""
    if words and words[0].lower() == "the":
        return " ".join(w.lower() for w in words)
    return " ".join(words)


def _entity_display(name: str, sentence_start: bool) -> str:
    if sentence_start and name.startswith("the "):
        return "The " + name[4:]
    return name


def _parse_atom_clause(words: list[str], sentence: str, allow_variable: bool) -> Atom:
    """Parse "<subject> <relation> [not] <object>" with a known relation word."""
    rel_idx = next(
        (i for i, w in enumerate(words) if i >= 1 and w in _RELATION_WORDS), None
    )
    if rel_idx is None:
        raise UnparseableSentence(sentence, "no relation word found")
    subject_words = words[:rel_idx]
    relation = words[rel_idx]
    rest = words[rel_idx + 1 :]
    if not rest:
        raise UnparseableSentence(sentence, "missing object")

    if subject_words and subject_words[0].lower() in _VAR_STYLES:
        if not allow_variable or len(subject_words) != 1:
            raise UnparseableSentence(sentence, "variable subject not allowed here")
        subject = VAR
    else:
        subject = _canonical_entity(subject_words)
    if not subject:
        raise UnparseableSentence(sentence, "empty subject")

    if relation == "is":
        polarity = True
        if rest[0] == "not":
            polarity = False
            rest = rest[1:]
        if len(rest) != 1:
            raise UnparseableSentence(sentence, "attribute must be a single word")
        return Atom(subject, "is", rest[0], polarity)
    # Entity-valued relation ("likes", "sees", ...): always affirmative.
    return Atom(subject, relation, _canonical_entity(rest), True)


def _parse_attr_conjunct(words: list[str], sentence: str) -> tuple[str, bool]:
    polarity = True
    if words and words[0] == "not":
        polarity = False
        words = words[1:]
    if len(words) != 1:
        raise UnparseableSentence(sentence, "attribute must be a single word")
    return words[0], polarity


def _split_on(words: list[str], marker: str) -> list[list[str]]:
    parts: list[list[str]] = [[]]
    for w in words:
        if w == marker:
            parts.append([])
        else:
            parts[-1].append(w)
    return parts


def parse_sentence(sentence: str) -> Rule:
    """Parse one template sentence into a Rule (facts included)."""
    text = sentence.strip()
    if not text.endswith("."):
        raise UnparseableSentence(sentence, "missing final period")
    words = text[:-1].split()
    if not words:
        raise UnparseableSentence(sentence, "empty sentence")
    first = words[0].lower()

    if first == "if":
        parts = _split_on(words[1:], "then")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise UnparseableSentence(sentence, "if-rule needs exactly one 'then'")
        ante_words, cons_words = parts
        # Antecedent side: "<subj> is [not] a [and [not] b ...]"
        if "is" not in ante_words[1:]:
            raise UnparseableSentence(sentence, "if-rule antecedent must use 'is'")
        is_idx = ante_words.index("is", 1)
        subj_words = ante_words[:is_idx]
        if len(subj_words) == 1 and subj_words[0].lower() in _VAR_STYLES:
            style = subj_words[0].lower()
            subject = VAR
            pron, copula = _VAR_STYLES[style]
            if len(cons_words) < 3 or cons_words[0] != pron or cons_words[1] != copula:
                raise UnparseableSentence(sentence, f"expected '{pron} {copula}' consequent")
            template = "if_var"
            cons_tail = cons_words[2:]
        else:
            style = None
            subject = _canonical_entity(subj_words)
            if "is" not in cons_words[1:]:
                raise UnparseableSentence(sentence, "entity rule consequent must use 'is'")
            cons_is = cons_words.index("is", 1)
            if _canonical_entity(cons_words[:cons_is]) != subject:
                raise UnparseableSentence(sentence, "entity rule consequent must restate the subject")
            template = "if_entity"
            cons_tail = cons_words[cons_is + 1 :]
        antecedents = tuple(
            Atom(subject, "is", attr, pol)
            for attr, pol in (
                _parse_attr_conjunct(conj, sentence)
                for conj in _split_on(ante_words[is_idx + 1 :], "and")
            )
        )
        if not antecedents:
            raise UnparseableSentence(sentence, "empty antecedent")
        cons_attr, cons_pol = _parse_attr_conjunct(cons_tail, sentence)
        return Rule(
            antecedents,
            Atom(subject, "is", cons_attr, cons_pol),
            template=template,
            var_style=style,
        )

    if first == "all" and len(words) >= 5 and words[2] in _GROUP_NOUNS and words[3] == "are":
        attr1 = words[1]
        attr2, pol = _parse_attr_conjunct(words[4:], sentence)
        return Rule(
            (Atom(VAR, "is", attr1),),
            Atom(VAR, "is", attr2, pol),
            template="group_all",
            noun=words[2],
        )

    if len(words) >= 4 and words[1] in _GROUP_NOUNS and words[2] == "are":
        attr1 = first
        attr2, pol = _parse_attr_conjunct(words[3:], sentence)
        return Rule(
            (Atom(VAR, "is", attr1),),
            Atom(VAR, "is", attr2, pol),
            template="group",
            noun=words[1],
        )

    # Fact. Undo sentence-initial capitalization of article phrases only;
    # proper names keep their spelling.
    return Rule((), _parse_atom_clause(words, sentence, allow_variable=False))


def parse_question(sentence: str) -> Atom:
    """Parse a question sentence (an atom in fact form) into its Atom."""
    rule = parse_sentence(sentence)
    if not rule.is_fact:
        raise UnparseableSentence(sentence, "question must be a single atom")
    return rule.consequent


def render_atom(atom: Atom, sentence_start: bool = True) -> str:
    subject = _entity_display(atom.subject, sentence_start)
    if atom.relation == "is":
        neg = "" if atom.polarity else "not "
        return f"{subject} is {neg}{atom.object}"
    return f"{subject} {atom.relation} {_entity_display(atom.object, False)}"


def _render_conjunct(atom: Atom) -> str:
    return atom.object if atom.polarity else f"not {atom.object}"


def render(rule: Rule) -> str:
    """Render a Rule back to its exact surface sentence."""
    if rule.template == "fact":
        return render_atom(rule.consequent) + "."
    cons = rule.consequent
    if rule.template == "group":
        (ante,) = rule.antecedents
        return (
            f"{ante.object.capitalize()} {rule.noun} are {_render_conjunct(cons)}."
        )
    if rule.template == "group_all":
        (ante,) = rule.antecedents
        return f"All {ante.object} {rule.noun} are {_render_conjunct(cons)}."
    ante_text = " and ".join(_render_conjunct(a) for a in rule.antecedents)
    if rule.template == "if_var":
        pron, copula = _VAR_STYLES[rule.var_style]
        return (
            f"If {rule.var_style} is {ante_text} then {pron} {copula} "
            f"{_render_conjunct(cons)}."
        )
    if rule.template == "if_entity":
        subj = _entity_display(cons.subject, False)
        return f"If {subj} is {ante_text} then {subj} is {_render_conjunct(cons)}."
    raise ValueError(f"unknown rule template: {rule.template!r}")


def parse_context(sentences: Iterable[str]) -> KnowledgeBase:
    """Parse context sentences, preserving order, and collect the entities."""
    items = tuple(parse_sentence(s) for s in sentences)
    entities: set[str] = set()
    for rule in items:
        for atom in (*rule.antecedents, rule.consequent):
            if atom.subject != VAR:
                entities.add(atom.subject)
            if atom.relation != "is":
                entities.add(atom.object)
    return KnowledgeBase(items, tuple(sorted(entities)))


def _combine_depths(antecedent_depths: Iterable[int]) -> int:
    """Depth contributed by one rule application on derived antecedents.

    Kept as its own function so the depth measure (longest root-to-leaf rule
    count of the derivation tree) can be swapped in one place.
    """
    return 1 + max(antecedent_depths)


def _ground(rule: Rule, universe: tuple[str, ...]) -> list[tuple[tuple[Atom, ...], Atom]]:
    atoms = (*rule.antecedents, rule.consequent)
    if all(a.subject != VAR for a in atoms):
        return [(rule.antecedents, rule.consequent)]
    out = []
    for entity in universe:
        out.append(
            (
                tuple(replace(a, subject=entity) for a in rule.antecedents),
                replace(rule.consequent, subject=entity),
            )
        )
    return out


def forward_chain(kb: KnowledgeBase) -> dict[Atom, int]:
    """Minimal derivation depth for every derivable (signed) atom.

    Runs grounded forward chaining to the fixpoint; the returned map has
    facts at depth 0 and every other derivable atom at the depth of its
    shallowest derivation tree.
    """
    grounded: list[tuple[tuple[Atom, ...], Atom]] = []
    depths: dict[Atom, int] = {}
    for rule in kb.items:
        if rule.is_fact:
            depths[rule.consequent] = 0
        else:
            grounded.extend(_ground(rule, kb.entity_universe))

    changed = True
    while changed:
        changed = False
        for antecedents, consequent in grounded:
            if all(a in depths for a in antecedents):
                d = _combine_depths(depths[a] for a in antecedents)
                if d < depths.get(consequent, d + 1):
                    depths[consequent] = d
                    changed = True
    return depths


def answer(kb: KnowledgeBase, question: Atom) -> Verdict:
    """Oracle verdict for a question atom against a context.

    Affirmative questions are true iff the atom is derivable (at its minimal
    depth). Negated questions are true iff the affirmative atom is NOT
    derivable; when it is derivable, the verdict is false at that depth,
    otherwise the depth is the NOT_DERIVABLE marker.
    """
    if question.subject not in kb.entity_universe:
        raise UnknownEntity(f"entity {question.subject!r} does not appear in the context")
    depths = forward_chain(kb)
    affirmative = question.affirmative()
    depth = depths.get(affirmative, NOT_DERIVABLE)
    if question.polarity:
        return Verdict(label=affirmative in depths, depth=depth)
    return Verdict(label=affirmative not in depths, depth=depth)


def answer_sentences(context: Iterable[str], question: str) -> Verdict:
    """Convenience wrapper: parse and answer in one call."""
    return answer(parse_context(context), parse_question(question))


def shuffle_sentences(example: "Example", seed: int) -> "Example":
    """Return the example with its context sentences permuted by `seed`.

    The permutation comes from the package PRNG (Fisher-Yates over the
    sentence list); question, label, and depth are untouched.
    """
    sentences = list(example.context)
    Stream(seed).shuffle(sentences)
    return replace(example, context=tuple(sentences))


def verify_example(example: "Example") -> str | None:
    """Re-derive an example's label (and depth, when derivable) with the oracle.

    Returns None when the record agrees with the oracle, else a short
    mismatch description.
    """
    verdict = answer_sentences(example.context, example.question)
    if verdict.label != example.label:
        return (
            f"label mismatch for {example.id}: recorded {example.label}, "
            f"oracle {verdict.label}"
        )
    if verdict.depth is not NOT_DERIVABLE and verdict.depth != example.depth:
        return (
            f"depth mismatch for {example.id}: recorded {example.depth}, "
            f"oracle {verdict.depth}"
        )
    return None
