"""Prompt templates for every pipeline stage.

Each template fixes an output grammar that the parsers in parsing.py and
the stage modules consume; the grammars are documented in
docs/formats.md. Templates embed document titles and texts verbatim so
scripted providers can key their responses on prompt content alone.
"""

from __future__ import annotations

from .corpus import Document
from .records import ComparisonCore, QuestionRecord, SubQuestionPair

BRIDGE_EXTRACTION = """\
You will read one document and prepare it for cross-document question writing.
Pick one segment of the document likely to connect to other documents, name one
linking entity inside it (the entity must differ from the document title), and
write a search query that would surface documents adding NEW information about
that entity (not restating this document).

Document title: {title}
Document id: {doc_id}
Document text:
{text}

Reply with exactly three parts joined by " ## ", then the completion marker:
("bridge_entity"<|>"entity_name"<|>"entity_type") ## \
("relevant_segments"<|>"entity_name"<|>"one-sentence intro + copied segment") ## \
("query"<|>"entity_name"<|>"expanded retrieval query")<|COMPLETE|>
"""

SUBQUESTION_GENERATION = """\
Two documents are linked by the entity "{entity}". Write two chained questions:
question 1 is answerable from Document A alone and its answer is exactly the
linking entity; question 2 mentions the linking entity in its own words and is
answerable from Document B alone, targeting information unique to Document B.

Linking entity: {entity}
Document A title: {title_a}
Document A id: {doc_a}
Document A segment:
{segment_a}
Document B title: {title_b}
Document B id: {doc_b}
Document B text:
{text_b}

If Document B adds nothing that chains through the entity, reply:
INVALID_BRIDGE_CONNECTION
Reason: [one line]

Otherwise reply using exactly this layout:
ANALYSIS:
Bridge connection: [how the entity ties A to B]
Document A segments: [the Document A segment]
Document B segments: [relevant Document B excerpts]
Reasoning path: [path from A to B]

SUB-QUESTIONS:
Sub-question 1: [question over Document A]
Answer 1: [the linking entity]
Sub-question 2: [question naming the entity, answered from Document B]
Answer 2: [answer from Document B]
"""

MULTIHOP_SYNTHESIS = """\
Fuse the two chained questions below into one natural question. The fused
question must need both documents, must NOT name the linking entity
"{entity}", and its answer must be exactly Answer 2.

Sub-question 1: {sq1}
Answer 1: {a1}
Sub-question 2: {sq2}
Answer 2: {a2}
Document B notes:
{doc_b_segments}

If the pair cannot be fused, reply:
NONE
Reason: [one line]

Otherwise reply using exactly this layout:
MULTI-HOP QUESTION: [fused question]

ANSWER:
[final answer, identical to Answer 2]

REASONING PATH:
[numbered steps from Document A through the hidden entity to the answer]

SOURCES:
[roles of Document A and Document B]
"""

NHOP_FUSION = """\
Extend a fused question with one more reasoning step. The current question
resolves to "{prev_answer}"; the extra step starts from that resolution and
chains through "{entity}" to a new answer. Produce a single question covering
the whole chain without naming "{entity}", whose answer is exactly Answer 2.

Current question: {question}
Current answer: {prev_answer}
Next sub-question 1: {sq1}
Next answer 1: {a1}
Next sub-question 2: {sq2}
Next answer 2: {a2}

If the chain cannot be extended, reply:
NONE
Reason: [one line]

Otherwise reply using exactly this layout:
MULTI-HOP QUESTION: [extended question]

ANSWER:
[final answer, identical to Answer 2]

REASONING PATH:
[numbered steps over the full chain]

SOURCES:
[role of each document in the chain]
"""

COMPARE_EXTRACTION = """\
Read one document. Name its primary subject entity and list 3-5 short factual
attribute-value pairs of that entity suited to comparing it against entities of
the same type (numbers, dates, places, names, tight categories). For each
attribute add a query that would find other entities holding that attribute.

Document title: {title}
Document id: {doc_id}
Document text:
{text}

Reply with parts joined by " ## ", then the completion marker:
("subject_entity"<|>"name"<|>"type") ## \
("attribute"<|>"attribute_name"<|>"attribute_value"<|>"entity_b_query")<|COMPLETE|>
"""

COMPARE_FILTER = """\
Rate the following extraction for comparison-question building. Give the
subject a concreteness score from 1 (vague concept) to 5 (specific person,
place, organization, work or event). Give each attribute value a
comparability score from 1 (vague or verbose) to 5 (precise date, number,
location, name or tight category).

Subject: {entity} (type: {etype})
Attributes:
{attributes}

Reply with parts joined by " ## ", then the completion marker:
("entity_score"<|>5) ## ("attribute_score"<|>"name"<|>"value"<|>5)<|COMPLETE|>
"""

COMPARE_QUERY_PLAN = """\
Plan retrieval for comparing "{entity}" (type: {etype}) against one other
entity. Known attributes:
{attributes}

Choose exactly one path. If you can confidently recall one specific comparable
entity and pick one attribute from the list to verify for it, reply:
("recall_focused_verify"<|>Entity B name<|>attribute name<|>verification query)<|COMPLETE|>
Otherwise propose exactly three diverse corpus queries for finding entities of
the same type, and reply:
("search_queries"<|>query 1<|>query 2<|>query 3)<|COMPLETE|>
"""

COMPARE_BUILDER = """\
Compare two documents. Entity A with its attributes comes from Document A;
find the main entity of Document B and one attribute pair where both entities
hold specific factual values. If found, write one direct comparison question
(never stating either value), a short comparative answer, the supporting
sentence from each document, and a 50-150 word paragraph from each document
containing that sentence.{guidance}

Entity A: {entity} (type: {etype})
Entity A attributes:
{attributes}
Document A title: {title_a}
Document A id: {doc_a}
Document A text:
{text_a}
Document B title: {title_b}
Document B id: {doc_b}
Document B text:
{text_b}

If no comparable pair exists, reply with the single word:
FAIL

Otherwise reply using exactly this layout (VALUE lines optional):
PASS
entity_a: [Entity A name]
entity_b: [Document B entity name]
attribute_compared: [attribute name]
value_a: [Entity A value, optional]
value_b: [Entity B value, optional]
multi_hop_question: [direct comparison question]
answer: [comparative answer]
fact_entity_a: [sentence from Document A]
fact_entity_b: [sentence from Document B]
relevant_paragraph_a: [paragraph from Document A]
relevant_paragraph_b: [paragraph from Document B]
"""

BRIDGE_POLISH = """\
Audit one cross-document question. It must require both documents, must not
name the hidden linking entity "{entity}", and must read naturally. Decide:
[PASS] if it is sound as written; [ADJUST] for wording-only fixes;
[REWORKED] for structural rewrites; [REJECTED] if unfixable.

Question: {question}
Answer: {answer}
Reasoning path:
{reasoning_path}
Evidence:
{evidence}

Reply with the bracketed decision on its own line, then for ADJUST:
REFINED_REASONING_PATH: [updated path]
REFINED_QUESTION: [adjusted question]
REFINED_ANSWER: [updated answer, optional]
and for REWORKED the same three lines with REFINED_ANSWER mandatory.
"""

COMPARISON_POLISH = """\
Audit one comparison question. The comparison logic must match the stated
facts, the question must not reveal either value, and the phrasing must be a
single fluent question. Decide: [PASS], [ADJUST], [REWORKED] or [REJECTED].

Question: {question}
Answer: {answer}
Entity A: {entity_a}   fact: {fact_a}
Entity B: {entity_b}   fact: {fact_b}

Reply with the bracketed decision on its own line, then for ADJUST:
REFINED_QUESTION: [tuned question]
REFINED_ANSWER: [updated answer, optional]
for REWORKED:
REFINED_QUESTION: [rewritten question]
REFINED_ANSWER: [new answer]
REFINED_FACT_A: [corrected fact, optional]
REFINED_FACT_B: [corrected fact, optional]
and for REJECTED:
REASON: [one line]
"""

JUDGE_ASSESSMENT = """\
Assess one question-answer pair against its evidence passages. Be strict:
reward only questions that truly need every passage. First decide whether
answering genuinely requires combining the passages (yes/no), then rate each
dimension as one of: Very Poor, Poor, Fair, Good, Very Good.

Question: {question}
Answer: {answer}
Passages:
{passages}

Reply using exactly this layout:
- Multi-Hop Reasoning Requirement: [yes/no]
- Fluency: [rating]
- Clarity: [rating]
- Conciseness: [rating]
- Relevance: [rating]
- Consistency: [rating]
- Question Answerability: [rating]
- Answer-Question Consistency: [rating]
- Information Integration Ability: [rating]
- Reasoning Path Guidance: [rating]
- Logical Sophistication: [rating]
<|COMPLETE|>
"""

SOLVER_Q_ONLY = """\
Answer the question with the shortest exact answer span, nothing else.

Question: {question}
Answer:"""

SOLVER_Q_DOCS = """\
Answer the question using the passages. Reply with the shortest exact answer
span, nothing else.

Passages:
{passages}

Question: {question}
Answer:"""


def render_attributes(attributes) -> str:
    return "\n".join(f"- {name}: {value}" for name, value, *_ in attributes)


def render_evidence(record: QuestionRecord) -> str:
    return "\n".join(f"[{doc_id}] {seg}" for doc_id, seg in record.evidence)


def bridge_extraction_prompt(doc: Document) -> str:
    return BRIDGE_EXTRACTION.format(title=doc.title, doc_id=doc.id, text=doc.text)


def subquestion_prompt(entity: str, doc_a: Document, segment_a: str, doc_b: Document) -> str:
    return SUBQUESTION_GENERATION.format(
        entity=entity,
        title_a=doc_a.title,
        doc_a=doc_a.id,
        segment_a=segment_a,
        title_b=doc_b.title,
        doc_b=doc_b.id,
        text_b=doc_b.text,
    )


def synthesis_prompt(entity: str, pair: SubQuestionPair) -> str:
    return MULTIHOP_SYNTHESIS.format(
        entity=entity,
        sq1=pair.sq1,
        a1=pair.a1,
        sq2=pair.sq2,
        a2=pair.a2,
        doc_b_segments=pair.doc_b_segments,
    )


def nhop_fusion_prompt(entity: str, question: str, prev_answer: str, pair: SubQuestionPair) -> str:
    return NHOP_FUSION.format(
        entity=entity,
        question=question,
        prev_answer=prev_answer,
        sq1=pair.sq1,
        a1=pair.a1,
        sq2=pair.sq2,
        a2=pair.a2,
    )


def compare_extraction_prompt(doc: Document) -> str:
    return COMPARE_EXTRACTION.format(title=doc.title, doc_id=doc.id, text=doc.text)


def compare_filter_prompt(entity: str, etype: str, attributes) -> str:
    return COMPARE_FILTER.format(entity=entity, etype=etype, attributes=render_attributes(attributes))


def compare_query_plan_prompt(entity: str, etype: str, attributes) -> str:
    return COMPARE_QUERY_PLAN.format(entity=entity, etype=etype, attributes=render_attributes(attributes))


def compare_builder_prompt(entity: str, etype: str, attributes, doc_a: Document, doc_b: Document,
                           hint_entity: str | None = None, hint_attribute: str | None = None) -> str:
    guidance = ""
    if hint_entity and hint_attribute:
        guidance = (
            f"\nOnly accept the pair (entity: {hint_entity}, attribute: {hint_attribute});"
            " reply FAIL for anything else."
        )
    return COMPARE_BUILDER.format(
        guidance=guidance,
        entity=entity,
        etype=etype,
        attributes=render_attributes(attributes),
        title_a=doc_a.title,
        doc_a=doc_a.id,
        text_a=doc_a.text,
        title_b=doc_b.title,
        doc_b=doc_b.id,
        text_b=doc_b.text,
    )


def bridge_polish_prompt(record: QuestionRecord, entity: str) -> str:
    return BRIDGE_POLISH.format(
        entity=entity,
        question=record.question,
        answer=record.answer,
        reasoning_path=record.reasoning_path,
        evidence=render_evidence(record),
    )


def comparison_polish_prompt(record: QuestionRecord) -> str:
    core = record.sub_parts
    assert isinstance(core, ComparisonCore)
    return COMPARISON_POLISH.format(
        question=record.question,
        answer=record.answer,
        entity_a=core.entity_a,
        fact_a=core.fact_a,
        entity_b=core.entity_b,
        fact_b=core.fact_b,
    )


def judge_prompt(record: QuestionRecord) -> str:
    return JUDGE_ASSESSMENT.format(
        question=record.question,
        answer=record.answer,
        passages=render_evidence(record),
    )


def solver_prompt(record: QuestionRecord, mode: str) -> str:
    if mode == "QOnly":
        return SOLVER_Q_ONLY.format(question=record.question)
    if mode == "QDocs":
        return SOLVER_Q_DOCS.format(question=record.question, passages=render_evidence(record))
    raise ValueError(f"unknown solver mode {mode!r}")
