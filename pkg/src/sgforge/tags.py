"""Six-type token tagging scheme, arc legality, CONLL I/O, and the tag decoder.

Every token carries a node type and a parent position (0 is the virtual ROOT).
Decoding a tagged sentence into a scene graph is total: arcs that cannot be
attached are dropped and recorded, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .errors import ParseError
from .graph import SceneGraph, build_graph, canonical_words

ROOT = "ROOT"


class NodeType(IntEnum):
    """Token node types. Enum value doubles as the classifier class index."""

    SUBJ = 0
    PRED = 1
    OBJT = 2
    ATTR = 3
    SAME = 4
    NONE = 5


N_NODE_TYPES = len(NodeType)

# child type -> allowed parent kinds (ROOT sentinel or NodeType)
_LEGAL_PARENTS = {
    NodeType.SUBJ: frozenset({ROOT}),
    NodeType.PRED: frozenset({NodeType.SUBJ}),
    NodeType.OBJT: frozenset({NodeType.PRED}),
    NodeType.ATTR: frozenset({NodeType.SUBJ, NodeType.OBJT}),
    NodeType.SAME: frozenset(
        {NodeType.SUBJ, NodeType.PRED, NodeType.OBJT, NodeType.ATTR, NodeType.SAME}
    ),
    NodeType.NONE: frozenset(),
}


def arc_legal(child: NodeType, parent_kind) -> bool:
    """True iff an arc from a child of this type may point at that parent kind."""
    return parent_kind in _LEGAL_PARENTS[child]


@dataclass(frozen=True)
class TaggedToken:
    index: int  # 1-based sentence position
    form: str
    node_type: NodeType
    parent: int  # 0..T, 0 is ROOT


@dataclass(frozen=True)
class TaggedSentence:
    tokens: tuple[TaggedToken, ...]

    def __post_init__(self):
        t = len(self.tokens)
        for pos, tok in enumerate(self.tokens, start=1):
            if tok.index != pos:
                raise ValueError(f"token indices must be contiguous 1..T, got {tok.index} at {pos}")
            if not 0 <= tok.parent <= t:
                raise ValueError(f"parent {tok.parent} out of range 0..{t}")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tagged(rows: list[tuple[str, NodeType, int]]) -> TaggedSentence:
    """Build a TaggedSentence from (form, type, parent) rows."""
    return TaggedSentence(
        tuple(TaggedToken(i, f, t, p) for i, (f, t, p) in enumerate(rows, start=1))
    )


# Drop reasons recorded by the decoder.
SELF_REFERENCE = "self_reference"
SAME_CYCLE = "same_cycle"
SAME_TO_NONE = "same_to_none"
ILLEGAL_ARC = "illegal_arc"
SUBJ_NOT_ROOT = "subj_not_root"
PRED_DROPPED = "pred_dropped"
NO_OBJECT = "no_object"
EMPTY_LABEL = "empty_label"

DROP_REASONS = frozenset(
    {
        SELF_REFERENCE,
        SAME_CYCLE,
        SAME_TO_NONE,
        ILLEGAL_ARC,
        SUBJ_NOT_ROOT,
        PRED_DROPPED,
        NO_OBJECT,
        EMPTY_LABEL,
    }
)


@dataclass(frozen=True)
class DecodeReport:
    graph: SceneGraph
    dropped_arcs: tuple[tuple[int, str], ...]  # (child token index, reason)
    merged_phrases: tuple[tuple[int, tuple[int, ...]], ...]  # (head index, piece indices)


def decode_tags_to_graph(sent: TaggedSentence) -> DecodeReport:
    """Deterministically decode a tagged sentence into a scene graph.

    Four phases: resolve SAME chains into merged surface forms, create object
    nodes for SUBJ/OBJT tokens, attach arcs that pass arc_legal against the
    resolved parent type, then emit attribute pairs and relation triples.
    Failures become dropped_arcs entries; decoding never raises.
    """
    toks = {t.index: t for t in sent}
    t_count = len(sent)
    dropped: list[tuple[int, str]] = []

    # Phase 1: SAME resolution. Follow parent chains through SAME tokens until
    # a non-SAME head; chains hitting ROOT, NONE, or exceeding T hops drop.
    same_head: dict[int, int] = {}
    for tok in sent:
        if tok.node_type is not NodeType.SAME:
            continue
        if tok.parent == tok.index:
            dropped.append((tok.index, SELF_REFERENCE))
            continue
        j = tok.parent
        hops = 1
        reason = None
        while True:
            if hops > t_count:
                reason = SAME_CYCLE
                break
            if j == 0:
                reason = ILLEGAL_ARC
                break
            target = toks[j]
            if target.node_type is NodeType.NONE:
                reason = SAME_TO_NONE
                break
            if target.node_type is not NodeType.SAME:
                same_head[tok.index] = j
                break
            j = target.parent
            hops += 1
        if reason is not None:
            dropped.append((tok.index, reason))

    pieces: dict[int, list[int]] = {}
    for piece, head in same_head.items():
        pieces.setdefault(head, []).append(piece)
    merged_phrases = tuple(
        (head, tuple(sorted(pieces[head]))) for head in sorted(pieces)
    )

    def surface_label(index: int) -> str | None:
        parts = sorted(pieces.get(index, []) + [index])
        words = canonical_words(" ".join(toks[k].form for k in parts))
        return " ".join(words) if words else None

    # Phase 2: node creation. Labels must be known for every position before
    # arcs are checked, since parents may follow their children.
    labels: dict[int, str] = {}
    object_ids: list[int] = []
    for tok in sent:
        if tok.node_type in (NodeType.NONE, NodeType.SAME):
            continue
        label = surface_label(tok.index)
        if label is None:
            dropped.append((tok.index, EMPTY_LABEL))
            continue
        labels[tok.index] = label
        if tok.node_type in (NodeType.SUBJ, NodeType.OBJT):
            object_ids.append(tok.index)

    # Phase 3: arc attachment. Arcs point at the resolved head of any SAME
    # parent; legality is checked against the head's type.
    attached: dict[int, int] = {}  # child -> resolved parent index
    for tok in sent:
        kind = tok.node_type
        if kind in (NodeType.NONE, NodeType.SAME) or tok.index not in labels:
            continue
        if kind is NodeType.SUBJ:
            # The SUBJ arc carries no information beyond ROOT attachment.
            if tok.parent == tok.index:
                dropped.append((tok.index, SELF_REFERENCE))
            elif tok.parent != 0:
                dropped.append((tok.index, SUBJ_NOT_ROOT))
            continue
        if tok.parent == tok.index:
            dropped.append((tok.index, SELF_REFERENCE))
            continue
        if tok.parent == 0:
            dropped.append((tok.index, ILLEGAL_ARC))
            continue
        parent = tok.parent
        if toks[parent].node_type is NodeType.SAME:
            resolved = same_head.get(parent)
            if resolved is None:
                dropped.append((tok.index, ILLEGAL_ARC))
                continue
            parent = resolved
        if parent not in labels or not arc_legal(kind, toks[parent].node_type):
            dropped.append((tok.index, ILLEGAL_ARC))
            continue
        attached[tok.index] = parent

    # Phase 4: emission. Attributes need a surviving object parent; relations
    # need the full OBJT -> PRED -> SUBJ spine.
    attributes: list[tuple[int, str]] = []
    relations: list[tuple[int, str, int]] = []
    preds_with_child: set[int] = set()
    for tok in sent:
        i = tok.index
        if tok.node_type is NodeType.ATTR and i in attached:
            attributes.append((attached[i], labels[i]))
        elif tok.node_type is NodeType.OBJT and i in attached:
            pred = attached[i]
            subj = attached.get(pred)
            if subj is None:
                dropped.append((i, PRED_DROPPED))
            else:
                relations.append((subj, labels[pred], i))
                preds_with_child.add(pred)
    for tok in sent:
        if (
            tok.node_type is NodeType.PRED
            and tok.index in attached
            and tok.index not in preds_with_child
        ):
            dropped.append((tok.index, NO_OBJECT))

    graph = build_graph(
        [(i, labels[i]) for i in object_ids],
        attributes,
        relations,
    )
    return DecodeReport(graph, tuple(sorted(dropped)), merged_phrases)


# CONLL layout: INDEX, FORM, HEAD, ARC_LABEL, NODE_TYPE, tab-separated.
# ARC_LABEL duplicates NODE_TYPE on ATTR/SAME rows and is "_" otherwise.

_NAME_TO_TYPE = {t.name: t for t in NodeType}


def _row(tok: TaggedToken) -> str:
    if tok.node_type is NodeType.NONE:
        return f"{tok.index}\t{tok.form}\t_\t_\t_"
    arc = tok.node_type.name if tok.node_type in (NodeType.ATTR, NodeType.SAME) else "_"
    return f"{tok.index}\t{tok.form}\t{tok.parent}\t{arc}\t{tok.node_type.name}"


def write_conll(sentences: list[TaggedSentence]) -> str:
    """Serialize sentences; each sentence's rows are followed by one blank line."""
    chunks = []
    for sent in sentences:
        chunks.append("".join(_row(tok) + "\n" for tok in sent) + "\n")
    return "".join(chunks)


def read_conll(text: str) -> list[TaggedSentence]:
    """Parse CONLL text. Raises ParseError with the offending line number."""
    sentences: list[TaggedSentence] = []
    # (line number, index, form, node type, raw head); raw head is validated
    # against T before NONE parents are normalized to 0
    rows: list[tuple[int, int, str, NodeType, int]] = []

    def flush():
        if not rows:
            return
        t = len(rows)
        toks = []
        for line_no, index, form, node_type, head in rows:
            if head > t:
                raise ParseError(line_no, f"HEAD {head} exceeds sentence length {t}")
            parent = 0 if node_type is NodeType.NONE else head
            toks.append(TaggedToken(index, form, node_type, parent))
        sentences.append(TaggedSentence(tuple(toks)))
        rows.clear()

    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise ParseError(line_no, f"expected 5 tab-separated columns, got {len(cols)}")
        idx_s, form, head_s, arc_s, type_s = cols
        try:
            index = int(idx_s)
        except ValueError:
            raise ParseError(line_no, f"bad INDEX {idx_s!r}") from None
        if index != len(rows) + 1:
            raise ParseError(line_no, f"non-contiguous INDEX {index}, expected {len(rows) + 1}")
        if not form:
            raise ParseError(line_no, "empty FORM")
        if type_s == "_" or type_s == "NONE":
            node_type = NodeType.NONE
        elif type_s in _NAME_TO_TYPE:
            node_type = _NAME_TO_TYPE[type_s]
        else:
            raise ParseError(line_no, f"unknown NODE_TYPE {type_s!r}")
        if head_s == "_":
            if node_type is not NodeType.NONE:
                raise ParseError(line_no, f"missing HEAD for node type {node_type.name}")
            parent = 0
        else:
            try:
                parent = int(head_s)
            except ValueError:
                raise ParseError(line_no, f"bad HEAD {head_s!r}") from None
            if parent < 0:
                raise ParseError(line_no, f"negative HEAD {parent}")
        expected_arc = node_type.name if node_type in (NodeType.ATTR, NodeType.SAME) else "_"
        if arc_s != expected_arc:
            raise ParseError(line_no, f"ARC_LABEL {arc_s!r} inconsistent with {type_s!r}")
        rows.append((line_no, index, form, node_type, parent))
    flush()
    return sentences
