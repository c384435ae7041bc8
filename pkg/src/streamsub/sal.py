"""Parser for the SAL query language (subgraph subset).

A SAL program has up to five statement groups: preamble constants,
a connection declaration, partition/hash statements, feature definitions,
and a subgraph block:

    WindowSize = 1000
    Netflows = VastStream("localhost", 9999);
    PARTITION Netflows By SourceIp, DestIp;
    HASH SourceIp WITH IpHashFunction;
    HASH DestIp WITH IpHashFunction;
    Subgraph on Netflows with source(SourceIp) and target(DestIp)
    {
      x1 e1 x2;
      starttime(e1) < starttime(e2);
      ...
    }

Feature definitions (``FOREACH ... GENERATE``) are recognized, skipped, and
reported as warnings; the engine evaluates vertex constraints against
externally registered membership sets instead.  Keywords are matched
case-insensitively; identifiers are case-sensitive.  Comments run from
``//`` to end of line.

``parse_program`` handles full programs, ``parse_query`` handles a bare
``{ ... }`` subgraph block, and ``parse_constraint`` a single temporal
constraint.  All entry points raise ``SalSyntaxError`` (never anything
else) on malformed input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .query import (
    COMPARATORS,
    ENDTIME,
    STARTTIME,
    DifferenceBound,
    EdgeInstant,
    EdgePattern,
    InstantComparison,
    SubgraphQuery,
    TemporalConstraint,
    VertexConstraint,
    format_seconds,
)

SUPPORTED_STREAM_KINDS = ("VastStream",)

# Tuple fields delivered by the VAST-style netflow stream; partition keys and
# the subgraph source/target designations must come from this list.
VAST_FIELDS = (
    "TimeSeconds",
    "DurationSeconds",
    "SourceIp",
    "DestIp",
    "SourcePort",
    "DestPort",
    "Protocol",
)

_KEYWORDS = {
    "partition",
    "by",
    "hash",
    "with",
    "foreach",
    "generate",
    "subgraph",
    "on",
    "source",
    "target",
    "and",
    "in",
    "not",
}

_SELECTOR_ALIASES = {
    "starttime": STARTTIME,
    "startime": STARTTIME,  # tolerated misspelling seen in the wild
    "endtime": ENDTIME,
}


class SalSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()) -> None:
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected
        detail = f"{line}:{col}: {message}"
        if expected:
            detail += f" (expected {' | '.join(expected)})"
        super().__init__(detail)


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT NUMBER STRING PUNCT EOF
    value: str
    line: int
    col: int

    def lowered(self) -> str:
        return self.value.lower()


_PUNCT_TWO = ("<=", ">=")
_PUNCT_ONE = "=(){};,<>+-"


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                if text[j] == ".":
                    seen_dot = True
                j += 1
            tokens.append(Token("NUMBER", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] not in ('"', "\n"):
                j += 1
            if j >= n or text[j] != '"':
                raise SalSyntaxError("unterminated string literal", start_line, start_col)
            tokens.append(Token("STRING", text[i + 1 : j], start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        two = text[i : i + 2]
        if two in _PUNCT_TWO:
            tokens.append(Token("PUNCT", two, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in _PUNCT_ONE:
            tokens.append(Token("PUNCT", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        raise SalSyntaxError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(Token("EOF", "", line, col))
    return tokens


@dataclass
class Connection:
    name: str
    kind: str
    host: str
    port: int


@dataclass
class SubgraphSpec:
    stream: str
    source_field: str
    target_field: str
    query: SubgraphQuery


@dataclass
class SalProgram:
    preamble: dict[str, float]
    connection: Connection
    partition_keys: list[str]
    hash_functions: dict[str, str]
    features: list[str]
    subgraph: SubgraphSpec
    warnings: list[str] = field(default_factory=list)

    @property
    def query(self) -> SubgraphQuery:
        return self.subgraph.query


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.pos = 0

    # -- primitives ---------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        index = min(self.pos + ahead, len(self.tokens) - 1)
        return self.tokens[index]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def fail(self, message: str, expected: tuple[str, ...] = ()) -> SalSyntaxError:
        tok = self.peek()
        where = f"near {tok.value!r}" if tok.kind != "EOF" else "at end of input"
        return SalSyntaxError(f"{message} {where}", tok.line, tok.col, expected)

    def expect_punct(self, value: str) -> Token:
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.value != value:
            raise self.fail(f"expected {value!r}", (value,))
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise self.fail(f"expected {what}", (what,))
        return self.next()

    def expect_keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.lowered() != word:
            raise self.fail(f"expected keyword {word!r}", (word,))
        return self.next()

    def at_keyword(self, word: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok.kind == "IDENT" and tok.lowered() == word

    def expect_number(self) -> float:
        tok = self.peek()
        if tok.kind != "NUMBER":
            raise self.fail("expected number", ("number",))
        self.next()
        value = float(tok.value)
        return value

    def skip_semicolon(self, optional: bool = False) -> None:
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.value == ";":
            self.next()
        elif not optional:
            raise self.fail("expected ';'", (";",))

    # -- program ------------------------------------------------------------

    def parse_program(self) -> SalProgram:
        preamble: dict[str, float] = {}
        connection: Connection | None = None
        partition_keys: list[str] = []
        hash_functions: dict[str, str] = {}
        features: list[str] = []
        warnings: list[str] = []
        subgraph: SubgraphSpec | None = None

        while self.peek().kind != "EOF":
            tok = self.peek()
            if self.at_keyword("partition"):
                stream, keys = self.parse_partition()
                if connection is not None and stream != connection.name:
                    raise self.fail(f"PARTITION references unknown stream {stream!r}")
                partition_keys.extend(keys)
                continue
            if self.at_keyword("hash"):
                key, fn = self.parse_hash()
                hash_functions[key] = fn
                continue
            if self.at_keyword("subgraph"):
                if subgraph is not None:
                    raise self.fail("duplicate subgraph block")
                subgraph = self.parse_subgraph(connection)
                continue
            if tok.kind == "IDENT":
                name = self.next().value
                self.expect_punct("=")
                nxt = self.peek()
                if nxt.kind == "NUMBER":
                    preamble[name] = self.expect_number()
                    self.skip_semicolon(optional=True)
                    continue
                if self.at_keyword("foreach"):
                    tok_line = nxt.line
                    self.parse_feature_body()
                    features.append(name)
                    warnings.append(
                        f"{tok_line}:1: feature {name!r} uses FOREACH GENERATE, "
                        "which this engine does not evaluate; statement skipped"
                    )
                    continue
                if nxt.kind == "IDENT":
                    if connection is not None:
                        raise self.fail("duplicate connection statement")
                    connection = self.parse_connection_tail(name)
                    continue
                raise self.fail("expected number, stream kind, or FOREACH after '='")
            raise self.fail("unexpected statement")

        if connection is None:
            tok = self.peek()
            raise SalSyntaxError("program has no connection statement", tok.line, tok.col)
        if subgraph is None:
            tok = self.peek()
            raise SalSyntaxError("program has no subgraph block", tok.line, tok.col)
        for key in partition_keys:
            if key not in VAST_FIELDS:
                tok = self.peek()
                raise SalSyntaxError(
                    f"partition key {key!r} is not a field of {connection.kind}"
                    f" (fields: {', '.join(VAST_FIELDS)})",
                    tok.line,
                    tok.col,
                )
        return SalProgram(
            preamble=preamble,
            connection=connection,
            partition_keys=partition_keys,
            hash_functions=hash_functions,
            features=features,
            subgraph=subgraph,
            warnings=warnings,
        )

    def parse_connection_tail(self, name: str) -> Connection:
        kind_tok = self.expect_ident("stream kind")
        if kind_tok.value not in SUPPORTED_STREAM_KINDS:
            raise SalSyntaxError(
                f"unsupported stream kind {kind_tok.value!r} "
                f"(supported: {', '.join(SUPPORTED_STREAM_KINDS)})",
                kind_tok.line,
                kind_tok.col,
            )
        self.expect_punct("(")
        host_tok = self.peek()
        if host_tok.kind != "STRING":
            raise self.fail("expected quoted host string", ("string",))
        self.next()
        self.expect_punct(",")
        port = self.expect_number()
        self.expect_punct(")")
        self.skip_semicolon()
        return Connection(name=name, kind=kind_tok.value, host=host_tok.value, port=int(port))

    def parse_partition(self) -> tuple[str, list[str]]:
        self.expect_keyword("partition")
        stream = self.expect_ident("stream name").value
        self.expect_keyword("by")
        keys = [self.expect_ident("field name").value]
        while self.peek().kind == "PUNCT" and self.peek().value == ",":
            self.next()
            keys.append(self.expect_ident("field name").value)
        self.skip_semicolon()
        return stream, keys

    def parse_hash(self) -> tuple[str, str]:
        self.expect_keyword("hash")
        key = self.expect_ident("field name").value
        self.expect_keyword("with")
        fn = self.expect_ident("hash function name").value
        self.skip_semicolon()
        return key, fn

    def parse_feature_body(self) -> None:
        """Skip a FOREACH ... GENERATE ...; statement (balanced parentheses)."""
        self.expect_keyword("foreach")
        depth = 0
        while True:
            tok = self.peek()
            if tok.kind == "EOF":
                raise self.fail("unterminated feature statement")
            if tok.kind == "PUNCT":
                if tok.value == "(":
                    depth += 1
                elif tok.value == ")":
                    depth -= 1
                    if depth < 0:
                        raise self.fail("unbalanced ')' in feature statement")
                elif tok.value == ";" and depth == 0:
                    self.next()
                    return
            self.next()

    def parse_subgraph(self, connection: Connection | None) -> SubgraphSpec:
        self.expect_keyword("subgraph")
        self.expect_keyword("on")
        stream = self.expect_ident("stream name").value
        if connection is not None and stream != connection.name:
            raise self.fail(f"subgraph references unknown stream {stream!r}")
        self.expect_keyword("with")
        self.expect_keyword("source")
        self.expect_punct("(")
        source_field = self.expect_ident("field name").value
        self.expect_punct(")")
        self.expect_keyword("and")
        self.expect_keyword("target")
        self.expect_punct("(")
        target_field = self.expect_ident("field name").value
        self.expect_punct(")")
        for fieldname in (source_field, target_field):
            if fieldname not in VAST_FIELDS:
                raise self.fail(f"designated field {fieldname!r} is not a stream field")
        query = self.parse_block()
        return SubgraphSpec(
            stream=stream, source_field=source_field, target_field=target_field, query=query
        )

    # -- subgraph block -------------------------------------------------------

    def parse_block(self) -> SubgraphQuery:
        self.expect_punct("{")
        edges: list[EdgePattern] = []
        temporal: list[TemporalConstraint] = []
        vertex: list[VertexConstraint] = []
        while True:
            tok = self.peek()
            if tok.kind == "PUNCT" and tok.value == "}":
                self.next()
                break
            if tok.kind == "EOF":
                raise self.fail("unterminated subgraph block", ("}",))
            if tok.kind == "IDENT" and tok.lowered() in _SELECTOR_ALIASES:
                temporal.append(self.parse_constraint_tail())
                self.skip_semicolon()
                continue
            if tok.kind == "IDENT" and (self.at_keyword("in", 1) or self.at_keyword("not", 1)):
                vertex.append(self.parse_vertex_constraint())
                self.skip_semicolon()
                continue
            if tok.kind == "IDENT":
                source = self.next().value
                label = self.expect_ident("edge label").value
                target = self.expect_ident("vertex variable").value
                edges.append(EdgePattern(label=label, source=source, target=target))
                self.skip_semicolon()
                continue
            raise self.fail("expected edge pattern or constraint")
        return SubgraphQuery(
            edges=tuple(edges),
            temporal_constraints=tuple(temporal),
            vertex_constraints=tuple(vertex),
        )

    def parse_vertex_constraint(self) -> VertexConstraint:
        vertex = self.expect_ident("vertex variable").value
        negated = False
        if self.at_keyword("not"):
            self.next()
            negated = True
        self.expect_keyword("in")
        set_name = self.expect_ident("set name").value
        return VertexConstraint(vertex=vertex, set_name=set_name, negated=negated)

    def parse_instant(self) -> EdgeInstant:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.lowered() not in _SELECTOR_ALIASES:
            raise self.fail("expected starttime(...) or endtime(...)", ("starttime", "endtime"))
        selector = _SELECTOR_ALIASES[self.next().lowered()]
        self.expect_punct("(")
        edge = self.expect_ident("edge label").value
        self.expect_punct(")")
        return EdgeInstant(edge=edge, selector=selector)

    def parse_comparator(self) -> str:
        tok = self.peek()
        if tok.kind != "PUNCT" or tok.value not in COMPARATORS:
            raise self.fail("expected comparison operator", COMPARATORS)
        return self.next().value

    def parse_constraint_tail(self) -> TemporalConstraint:
        left = self.parse_instant()
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.value in ("+", "-"):
            op = self.next().value
            right = self.parse_instant()
            comparator = self.parse_comparator()
            sign = 1.0
            if self.peek().kind == "PUNCT" and self.peek().value == "-":
                self.next()
                sign = -1.0
            bound = sign * self.expect_number()
            return DifferenceBound(left=left, op=op, right=right, comparator=comparator, bound=bound)
        comparator = self.parse_comparator()
        right_tok = self.peek()
        if right_tok.kind == "NUMBER":
            raise self.fail(
                "a plain instant cannot be compared to a number; "
                "use a difference of two instants"
            )
        right = self.parse_instant()
        return InstantComparison(left=left, comparator=comparator, right=right)


def parse_program(text: str) -> SalProgram:
    """Parse a full SAL program."""
    parser = _Parser(text)
    return parser.parse_program()


def parse_query(text: str) -> SubgraphQuery:
    """Parse a bare ``{ ... }`` subgraph block."""
    parser = _Parser(text)
    query = parser.parse_block()
    tok = parser.peek()
    if tok.kind != "EOF":
        raise SalSyntaxError(f"trailing input after block: {tok.value!r}", tok.line, tok.col)
    return query


def parse_constraint(text: str) -> TemporalConstraint:
    """Parse a single temporal constraint line."""
    parser = _Parser(text)
    constraint = parser.parse_constraint_tail()
    parser.skip_semicolon(optional=True)
    tok = parser.peek()
    if tok.kind != "EOF":
        raise SalSyntaxError(f"trailing input after constraint: {tok.value!r}", tok.line, tok.col)
    return constraint


def is_bare_block(text: str) -> bool:
    """True when the first meaningful token opens a subgraph block."""
    head = tokenize(text)[0]
    return head.kind == "PUNCT" and head.value == "{"


def parse_query_or_program(text: str) -> SubgraphQuery:
    """Accept either a full program or a bare subgraph block."""
    if is_bare_block(text):
        return parse_query(text)
    return parse_program(text).query


def format_program(program: SalProgram) -> str:
    """Canonical text for a program; reparsing yields an equal structure."""
    lines: list[str] = []
    for name, value in program.preamble.items():
        lines.append(f"{name} = {format_seconds(value)}")
    conn = program.connection
    lines.append(f'{conn.name} = {conn.kind}("{conn.host}", {conn.port});')
    if program.partition_keys:
        lines.append(f"PARTITION {conn.name} By {', '.join(program.partition_keys)};")
    for key, fn in program.hash_functions.items():
        lines.append(f"HASH {key} WITH {fn};")
    sub = program.subgraph
    lines.append(
        f"Subgraph on {sub.stream} with source({sub.source_field}) and target({sub.target_field})"
    )
    lines.append(sub.query.format())
    return "\n".join(lines) + "\n"
