"""Read-only SQL subset over in-memory tables.

Grammar (keywords case-insensitive, identifiers case-sensitive):

    query       = "SELECT" select_list "FROM" ident
                  ["WHERE" expr] ["GROUP" "BY" ident_list]
                  ["ORDER" "BY" order_list] ["LIMIT" integer] [";"]
    select_list = select_item {"," select_item}
    select_item = (aggregate | ident) ["AS" ident]
    aggregate   = "COUNT" "(" "*" ")" | ("COUNT"|"SUM"|"AVG"|"MIN"|"MAX") "(" ident ")"
    expr        = and_expr {"OR" and_expr}
    and_expr    = not_expr {"AND" not_expr}
    not_expr    = "NOT" not_expr | "(" expr ")" | predicate
    predicate   = operand ( ("="|"!="|"<>"|"<"|"<="|">"|">=") operand
                          | ["NOT"] "LIKE" string
                          | ["NOT"] "IN" "(" literal {"," literal} ")" )
    operand     = ident | literal
    literal     = ["-"] (integer | real) | string | "TRUE" | "FALSE"
    order_list  = ident ["ASC"|"DESC"] {"," ident ["ASC"|"DESC"]}

Mutating statements (INSERT, UPDATE, DELETE, DROP, CREATE, ALTER, ATTACH) are
never accepted; their keywords are reserved. Execution order is filter,
group, aggregate, order, limit. Comparisons follow three-valued logic (a null
operand never satisfies a predicate); aggregates skip nulls; AVG of an empty
group is null; sorting is stable with nulls last ascending, first descending;
string comparison is case-sensitive while LIKE is case-insensitive.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import (
    LlmError,
    SqlGenerationFailedError,
    SqlSyntaxError,
    TypeMismatchError,
    UnknownColumnError,
    UnknownTableError,
)
from .tables import Table, render_text_table, schema_table

AGGREGATE_FUNCS = ("COUNT", "SUM", "AVG", "MIN", "MAX")

_GRAMMAR_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "LIMIT", "AS",
    "AND", "OR", "NOT", "LIKE", "IN", "ASC", "DESC", "TRUE", "FALSE", "NULL",
    *AGGREGATE_FUNCS,
}
# Reserved so a mutation can never masquerade as an identifier.
_MUTATION_KEYWORDS = {
    "INSERT", "UPDATE", "DELETE", "DROP", "CREATE", "ALTER", "ATTACH",
    "INTO", "SET", "VALUES", "TABLE",
}
KEYWORDS = _GRAMMAR_KEYWORDS | _MUTATION_KEYWORDS

_NUMERIC = ("integer", "real")


# --- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRef:
    name: str


@dataclass(frozen=True)
class Literal:
    value: "int | float | str | bool"


@dataclass(frozen=True)
class Comparison:
    op: str  # = != < <= > >=
    left: "ColumnRef | Literal"
    right: "ColumnRef | Literal"


@dataclass(frozen=True)
class Like:
    operand: "ColumnRef | Literal"
    pattern: str


@dataclass(frozen=True)
class InList:
    operand: "ColumnRef | Literal"
    values: tuple[Literal, ...]


@dataclass(frozen=True)
class Not:
    operand: object


@dataclass(frozen=True)
class And:
    parts: tuple

    def __post_init__(self) -> None:
        flat: list = []
        for p in self.parts:
            flat.extend(p.parts if isinstance(p, And) else [p])
        object.__setattr__(self, "parts", tuple(flat))


@dataclass(frozen=True)
class Or:
    parts: tuple

    def __post_init__(self) -> None:
        flat: list = []
        for p in self.parts:
            flat.extend(p.parts if isinstance(p, Or) else [p])
        object.__setattr__(self, "parts", tuple(flat))


@dataclass(frozen=True)
class Aggregate:
    func: str
    column: str | None  # None means COUNT(*)


@dataclass(frozen=True)
class SelectItem:
    expr: "ColumnRef | Aggregate"
    alias: str | None = None


@dataclass(frozen=True)
class OrderItem:
    key: str
    descending: bool = False


@dataclass(frozen=True)
class SqlQuery:
    select: tuple[SelectItem, ...]
    table: str
    where: object | None = None
    group_by: tuple[str, ...] = ()
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None


@dataclass(frozen=True)
class QueryResult:
    headers: tuple[str, ...]
    rows: tuple[tuple, ...]

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def to_text(self) -> str:
        return render_text_table(self.headers, list(self.rows))


# --- lexer ---------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str  # keyword ident int real string op punct eof
    text: str
    value: object
    line: int
    column: int


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    line = 1
    col = 1
    n = len(text)

    def advance(count: int) -> None:
        nonlocal pos, line, col
        for _ in range(count):
            if text[pos] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            pos += 1

    while pos < n:
        ch = text[pos]
        if ch in " \t\r\n":
            advance(1)
            continue
        start_line, start_col = line, col
        if ch == "'":
            value_chars: list[str] = []
            i = pos + 1
            while True:
                if i >= n:
                    raise SqlSyntaxError("unterminated string literal",
                                         start_line, start_col)
                if text[i] == "'":
                    if i + 1 < n and text[i + 1] == "'":
                        value_chars.append("'")
                        i += 2
                        continue
                    break
                value_chars.append(text[i])
                i += 1
            raw = text[pos:i + 1]
            advance(len(raw))
            tokens.append(_Token("string", raw, "".join(value_chars),
                                 start_line, start_col))
            continue
        m = _IDENT_RE.match(text, pos)
        if m:
            word = m.group()
            advance(len(word))
            upper = word.upper()
            if upper in KEYWORDS:
                tokens.append(_Token("keyword", upper, upper,
                                     start_line, start_col))
            else:
                tokens.append(_Token("ident", word, word,
                                     start_line, start_col))
            continue
        m = _NUMBER_RE.match(text, pos)
        if m:
            raw = m.group()
            advance(len(raw))
            if any(c in raw for c in ".eE"):
                tokens.append(_Token("real", raw, float(raw),
                                     start_line, start_col))
            else:
                tokens.append(_Token("int", raw, int(raw),
                                     start_line, start_col))
            continue
        two = text[pos:pos + 2]
        if two in ("<=", ">=", "!=", "<>"):
            advance(2)
            op = "!=" if two == "<>" else two
            tokens.append(_Token("op", op, op, start_line, start_col))
            continue
        if ch in "<>=":
            advance(1)
            tokens.append(_Token("op", ch, ch, start_line, start_col))
            continue
        if ch in "(),*;-":
            advance(1)
            tokens.append(_Token("punct", ch, ch, start_line, start_col))
            continue
        raise SqlSyntaxError(f"unexpected character {ch!r}",
                             start_line, start_col)
    tokens.append(_Token("eof", "", None, line, col))
    return tokens


# --- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = _lex(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        token = self.tokens[self.pos]
        if token.kind != "eof":
            self.pos += 1
        return token

    def error(self, message: str, token: _Token | None = None,
              expected: tuple[str, ...] = ()) -> SqlSyntaxError:
        token = token or self.peek()
        return SqlSyntaxError(message, token.line, token.column, expected)

    def at_keyword(self, *words: str) -> bool:
        token = self.peek()
        return token.kind == "keyword" and token.value in words

    def take_keyword(self, *words: str) -> bool:
        if self.at_keyword(*words):
            self.advance()
            return True
        return False

    def expect_keyword(self, word: str) -> _Token:
        if not self.at_keyword(word):
            got = self.peek().text or "end of input"
            raise self.error(f"got {got!r}", expected=(word,))
        return self.advance()

    def expect_punct(self, ch: str) -> _Token:
        token = self.peek()
        if token.kind != "punct" or token.value != ch:
            got = token.text or "end of input"
            raise self.error(f"got {got!r}", expected=(ch,))
        return self.advance()

    def expect_ident(self, what: str) -> _Token:
        token = self.peek()
        if token.kind != "ident":
            got = token.text or "end of input"
            raise self.error(f"got {got!r}", expected=(what,))
        return self.advance()

    # -- entry --

    def parse_query(self) -> SqlQuery:
        self.expect_keyword("SELECT")
        select, item_tokens = self.parse_select_list()
        self.expect_keyword("FROM")
        table = self.expect_ident("table name").value
        where = None
        if self.take_keyword("WHERE"):
            where = self.parse_expr()
        group_by: tuple[str, ...] = ()
        if self.at_keyword("GROUP"):
            self.advance()
            self.expect_keyword("BY")
            group_by = self.parse_ident_list("group column")
        order_by: list[OrderItem] = []
        order_tokens: list[_Token] = []
        if self.at_keyword("ORDER"):
            self.advance()
            self.expect_keyword("BY")
            while True:
                token = self.expect_ident("order column or alias")
                descending = False
                if self.take_keyword("DESC"):
                    descending = True
                elif self.take_keyword("ASC"):
                    descending = False
                order_by.append(OrderItem(key=token.value, descending=descending))
                order_tokens.append(token)
                if not self.take_punct(","):
                    break
        limit = None
        if self.at_keyword("LIMIT"):
            self.advance()
            token = self.peek()
            if token.kind != "int":
                got = token.text or "end of input"
                raise self.error(f"got {got!r}", expected=("non-negative integer",))
            limit = self.advance().value
        if self.peek().kind == "punct" and self.peek().value == ";":
            self.advance()
        if self.peek().kind != "eof":
            raise self.error(f"unexpected trailing input {self.peek().text!r}",
                             expected=("end of statement",))
        query = SqlQuery(select=tuple(select), table=table, where=where,
                         group_by=group_by, order_by=tuple(order_by),
                         limit=limit)
        self.check_aggregation_rules(query, item_tokens, order_tokens)
        return query

    def take_punct(self, ch: str) -> bool:
        token = self.peek()
        if token.kind == "punct" and token.value == ch:
            self.advance()
            return True
        return False

    def parse_select_list(self) -> tuple[list[SelectItem], list[_Token]]:
        items: list[SelectItem] = []
        tokens: list[_Token] = []
        while True:
            token = self.peek()
            expr = self.parse_select_expr()
            alias = None
            if self.take_keyword("AS"):
                alias = self.expect_ident("alias").value
            items.append(SelectItem(expr=expr, alias=alias))
            tokens.append(token)
            if not self.take_punct(","):
                break
        aliases = [i.alias for i in items if i.alias is not None]
        if len(set(aliases)) != len(aliases):
            raise self.error("duplicate select alias", tokens[0])
        return items, tokens

    def parse_select_expr(self) -> "ColumnRef | Aggregate":
        token = self.peek()
        if token.kind == "keyword" and token.value in AGGREGATE_FUNCS:
            func = self.advance().value
            self.expect_punct("(")
            if func == "COUNT" and self.peek().kind == "punct" \
                    and self.peek().value == "*":
                self.advance()
                column = None
            else:
                column = self.expect_ident("column name").value
            self.expect_punct(")")
            return Aggregate(func=func, column=column)
        if token.kind == "ident":
            return ColumnRef(name=self.advance().value)
        got = token.text or "end of input"
        raise self.error(f"got {got!r}",
                         expected=("column name", "aggregate function"))

    def parse_ident_list(self, what: str) -> tuple[str, ...]:
        names = [self.expect_ident(what).value]
        while self.take_punct(","):
            names.append(self.expect_ident(what).value)
        return tuple(names)

    # -- expressions --

    def parse_expr(self):
        parts = [self.parse_and_expr()]
        while self.take_keyword("OR"):
            parts.append(self.parse_and_expr())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def parse_and_expr(self):
        parts = [self.parse_not_expr()]
        while self.take_keyword("AND"):
            parts.append(self.parse_not_expr())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def parse_not_expr(self):
        if self.take_keyword("NOT"):
            return Not(self.parse_not_expr())
        if self.peek().kind == "punct" and self.peek().value == "(":
            self.advance()
            expr = self.parse_expr()
            self.expect_punct(")")
            return expr
        return self.parse_predicate()

    def parse_predicate(self):
        left = self.parse_operand()
        token = self.peek()
        negated = False
        if self.at_keyword("NOT"):
            # infix sugar: x NOT LIKE / x NOT IN
            self.advance()
            negated = True
            token = self.peek()
            if not self.at_keyword("LIKE", "IN"):
                got = token.text or "end of input"
                raise self.error(f"got {got!r}", expected=("LIKE", "IN"))
        if token.kind == "op":
            op = self.advance().value
            right = self.parse_operand()
            return Comparison(op=op, left=left, right=right)
        if self.at_keyword("LIKE"):
            self.advance()
            pattern_token = self.peek()
            if pattern_token.kind != "string":
                got = pattern_token.text or "end of input"
                raise self.error(f"got {got!r}", expected=("string literal",))
            self.advance()
            predicate = Like(operand=left, pattern=pattern_token.value)
            return Not(predicate) if negated else predicate
        if self.at_keyword("IN"):
            self.advance()
            self.expect_punct("(")
            values = [self.parse_literal()]
            while self.take_punct(","):
                values.append(self.parse_literal())
            self.expect_punct(")")
            predicate = InList(operand=left, values=tuple(values))
            return Not(predicate) if negated else predicate
        got = token.text or "end of input"
        raise self.error(f"got {got!r}",
                         expected=("comparison operator", "LIKE", "IN"))

    def parse_operand(self):
        token = self.peek()
        if token.kind == "ident":
            return ColumnRef(name=self.advance().value)
        return self.parse_literal()

    def parse_literal(self) -> Literal:
        token = self.peek()
        if token.kind == "punct" and token.value == "-":
            self.advance()
            number = self.peek()
            if number.kind not in ("int", "real"):
                got = number.text or "end of input"
                raise self.error(f"got {got!r}", expected=("number",))
            self.advance()
            return Literal(value=-number.value)
        if token.kind in ("int", "real", "string"):
            self.advance()
            return Literal(value=token.value)
        if self.at_keyword("TRUE"):
            self.advance()
            return Literal(value=True)
        if self.at_keyword("FALSE"):
            self.advance()
            return Literal(value=False)
        got = token.text or "end of input"
        raise self.error(f"got {got!r}",
                         expected=("number", "string", "TRUE", "FALSE"))

    # -- parse-time invariants --

    def check_aggregation_rules(self, query: SqlQuery,
                                item_tokens: list[_Token],
                                order_tokens: list[_Token]) -> None:
        has_aggregate = any(isinstance(i.expr, Aggregate) for i in query.select)
        if query.group_by:
            for item, token in zip(query.select, item_tokens):
                if isinstance(item.expr, ColumnRef) \
                        and item.expr.name not in query.group_by:
                    raise SqlSyntaxError(
                        f"column {item.expr.name!r} is selected but not grouped",
                        token.line, token.column)
        elif has_aggregate:
            for item, token in zip(query.select, item_tokens):
                if isinstance(item.expr, ColumnRef):
                    raise SqlSyntaxError(
                        f"column {item.expr.name!r} mixes with aggregates "
                        "without GROUP BY", token.line, token.column)
        if has_aggregate or query.group_by:
            aliases = {i.alias for i in query.select if i.alias is not None}
            for item, token in zip(query.order_by, order_tokens):
                if item.key not in aliases and item.key not in query.group_by:
                    raise SqlSyntaxError(
                        f"ORDER BY key {item.key!r} must be a grouped column "
                        "or a select alias", token.line, token.column)


def parse_sql(text: str) -> SqlQuery:
    """Parse one SELECT statement of the read-only subset."""
    return _Parser(text).parse_query()


# --- printer -------------------------------------------------------------------

def _print_literal(value) -> str:
    if value is True:
        return "TRUE"
    if value is False:
        return "FALSE"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value) if isinstance(value, float) else str(value)


def _print_operand(operand) -> str:
    if isinstance(operand, ColumnRef):
        return operand.name
    return _print_literal(operand.value)


def _print_expr(expr, parent_prec: int = 0) -> str:
    # precedence: OR=1, AND=2, NOT=3, predicates=4
    if isinstance(expr, Or):
        text = " OR ".join(_print_expr(p, 1) for p in expr.parts)
        prec = 1
    elif isinstance(expr, And):
        text = " AND ".join(_print_expr(p, 2) for p in expr.parts)
        prec = 2
    elif isinstance(expr, Not):
        text = "NOT " + _print_expr(expr.operand, 3)
        prec = 3
    elif isinstance(expr, Comparison):
        text = f"{_print_operand(expr.left)} {expr.op} {_print_operand(expr.right)}"
        prec = 4
    elif isinstance(expr, Like):
        text = f"{_print_operand(expr.operand)} LIKE {_print_literal(expr.pattern)}"
        prec = 4
    elif isinstance(expr, InList):
        values = ", ".join(_print_literal(v.value) for v in expr.values)
        text = f"{_print_operand(expr.operand)} IN ({values})"
        prec = 4
    else:
        raise TypeError(f"not an expression node: {expr!r}")
    if prec < parent_prec:
        return f"({text})"
    return text


def _select_label(expr) -> str:
    if isinstance(expr, ColumnRef):
        return expr.name
    return f"{expr.func}({expr.column if expr.column is not None else '*'})"


def print_sql(query: SqlQuery) -> str:
    """Canonical serialization; parse_sql(print_sql(q)) is structurally q."""
    parts = ["SELECT "]
    rendered = []
    for item in query.select:
        text = _select_label(item.expr)
        if item.alias is not None:
            text += f" AS {item.alias}"
        rendered.append(text)
    parts.append(", ".join(rendered))
    parts.append(f" FROM {query.table}")
    if query.where is not None:
        parts.append(" WHERE " + _print_expr(query.where))
    if query.group_by:
        parts.append(" GROUP BY " + ", ".join(query.group_by))
    if query.order_by:
        keys = ", ".join(
            f"{o.key} {'DESC' if o.descending else 'ASC'}"
            for o in query.order_by)
        parts.append(" ORDER BY " + keys)
    if query.limit is not None:
        parts.append(f" LIMIT {query.limit}")
    return "".join(parts)


# --- validation ----------------------------------------------------------------

def _literal_type(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "real"
    return "text"


def _operand_type(operand, table: Table) -> str:
    if isinstance(operand, ColumnRef):
        if operand.name not in table.headers:
            raise UnknownColumnError(operand.name)
        return table.column_types[table.column_index(operand.name)]
    return _literal_type(operand.value)


def _compatible(a: str, b: str) -> bool:
    if a in _NUMERIC and b in _NUMERIC:
        return True
    return a == b


def _validate_expr(expr, table: Table) -> None:
    if isinstance(expr, (And, Or)):
        for part in expr.parts:
            _validate_expr(part, table)
    elif isinstance(expr, Not):
        _validate_expr(expr.operand, table)
    elif isinstance(expr, Comparison):
        left = _operand_type(expr.left, table)
        right = _operand_type(expr.right, table)
        if not _compatible(left, right):
            raise TypeMismatchError(
                f"cannot compare {left} with {right} "
                f"({_print_expr(expr)})")
    elif isinstance(expr, Like):
        operand = _operand_type(expr.operand, table)
        if operand != "text":
            raise TypeMismatchError(f"LIKE needs a text operand, got {operand}")
    elif isinstance(expr, InList):
        operand = _operand_type(expr.operand, table)
        for value in expr.values:
            vtype = _literal_type(value.value)
            if not _compatible(operand, vtype):
                raise TypeMismatchError(
                    f"IN list value {_print_literal(value.value)} is {vtype}, "
                    f"operand is {operand}")
    else:
        raise TypeError(f"not an expression node: {expr!r}")


def validate_sql(query: SqlQuery, table: Table) -> SqlQuery:
    """Check table name, column existence, and operand/aggregate types."""
    if query.table != table.name:
        raise UnknownTableError(
            f"query names table {query.table!r}, expected {table.name!r}")
    for item in query.select:
        expr = item.expr
        if isinstance(expr, ColumnRef):
            _operand_type(expr, table)
        else:
            if expr.column is not None:
                ctype = _operand_type(ColumnRef(expr.column), table)
                if expr.func in ("SUM", "AVG") and ctype not in _NUMERIC:
                    raise TypeMismatchError(
                        f"{expr.func} needs a numeric column, "
                        f"{expr.column!r} is {ctype}")
    if query.where is not None:
        _validate_expr(query.where, table)
    for name in query.group_by:
        _operand_type(ColumnRef(name), table)
    aliases = {i.alias for i in query.select if i.alias is not None}
    for item in query.order_by:
        if item.key not in aliases:
            _operand_type(ColumnRef(item.key), table)
    return query


# --- execution -----------------------------------------------------------------

@lru_cache(maxsize=256)
def _like_regex(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.IGNORECASE | re.DOTALL)


def _operand_value(operand, row: tuple, col_idx: dict[str, int]):
    if isinstance(operand, ColumnRef):
        return row[col_idx[operand.name]]
    return operand.value


_COMPARATORS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def _eval_expr(expr, row: tuple, col_idx: dict[str, int]):
    """Three-valued evaluation: True, False, or None for unknown."""
    if isinstance(expr, Comparison):
        left = _operand_value(expr.left, row, col_idx)
        right = _operand_value(expr.right, row, col_idx)
        if left is None or right is None:
            return None
        return _COMPARATORS[expr.op](left, right)
    if isinstance(expr, Like):
        value = _operand_value(expr.operand, row, col_idx)
        if value is None:
            return None
        return _like_regex(expr.pattern).fullmatch(value) is not None
    if isinstance(expr, InList):
        value = _operand_value(expr.operand, row, col_idx)
        if value is None:
            return None
        return any(value == v.value for v in expr.values)
    if isinstance(expr, Not):
        inner = _eval_expr(expr.operand, row, col_idx)
        return None if inner is None else not inner
    if isinstance(expr, And):
        unknown = False
        for part in expr.parts:
            value = _eval_expr(part, row, col_idx)
            if value is False:
                return False
            if value is None:
                unknown = True
        return None if unknown else True
    if isinstance(expr, Or):
        unknown = False
        for part in expr.parts:
            value = _eval_expr(part, row, col_idx)
            if value is True:
                return True
            if value is None:
                unknown = True
        return None if unknown else False
    raise TypeError(f"not an expression node: {expr!r}")


def _aggregate_value(agg: Aggregate, rows: list[tuple],
                     col_idx: dict[str, int]):
    if agg.func == "COUNT" and agg.column is None:
        return len(rows)
    values = [row[col_idx[agg.column]] for row in rows]
    values = [v for v in values if v is not None]
    if agg.func == "COUNT":
        return len(values)
    if not values:
        return None
    if agg.func == "SUM":
        return sum(values)
    if agg.func == "AVG":
        return sum(values) / len(values)
    if agg.func == "MIN":
        return min(values)
    return max(values)


def _sort_key(value):
    # (is_null, value) with reverse=descending puts nulls last ascending and
    # first descending; equal tuples are never ordered so None never compares.
    return (value is None, value)


def execute_sql(query: SqlQuery, table: Table) -> QueryResult:
    """Run a validated query: filter, group, aggregate, order, limit."""
    validate_sql(query, table)
    col_idx = {name: i for i, name in enumerate(table.headers)}
    rows = list(table.rows())
    if query.where is not None:
        rows = [r for r in rows
                if _eval_expr(query.where, r, col_idx) is True]
    has_aggregate = any(isinstance(i.expr, Aggregate) for i in query.select)
    headers = tuple(
        item.alias if item.alias is not None else _select_label(item.expr)
        for item in query.select)
    out: list[tuple] = []
    sort_envs: list[dict] = []
    aliases = {item.alias: pos for pos, item in enumerate(query.select)
               if item.alias is not None}
    if query.group_by or has_aggregate:
        groups: dict[tuple, list[tuple]] = {}
        if query.group_by:
            for row in rows:
                key = tuple(row[col_idx[name]] for name in query.group_by)
                groups.setdefault(key, []).append(row)
        else:
            groups[()] = rows
        for key, group_rows in groups.items():
            key_by_name = dict(zip(query.group_by, key))
            record = []
            for item in query.select:
                if isinstance(item.expr, ColumnRef):
                    record.append(key_by_name[item.expr.name])
                else:
                    record.append(
                        _aggregate_value(item.expr, group_rows, col_idx))
            out.append(tuple(record))
            env = dict(key_by_name)
            for alias, pos in aliases.items():
                env[alias] = record[pos]
            sort_envs.append(env)
    else:
        for row in rows:
            record = tuple(row[col_idx[item.expr.name]]
                           for item in query.select)
            out.append(record)
            env = {name: row[col_idx[name]] for name in table.headers}
            for alias, pos in aliases.items():
                env[alias] = record[pos]
            sort_envs.append(env)
    if query.order_by:
        paired = list(zip(out, sort_envs))
        for item in reversed(query.order_by):
            paired.sort(key=lambda pair: _sort_key(pair[1][item.key]),
                        reverse=item.descending)
        out = [record for record, _ in paired]
    if query.limit is not None:
        out = out[:query.limit]
    return QueryResult(headers=headers, rows=tuple(out))


# --- LLM text-to-SQL ------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z]*\n?(.*?)```", re.DOTALL)
_SELECT_RE = re.compile(r"\bSELECT\b", re.IGNORECASE)

SQL_PROMPT_MARKER = "SQL SELECT statement"


def extract_sql(raw: str) -> str:
    """Pull the SQL statement out of a model completion.

    Markdown fences are stripped, prose before the first SELECT is dropped,
    and anything after the first semicolon is ignored.
    """
    candidates = [m.group(1) for m in _FENCE_RE.finditer(raw)]
    text = next((c for c in candidates if _SELECT_RE.search(c)), raw)
    m = _SELECT_RE.search(text)
    if m:
        text = text[m.start():]
    if ";" in text:
        text = text[:text.index(";") + 1]
    return text.strip()


def build_sql_prompt(subquery: str, preview, table_name: str) -> tuple[str, str]:
    """System/user texts asking for one statement of the subset grammar."""
    schema_lines = "\n".join(
        f"  {name} ({ctype})"
        for name, ctype in zip(preview.headers, preview.inferred_types))
    sample = render_text_table(preview.headers, list(preview.preview_rows))
    system_text = (
        f"Write a single SQL SELECT statement for the table \"{table_name}\".\n"
        "\n"
        "Columns:\n"
        f"{schema_lines}\n"
        "\n"
        f"First rows:\n{sample}\n"
        "\n"
        "Allowed grammar (read-only subset):\n"
        "  SELECT columns or aggregates (COUNT(*), COUNT(col), SUM, AVG, MIN, MAX)\n"
        f"  FROM {table_name} [WHERE ...] [GROUP BY cols] [ORDER BY col ASC|DESC] [LIMIT n]\n"
        "  WHERE supports = != < <= > >=, LIKE (text, % and _), IN (...), AND, OR, NOT.\n"
        "String literals use single quotes. No joins, no subqueries, no mutations.\n"
        f"Respond with ONLY the {SQL_PROMPT_MARKER}, no prose."
    )
    return system_text, subquery


def generate_sql(subquery: str, preview, table_name: str, llm,
                 retries: int = 2, max_tokens: int = 256) -> SqlQuery:
    """Ask the model for SQL, then parse and validate it; feed errors back.

    Performs at most 1 + retries completions and raises
    SqlGenerationFailedError when none yields a valid statement.
    """
    system_text, user_text = build_sql_prompt(subquery, preview, table_name)
    schema = schema_table(table_name, preview.headers, preview.inferred_types)
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        user = user_text
        if last_error is not None:
            user = (f"{user_text}\n\nThe previous statement was rejected: "
                    f"{last_error}\nReturn a corrected SELECT statement.")
        try:
            response = llm.chat(system_text, user, temperature=0.0,
                                max_tokens=max_tokens)
            statement = extract_sql(response.text)
            query = parse_sql(statement)
            return validate_sql(query, schema)
        except (SqlSyntaxError, UnknownTableError, UnknownColumnError,
                TypeMismatchError, LlmError) as exc:
            last_error = exc
    raise SqlGenerationFailedError(
        f"no valid SQL after {retries + 1} attempts: {last_error}",
        cause=last_error)
