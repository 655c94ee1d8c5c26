"""Naive row-at-a-time interpreter for the query AST, test-suite only.

Deliberately different machinery from the package: rows are dicts, LIKE is
a hand-rolled recursive matcher instead of a regex, and ORDER BY uses a
single comparator instead of successive stable sorts. Semantics must agree
exactly: unknown (None) never satisfies WHERE, aggregates skip nulls,
groups keep first-appearance order, and nulls sort last ascending / first
descending.
"""
from __future__ import annotations

from functools import cmp_to_key, lru_cache

from crossrag.sqlengine import (
    Aggregate,
    And,
    ColumnRef,
    Comparison,
    InList,
    Like,
    Not,
    Or,
    SqlQuery,
)


@lru_cache(maxsize=None)
def _like_match(pattern: str, text: str) -> bool:
    p, t = pattern.lower(), text.lower()

    @lru_cache(maxsize=None)
    def match(i: int, j: int) -> bool:
        if i == len(p):
            return j == len(t)
        if p[i] == "%":
            return match(i + 1, j) or (j < len(t) and match(i, j + 1))
        if j == len(t):
            return False
        if p[i] == "_" or p[i] == t[j]:
            return match(i + 1, j + 1)
        return False

    return match(0, 0)


def _value(operand, row: dict):
    return row[operand.name] if isinstance(operand, ColumnRef) else operand.value


def _eval3(expr, row: dict):
    """True / False / None evaluation, written longhand."""
    if isinstance(expr, Comparison):
        left, right = _value(expr.left, row), _value(expr.right, row)
        if left is None or right is None:
            return None
        if expr.op == "=":
            return left == right
        if expr.op == "!=":
            return left != right
        if expr.op == "<":
            return left < right
        if expr.op == "<=":
            return left <= right
        if expr.op == ">":
            return left > right
        return left >= right
    if isinstance(expr, Like):
        value = _value(expr.operand, row)
        return None if value is None else _like_match(expr.pattern, value)
    if isinstance(expr, InList):
        value = _value(expr.operand, row)
        if value is None:
            return None
        return any(value == lit.value for lit in expr.values)
    if isinstance(expr, Not):
        inner = _eval3(expr.operand, row)
        return None if inner is None else not inner
    if isinstance(expr, And):
        values = [_eval3(part, row) for part in expr.parts]
        if any(v is False for v in values):
            return False
        if any(v is None for v in values):
            return None
        return True
    if isinstance(expr, Or):
        values = [_eval3(part, row) for part in expr.parts]
        if any(v is True for v in values):
            return True
        if any(v is None for v in values):
            return None
        return False
    raise TypeError(f"not an expression: {expr!r}")


def _aggregate(agg: Aggregate, rows: list[dict]):
    if agg.column is None:
        return len(rows)
    values = [row[agg.column] for row in rows if row[agg.column] is not None]
    if agg.func == "COUNT":
        return len(values)
    if not values:
        return None
    if agg.func == "SUM":
        total = values[0]
        for v in values[1:]:
            total = total + v
        return total
    if agg.func == "AVG":
        total = values[0]
        for v in values[1:]:
            total = total + v
        return total / len(values)
    if agg.func == "MIN":
        best = values[0]
        for v in values[1:]:
            if v < best:
                best = v
        return best
    best = values[0]
    for v in values[1:]:
        if v > best:
            best = v
    return best


def _label(expr) -> str:
    if isinstance(expr, ColumnRef):
        return expr.name
    return f"{expr.func}({expr.column if expr.column is not None else '*'})"


def execute_oracle(query: SqlQuery, table) -> tuple[tuple, tuple]:
    """(headers, rows) for a validated query against a package Table."""
    rows = [dict(zip(table.headers, values)) for values in table.rows()]
    if query.where is not None:
        rows = [row for row in rows if _eval3(query.where, row) is True]

    has_aggregate = any(isinstance(item.expr, Aggregate)
                        for item in query.select)
    envs: list[dict] = []
    out: list[tuple] = []
    if query.group_by or has_aggregate:
        groups: dict[tuple, list[dict]] = {}
        for row in rows:
            key = tuple(row[name] for name in query.group_by)
            groups.setdefault(key, []).append(row)
        if not query.group_by and not groups:
            groups[()] = []
        for key, members in groups.items():
            env = dict(zip(query.group_by, key))
            record = []
            for item in query.select:
                if isinstance(item.expr, ColumnRef):
                    record.append(env[item.expr.name])
                else:
                    record.append(_aggregate(item.expr, members))
                if item.alias is not None:
                    env[item.alias] = record[-1]
            out.append(tuple(record))
            envs.append(env)
    else:
        for row in rows:
            env = dict(row)
            record = []
            for item in query.select:
                record.append(row[item.expr.name])
                if item.alias is not None:
                    env[item.alias] = record[-1]
            out.append(tuple(record))
            envs.append(env)

    if query.order_by:
        def compare(a: int, b: int) -> int:
            for item in query.order_by:
                va, vb = envs[a][item.key], envs[b][item.key]
                if va is None and vb is None:
                    result = 0
                elif va is None:
                    result = 1
                elif vb is None:
                    result = -1
                elif va == vb:
                    result = 0
                else:
                    result = -1 if va < vb else 1
                if item.descending:
                    result = -result
                if result:
                    return result
            return 0

        order = sorted(range(len(out)), key=cmp_to_key(compare))
        out = [out[i] for i in order]
    if query.limit is not None:
        out = out[:query.limit]
    headers = tuple(item.alias if item.alias is not None else _label(item.expr)
                    for item in query.select)
    return headers, tuple(out)
