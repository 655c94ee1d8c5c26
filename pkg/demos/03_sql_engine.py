"""
The SELECT-only SQL engine
==========================

Table knowledge bases are queried through a small validated SQL dialect:
single-table SELECT with WHERE, GROUP BY, ORDER BY, LIMIT and the five
aggregates. Anything that could write is rejected at the parser.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from crossrag.errors import SqlSyntaxError, TypeMismatchError, UnknownColumnError
from crossrag.sqlengine import execute_sql, parse_sql, print_sql, validate_sql
from crossrag.tables import load_csv

csv = Path(tempfile.mkdtemp(prefix="crossrag-demo-")) / "machines.csv"
csv.write_text(
    "machine_id,zone,temperature,status\n"
    "1,north,95.5,hot\n"
    "2,north,80.0,ok\n"
    "3,south,99.1,hot\n"
    "4,south,,ok\n"          # empty cell -> NULL
    "5,east,71.2,ok\n",
    encoding="utf-8")
table = load_csv(csv, "machines")
print("columns:", dict(zip(table.headers, table.column_types)))

# Parsing produces an AST; printing it back is canonical, so a query
# survives a parse -> print -> parse round trip unchanged.
query = parse_sql("select zone, avg(temperature) from machines "
                  "where status = 'hot' or temperature >= 95 "
                  "group by zone order by zone asc")
print("canonical form:", print_sql(query))
assert parse_sql(print_sql(query)) == query

# Validation binds the query to a concrete table schema first.
validate_sql(query, table)
result = execute_sql(query, table)
print(result.to_text())

# NULL comparisons are never true, so the row with the empty cell only
# appears when no predicate touches its temperature.
count = execute_sql(parse_sql(
    "SELECT COUNT(*) FROM machines WHERE temperature < 200"), table)
print("rows with a known temperature:", count.rows[0][0])

# LIKE supports % and _ wildcards, case-insensitively.
like = execute_sql(parse_sql(
    "SELECT machine_id FROM machines WHERE zone LIKE 'NOR%'"), table)
print("machines in zones starting with 'nor':",
      [row[0] for row in like.rows])

# Three flavours of rejection: write statements die in the parser,
# unknown columns and type clashes die in validation.
for bad, expected in [
        ("DROP TABLE machines", SqlSyntaxError),
        ("SELECT nosuch FROM machines", UnknownColumnError),
        ("SELECT zone FROM machines WHERE zone > 5", TypeMismatchError)]:
    try:
        validate_sql(parse_sql(bad), table)
    except expected as exc:
        print(f"rejected ({expected.__name__}): {exc}")
