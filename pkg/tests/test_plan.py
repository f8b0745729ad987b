import pytest

from qsuperopt.errors import PlanValidationError
from qsuperopt.plan import (FULL_SCAN, HASH, INDEX_LOOKUP, NESTED_LOOP, SORT_MERGE, Access, Join,
                            QueryPlan, bind_plan, height, iter_nodes, join_nodes, leaves,
                            validate_plan)
from qsuperopt.sqlfront import ColumnRef, Filter, JoinEdge, Param, bind, parse

from conftest import CHAIN3_SQL

AB = JoinEdge.of(ColumnRef("A", "id"), ColumnRef("B", "a_id"))
BC = JoinEdge.of(ColumnRef("B", "id"), ColumnRef("C", "b_id"))
FX = Filter(ColumnRef("A", "x"), "=", 1)


def chain_plan(alg1=HASH, alg2=HASH, a_path=FULL_SCAN):
    a = Access("A", a_path, "x" if a_path == INDEX_LOOKUP else None, (FX,))
    return QueryPlan(Join(alg2, (BC,), Join(alg1, (AB,), a, Access("B")), Access("C")))


def test_canonical_and_equality():
    p = chain_plan()
    assert p.canonical == "HJ[B.id=C.b_id](HJ[A.id=B.a_id](FS(A;x=1),FS(B)),FS(C))"
    assert p == chain_plan().with_id(9)
    assert p != chain_plan(SORT_MERGE)
    assert len({p, chain_plan().with_id(3)}) == 1


def test_json_round_trip():
    for p in (chain_plan(), chain_plan(NESTED_LOOP, SORT_MERGE, INDEX_LOOKUP).with_id(4)):
        back = QueryPlan.from_json(p.dumps())
        assert back == p and back.plan_id == p.plan_id
    cross = QueryPlan(Join(NESTED_LOOP, (), Access("A"), Access("C")))
    assert QueryPlan.from_json(cross.to_json()) == cross


def test_malformed_json():
    with pytest.raises(PlanValidationError):
        QueryPlan.from_json({"root": {"kind": "nope"}})
    with pytest.raises(PlanValidationError):
        QueryPlan.from_json({"root": {"kind": "join"}})


def test_traversal_helpers():
    p = chain_plan()
    kinds = [type(n).__name__ for n in iter_nodes(p.root)]
    assert kinds == ["Access", "Access", "Join", "Access", "Join"]
    assert [a.table for a in leaves(p.root)] == ["A", "B", "C"]
    assert len(join_nodes(p.root)) == 2 and height(p.root) == 2


def test_bind_plan():
    a = Access("A", FULL_SCAN, None, (Filter(ColumnRef("A", "x"), "=", Param(1)),))
    bound = bind_plan(QueryPlan(a), [7])
    assert bound.root.filters[0].value == 7


def test_validate_against_query(chain3):
    q = bind(parse(CHAIN3_SQL), chain3.schema)
    validate_plan(chain_plan(), chain3.schema, q)
    validate_plan(chain_plan(a_path=INDEX_LOOKUP), chain3.schema, q)
    bad = [
        QueryPlan(Join(HASH, (), Join(HASH, (AB,), Access("A", filters=(FX,)), Access("B")), Access("C"))),
        QueryPlan(Join(HASH, (BC,), Join(HASH, (AB,), Access("A"), Access("B")), Access("C"))),
        QueryPlan(Join(HASH, (AB,), Access("A", filters=(FX,)), Access("B"))),
        QueryPlan(Join(HASH, (BC,), Join(HASH, (AB,), Access("A", INDEX_LOOKUP, "id", (FX,)), Access("B")),
                       Access("C"))),
        QueryPlan(Join("Magic", (BC,), Join(HASH, (AB,), Access("A", filters=(FX,)), Access("B")),
                       Access("C"))),
        QueryPlan(Join(HASH, (AB,), Access("A", filters=(FX,)), Access("A"))),
    ]
    for p in bad:
        with pytest.raises(PlanValidationError):
            validate_plan(p, chain3.schema, q)


def test_unbound_parameter_rejected(chain3):
    a = Access("A", FULL_SCAN, None, (Filter(ColumnRef("A", "x"), "=", Param(1)),))
    with pytest.raises(PlanValidationError):
        validate_plan(QueryPlan(a), chain3.schema)
    validate_plan(QueryPlan(a), chain3.schema, require_bound=False)
