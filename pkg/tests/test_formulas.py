"""Bit-exact semantics of the formula language and its SMT-LIB 2 rendering."""

import random

import pytest

from bikind.formulas import (
    FALSE, TRUE, BinOp, BoolConst, BoolOp, Cmp, Const, Not, Var, collect_vars,
    conj, disj, eval_bv_op, eval_cmp, eval_term, iter_subterms, mask,
    to_signed, to_smtlib_script, to_unsigned,
)


def test_width_masks_and_signedness_helpers():
    assert mask(8) == 255
    assert to_signed(255, 8) == -1
    assert to_signed(127, 8) == 127
    assert to_unsigned(-1, 8) == 255
    assert to_unsigned(-128, 8) == 128


@pytest.mark.parametrize("op,a,b,expected", [
    ("add", 255, 1, 0),            # wraparound
    ("sub", 0, 1, 255),
    ("mul", 16, 16, 0),
    ("udiv", 7, 2, 3),
    ("udiv", 7, 0, 255),           # total division: x/0 = all ones
    ("urem", 7, 0, 7),             # x%0 = x
    ("sdiv", 254, 2, 255),         # -2 / 2 = -1, truncating toward zero
    ("sdiv", 7, 254, 253),         # 7 / -2 = -3
    ("sdiv", 128, 255, 128),       # INT_MIN / -1 wraps to INT_MIN
    ("sdiv", 5, 0, 255),           # positive / 0 = -1
    ("sdiv", 251, 0, 1),           # negative / 0 = 1
    ("srem", 7, 253, 1),           # sign follows the dividend
    ("srem", 249, 3, 255),         # -7 rem 3 = -1
    ("shl", 1, 7, 128),
    ("shl", 1, 8, 0),              # shift by >= width clears
    ("lshr", 128, 7, 1),
    ("lshr", 128, 200, 0),
    ("ashr", 128, 1, 192),         # sign-filling shift
    ("ashr", 128, 99, 255),        # saturates to the sign bit
    ("ashr", 64, 99, 0),
    ("band", 0b1100, 0b1010, 0b1000),
    ("bor", 0b1100, 0b1010, 0b1110),
    ("bxor", 0b1100, 0b1010, 0b0110),
])
def test_bv_op_vectors(op, a, b, expected):
    assert eval_bv_op(op, 8, a, b) == expected


def test_bv_ops_match_python_reference_semantics():
    rng = random.Random(8080)
    for _ in range(4000):
        a, b = rng.randrange(256), rng.randrange(256)
        sa, sb = to_signed(a, 8), to_signed(b, 8)
        assert eval_bv_op("add", 8, a, b) == (a + b) % 256
        assert eval_bv_op("sub", 8, a, b) == (a - b) % 256
        assert eval_bv_op("mul", 8, a, b) == (a * b) % 256
        if b:
            assert eval_bv_op("udiv", 8, a, b) == a // b
            assert eval_bv_op("urem", 8, a, b) == a % b
        if sb:
            q = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                q = -q
            assert eval_bv_op("sdiv", 8, a, b) == q & 255
            assert eval_bv_op("srem", 8, a, b) == (sa - q * sb) & 255


def test_cmp_vectors():
    assert eval_cmp("eq", 8, 5, 5)
    assert not eval_cmp("eq", 8, 5, 6)
    assert eval_cmp("ult", 8, 1, 255)
    assert not eval_cmp("slt", 8, 1, 255)   # 255 is -1 signed
    assert eval_cmp("slt", 8, 255, 1)
    assert eval_cmp("ule", 8, 7, 7)
    assert eval_cmp("sle", 8, 128, 128)     # INT_MIN <=s INT_MIN


def test_empty_connectives_collapse_to_constants():
    assert conj() is TRUE
    assert disj() is FALSE
    assert conj(TRUE, TRUE) is TRUE
    single = Cmp("eq", Var("x", 0, 8), Const(1, 8))
    assert conj(single) == single
    assert disj(single) == single


def test_eval_term_over_step_indexed_environment():
    x0, x1 = Var("x", 0, 8), Var("x", 1, 8)
    f = conj(Cmp("eq", x1, BinOp("add", x0, Const(1, 8))),
             Cmp("ult", x0, Const(10, 8)))
    assert eval_term(f, {("x", 0): 4, ("x", 1): 5}) is True
    assert eval_term(f, {("x", 0): 4, ("x", 1): 6}) is False
    assert eval_term(Not(f), {("x", 0): 4, ("x", 1): 6}) is True


def test_collect_vars_and_subterm_iteration():
    f = disj(Cmp("eq", Var("a", 0, 8), Var("b", 3, 16)),
             Not(Cmp("ult", Var("a", 2, 8), Const(4, 8))))
    assert collect_vars(f) == {("a", 0): 8, ("b", 3): 16, ("a", 2): 8}
    names = {t.name for t in iter_subterms(f) if isinstance(t, Var)}
    assert names == {"a", "b"}


def test_smtlib_script_is_byte_exact():
    f = conj(Cmp("eq", Var("x", 1, 8), BinOp("add", Var("x", 0, 8), Const(1, 8))),
             Cmp("sle", Var("y", 0, 12), Const(4094, 12)))
    expected = (
        "(set-logic QF_BV)\n"
        "(declare-const x@0 (_ BitVec 8))\n"
        "(declare-const x@1 (_ BitVec 8))\n"
        "(declare-const y@0 (_ BitVec 12))\n"
        "(assert (and (= x@1 (bvadd x@0 #x01)) (bvsle y@0 #xffe)))\n"
        "(check-sat)\n"
    )
    assert to_smtlib_script(f) == expected


def test_smtlib_renders_boolean_structure():
    a = Var("a", 0, 8)
    f = disj(Not(Cmp("ult", a, Const(3, 8))), Cmp("eq", a, Const(1, 8)))
    text = to_smtlib_script(f)
    assert "(or (not (bvult a@0 #x03)) (= a@0 #x01))" in text
    # constants still produce a syntactically complete script
    assert to_smtlib_script(FALSE).count("assert") == 1
    # disjunction with a true arm folds away before rendering
    assert disj(f, TRUE) is TRUE


def test_smtlib_uses_binary_for_widths_not_divisible_by_four():
    f = Cmp("eq", Var("v", 0, 5), Const(6, 5))
    assert "(= v@0 #b00110)" in to_smtlib_script(f)
    assert "(_ BitVec 5)" in to_smtlib_script(f)


def test_boolconst_singletons():
    assert BoolConst(True) == TRUE
    assert TRUE.value and not FALSE.value
