import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracfact.correspond import (
    TableModel,
    alias_substitutions,
    cell_levels,
    correspondence_report,
    design_table_matrix,
    equivalent_sufficient_statistics,
    format_move,
    hierarchical_models,
    is_decomposable,
    no_hierarchical_correspondent,
    primitive_moves_for_decomposable,
    table_model_matrix,
)
from fracfact.design import DesignSpec, build_design_matrix
from fracfact.errors import ParseError, ValidationError
from fracfact.model import ModelSpec, build_covariate_matrix, parse_model

DESIGNS = {
    4: ["D=ABC"],
    5: ["D=AB", "E=AC"],
    6: ["D=AB", "E=AC", "F=BC"],
}

# eight-run designs: (p, null model, corresponding model of the 2^3 table)
EIGHT_RUN_POISSON = [
    (4, "A/B/C/D", "A/B/C + (ABC)"),
    (4, "AB/C/D", "AB/C + (ABC)"),
    (4, "AB/AC/D", "AB/AC + (ABC)"),
    (5, "A/B/C/D/E", "AB/AC"),
    (5, "A/BC/D/E", "AB/AC/BC"),
    (5, "A/BE/C/D", "AB/AC + (ABC)"),
    (6, "A/B/C/D/E/F", "AB/AC/BC"),
]

# the same designs with binomial responses, on a 2^4 table whose last axis is the response
EIGHT_RUN_BINOMIAL = [
    (4, "A/B/C/D", "AD/BD/CD/ABC + (ABC|D)"),
    (4, "AB/C/D", "ABD/CD/ABC + (ABC|D)"),
    (4, "AB/AC/D", "ABD/ACD/ABC + (ABC|D)"),
    (5, "A/B/C/D/E", "ABD/ACD/ABC"),
    (5, "A/BC/D/E", "ABD/ACD/BCD/ABC"),
    (5, "A/BE/C/D", "ABD/ACD/ABC + (ABC|D)"),
    (6, "A/B/C/D/E/F", "ABD/ACD/BCD/ABC"),
]

SIXTEEN_RUN = [
    (["E=ABC", "F=ABD"], "AB/AC/AD/BC/BD/E/F", "ABC/ABD"),
    (["E=ABC", "F=ABD"], "AB/AC/AD/BC/BD/CD/E/F", "ABC/ABD/CD"),
    (["E=ABC", "F=ABD", "G=ACD"], "AB/AC/AD/BC/BD/CD/E/F/G", "ABC/ABD/ACD"),
    (["E=ABC", "F=ABD", "G=ACD", "H=BCD"], "AB/AC/AD/BC/BD/CD/E/F/G/H", "ABC/ABD/ACD/BCD"),
]


def design_matrix_for(relations, model, family="poisson"):
    spec = DesignSpec.from_relations(_p_of(relations), relations)
    A, m = design_table_matrix(spec, parse_model(model), family)
    return A, m


def _p_of(relations) -> int:
    return max("ABCDEFGHJK".index(r[0]) for r in relations) + 1


class TestTableModel:
    def test_parse_and_str(self):
        tm = TableModel.parse("AC/AB + (ABC) + (ABC|D)", 4)
        assert str(tm) == "AB/AC + (ABC) + (ABC|D)"
        assert not tm.is_hierarchical

    @pytest.mark.parametrize("text", ["AZ", "AB/ + ", "AE"])
    def test_bad(self, text):
        with pytest.raises((ParseError, ValidationError)):
            TableModel.parse(text, 3)

    def test_conditional_independence_rows(self):
        M = table_model_matrix(TableModel.parse("AB/AC", 3))
        assert M.shape == (8, 8)
        levels = cell_levels(3)
        # first block: y_{ij.}
        for row, (i, j) in zip(M[:4], itertools.product((0, 1), repeat=2)):
            assert row.tolist() == [int(l[0] == i and l[1] == j) for l in levels]

    def test_no_three_factor_rows(self):
        assert table_model_matrix(TableModel.parse("AB/AC/BC", 3)).shape == (12, 8)

    def test_extra_contrast_rows(self):
        M = table_model_matrix(TableModel.parse("AB/AC + (ABC)", 3))
        assert M.shape == (10, 8)
        # cells 111, 122, 212, 221 in lexicographic order
        assert M[8].tolist() == [1, 0, 0, 1, 0, 1, 1, 0]
        assert M[9].tolist() == [0, 1, 1, 0, 1, 0, 0, 1]


class TestEquivalence:
    def test_conditional_independence(self):
        A, m = design_matrix_for(DESIGNS[5], "A/B/C/D/E")
        assert m == 3
        assert equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse("AB/AC", 3)))

    def test_be_model_is_strictly_larger(self):
        A, _ = design_matrix_for(DESIGNS[5], "A/BE/C/D")
        assert not equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse("AB/AC", 3)))

    @pytest.mark.parametrize("p, model, table", EIGHT_RUN_POISSON)
    def test_eight_run_poisson(self, p, model, table):
        A, m = design_matrix_for(DESIGNS[p], model)
        assert equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse(table, m)))

    @pytest.mark.parametrize("p, model, table", EIGHT_RUN_BINOMIAL)
    def test_eight_run_binomial(self, p, model, table):
        A, m = design_matrix_for(DESIGNS[p], model, "binomial")
        assert m == 4
        assert equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse(table, m)))

    @pytest.mark.parametrize("relations, model, table", SIXTEEN_RUN)
    def test_sixteen_run(self, relations, model, table):
        A, m = design_matrix_for(relations, model)
        assert equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse(table, m)))

    def test_eight_factor_without_h(self):
        # leaving H out of the eight-factor model gives the seven-factor answer
        A, m = design_matrix_for(SIXTEEN_RUN[3][0], "AB/AC/AD/BC/BD/CD/E/F/G")
        assert equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse("ABC/ABD/ACD", m)))
        assert not equivalent_sufficient_statistics(A, table_model_matrix(TableModel.parse("ABC/ABD/ACD/BCD", m)))

    @given(st.data())
    def test_equivalence_relation(self, data):
        rows = data.draw(st.integers(1, 4))
        A = np.array(data.draw(st.lists(st.lists(st.integers(-2, 2), min_size=5, max_size=5), min_size=rows, max_size=rows)))
        T1 = np.array(data.draw(st.lists(st.lists(st.integers(-2, 2), min_size=rows, max_size=rows), min_size=rows, max_size=rows)))
        T2 = np.array(data.draw(st.lists(st.lists(st.integers(-2, 2), min_size=rows, max_size=rows), min_size=rows, max_size=rows)))
        B, C = T1 @ A, T2 @ T1 @ A
        assert equivalent_sufficient_statistics(A, A)
        assert equivalent_sufficient_statistics(A, B) == equivalent_sufficient_statistics(B, A)
        if equivalent_sufficient_statistics(A, B) and equivalent_sufficient_statistics(B, C):
            assert equivalent_sufficient_statistics(A, C)


class TestSearch:
    def test_hierarchical_model_count(self):
        # brute force: nonempty antichains of axis sets, the empty set standing for the intercept-only model
        for m in (2, 3, 4):
            sets = [frozenset(c) for r in range(m + 1) for c in itertools.combinations(range(m), r)]
            count = 0
            for mask in range(1, 2 ** len(sets)):
                chosen = [s for b, s in enumerate(sets) if mask >> b & 1]
                if all(not (a < b) for a in chosen for b in chosen):
                    count += 1
            assert len(hierarchical_models(m)) == count
        assert len(hierarchical_models(4)) == 167

    def test_report_hierarchical(self):
        A, m = design_matrix_for(["E=ABC", "F=ABD"], "AB/AC/AD/BC/BD/E/F")
        rep = correspondence_report(A, m)
        assert str(rep.hierarchical) == "ABC/ABD"

    def test_report_with_extra(self):
        A, m = design_matrix_for(DESIGNS[4], "A/B/C/D")
        rep = correspondence_report(A, m)
        assert rep.hierarchical is None
        assert str(rep.match) == "A/B/C + (ABC)"

    def test_five_factor_resolution_five(self):
        A, m = design_matrix_for(["E=ABCD"], "A/B/C/D/E")
        assert no_hierarchical_correspondent(A, m)
        rep = correspondence_report(A, m)
        assert rep.hierarchical is None and "no hierarchical correspondent" in rep.verdict

    def test_alias_substitution_count(self):
        spec = DesignSpec.from_relations(6, ["E=ABC", "F=ABD"])
        model = parse_model("AB/AC/AD/BC/BD/E/F")
        subs = alias_substitutions(model, spec)
        assert len(subs) == 48
        D = build_design_matrix(spec)
        target = table_model_matrix(TableModel.parse("ABC/ABD", 4))
        for terms in subs:
            X0 = build_covariate_matrix(D, ModelSpec(terms, hierarchical=False))
            assert equivalent_sufficient_statistics(X0.entries.T, target)

    def test_basic_factors_first(self):
        spec = DesignSpec.from_relations(4, ["D=ABC"])
        with pytest.raises(ValidationError):
            design_table_matrix(spec, parse_model("A/B/C/D"), "gamma")


class TestPrimitiveMoves:
    def test_conditional_independence(self):
        ms = primitive_moves_for_decomposable(TableModel.parse("AB/AC", 3))
        assert {format_move(z, 3) for z in ms} == {"(111)(122)-(112)(121)", "(211)(222)-(212)(221)"}

    def test_abc_abd(self):
        ms = primitive_moves_for_decomposable(TableModel.parse("ABC/ABD", 4))
        expected = {f"({a}{b}11)({a}{b}22)-({a}{b}12)({a}{b}21)" for a in "12" for b in "12"}
        assert {format_move(z, 4) for z in ms} == expected

    def test_independence(self):
        ms = primitive_moves_for_decomposable(TableModel.parse("A/B", 2))
        assert [format_move(z, 2) for z in ms] == ["(11)(22)-(12)(21)"]

    @pytest.mark.parametrize("text", ["AB/AC", "ABC/ABD", "A/B", "AB/BC/CD", "ABC/CD", "A/B/C"])
    def test_moves_in_kernel(self, text):
        tm = TableModel.parse(text, _axes(text))
        ms = primitive_moves_for_decomposable(tm)
        assert not np.any(table_model_matrix(tm) @ ms.moves.T)

    def test_non_decomposable(self):
        tm = TableModel.parse("AB/AC/BC", 3)
        assert not is_decomposable(tm)
        with pytest.raises(ValidationError):
            primitive_moves_for_decomposable(tm)

    def test_decomposable_detection(self):
        assert is_decomposable(TableModel.parse("ABC/ABD", 4))
        assert not is_decomposable(TableModel.parse("AB/BC/CD/AD", 4))
        assert not is_decomposable(TableModel.parse("AB/AC + (ABC)", 3))


def _axes(text: str) -> int:
    return max("ABCD".index(c) for c in text if c.isalpha()) + 1
