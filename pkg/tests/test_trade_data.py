import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradequil import (
    CostMatrices,
    EmptyMatrixError,
    InvalidFlowError,
    SchemaError,
    TradeFlowTensor,
    build_cost_matrices,
    read_flows_csv,
    shares,
)


def tensor(countries, goods, flow):
    return TradeFlowTensor(countries=countries, goods=goods, flow=np.asarray(flow, float))


class TestBuildCostMatrices:
    def test_two_country_single_good_bookkeeping(self):
        flow = np.zeros((2, 2, 1))
        flow[0, 1, 0] = 3.0  # country 1 exports 3 to country 2
        flow[1, 0, 0] = 5.0
        cm = build_cost_matrices(tensor(("a", "b"), ("g",), flow))
        assert cm.C.tolist() == [[5.0, 3.0]]
        assert cm.B.tolist() == [[3.0, 5.0]]
        assert cm.balances.tolist() == [-2.0, 2.0]
        assert cm.balances.sum() == 0.0
        assert cm.psi.tolist() == [8.0]
        assert cm.incomes.tolist() == [3.0, 5.0]

    def test_all_zero_flows(self):
        cm = build_cost_matrices(tensor(("a", "b"), ("g", "h"), np.zeros((2, 2, 2))))
        assert not cm.C.any()
        assert not cm.B.any()
        assert not cm.psi.any()
        assert not cm.balances.any()

    def test_every_flow_counted_once_each_side(self, rng):
        # Oracle: loop over all cells and accumulate both roles by hand.
        flow = rng.integers(0, 50, size=(4, 4, 3)).astype(float)
        flow[np.arange(4), np.arange(4), :] = 0.0
        cm = build_cost_matrices(tensor(tuple("abcd"), tuple("xyz"), flow))
        C_expect = np.zeros((3, 4))
        B_expect = np.zeros((3, 4))
        for k in range(4):
            for j in range(4):
                for s in range(3):
                    B_expect[s, k] += flow[k, j, s]
                    C_expect[s, j] += flow[k, j, s]
        np.testing.assert_array_equal(cm.C, C_expect)
        np.testing.assert_array_equal(cm.B, B_expect)
        assert cm.balances.sum() == 0.0
        np.testing.assert_array_equal(cm.C.sum(axis=1), cm.B.sum(axis=1))

    def test_rejects_negative_entry_with_index(self):
        flow = np.zeros((2, 2, 1))
        flow[0, 1, 0] = -1.0
        with pytest.raises(InvalidFlowError) as err:
            tensor(("a", "b"), ("g",), flow)
        assert err.value.index == (0, 1, 0)

    def test_rejects_non_finite(self):
        flow = np.zeros((2, 2, 1))
        flow[1, 0, 0] = np.nan
        with pytest.raises(InvalidFlowError):
            tensor(("a", "b"), ("g",), flow)

    def test_rejects_self_flow(self):
        flow = np.zeros((2, 2, 1))
        flow[1, 1, 0] = 2.0
        with pytest.raises(InvalidFlowError) as err:
            tensor(("a", "b"), ("g",), flow)
        assert err.value.index == (1, 1, 0)

    def test_rejects_single_country(self):
        with pytest.raises(InvalidFlowError):
            tensor(("a",), ("g",), np.zeros((1, 1, 1)))


@st.composite
def integer_tensors(draw):
    m = draw(st.integers(2, 5))
    n = draw(st.integers(1, 3))
    cells = draw(
        st.lists(
            st.tuples(
                st.integers(0, m - 1),
                st.integers(0, m - 1),
                st.integers(0, n - 1),
                st.integers(0, 999),
            ),
            max_size=20,
        )
    )
    flow = np.zeros((m, m, n))
    for k, j, s, value in cells:
        if k != j:
            flow[k, j, s] += value
    return flow


class TestDataProperties:
    @given(integer_tensors())
    @settings(max_examples=60, deadline=None)
    def test_balance_and_supply_identities(self, flow):
        m, _, n = flow.shape
        cm = build_cost_matrices(
            tensor(tuple(f"c{i}" for i in range(m)), tuple(f"g{s}" for s in range(n)), flow)
        )
        assert cm.balances.sum() == 0.0  # integer-valued data sums exactly
        np.testing.assert_array_equal(cm.C.sum(axis=1), cm.psi)
        np.testing.assert_array_equal(cm.B.sum(axis=1), cm.psi)

    @given(integer_tensors(), st.randoms(use_true_random=False))
    @settings(max_examples=40, deadline=None)
    def test_permutation_equivariance(self, flow, rand):
        m, _, n = flow.shape
        names = tuple(f"c{i}" for i in range(m))
        goods = tuple(f"g{s}" for s in range(n))
        perm = list(range(m))
        rand.shuffle(perm)
        cm = build_cost_matrices(tensor(names, goods, flow))
        permuted = flow[np.ix_(perm, perm)]
        cm_p = build_cost_matrices(
            tensor(tuple(names[i] for i in perm), goods, permuted)
        )
        np.testing.assert_array_equal(cm_p.C, cm.C[:, perm])
        np.testing.assert_array_equal(cm_p.B, cm.B[:, perm])
        np.testing.assert_array_equal(cm_p.balances, cm.balances[perm])


class TestShares:
    def test_single_nonzero_column(self):
        C = np.array([[0.0, 2.0], [0.0, 1.0]])
        B = np.ones((2, 2))
        with pytest.warns(UserWarning):
            cm = CostMatrices.from_supply_demand(C, B, balance_mode="warn")
        report = shares(cm)
        assert report.country_demand.tolist() == [0.0, 1.0]

    def test_all_ones_symmetric(self):
        cm = CostMatrices.from_supply_demand(np.ones((2, 2)), np.ones((2, 2)))
        report = shares(cm)
        for vector in (
            report.country_demand,
            report.country_supply,
            report.goods_demand,
            report.goods_supply,
        ):
            np.testing.assert_array_equal(vector, [0.5, 0.5])

    def test_column_sums_one_two_three(self):
        # Hand sum: total 6, shares 1/6, 2/6, 3/6.
        C = np.array([[1.0, 0.0, 3.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
        B = C.copy()
        cm = CostMatrices.from_supply_demand(C, B)
        report = shares(cm)
        np.testing.assert_allclose(
            report.country_demand, [1 / 6, 2 / 6, 3 / 6], rtol=0, atol=1e-15
        )

    def test_share_vectors_sum_to_one(self, rng):
        C = rng.uniform(0.0, 5.0, (4, 6))
        B = rng.uniform(0.1, 5.0, (4, 6))
        with pytest.warns(UserWarning):
            cm = CostMatrices.from_supply_demand(C, B, balance_mode="warn")
        report = shares(cm)
        for vector in (
            report.country_demand,
            report.country_supply,
            report.goods_demand,
            report.goods_supply,
        ):
            assert abs(vector.sum() - 1.0) <= 1e-12
            assert np.all(vector >= 0.0) and np.all(vector <= 1.0)

    def test_ranked_is_descending_with_labels(self):
        C = np.array([[1.0, 3.0], [2.0, 2.0]])
        cm = CostMatrices.from_supply_demand(C, C.copy())
        ranked = shares(cm).ranked("country_demand")
        assert ranked[0] == ("country2", 0.625)
        assert ranked[1] == ("country1", 0.375)

    def test_empty_matrix_named(self):
        with pytest.warns(UserWarning):
            cm = CostMatrices.from_supply_demand(
                np.zeros((2, 2)), np.ones((2, 2)), balance_mode="warn"
            )
        with pytest.raises(EmptyMatrixError) as err:
            shares(cm)
        assert err.value.which == "C"


class TestBalanceModes:
    def test_strict_mode_rejects_mirror_gap(self):
        C = np.array([[1.0, 0.0]])
        B = np.array([[0.0, 2.0]])
        with pytest.raises(ValueError):
            CostMatrices.from_supply_demand(C, B, balance_mode="strict")

    def test_warn_mode_reports_residual(self):
        C = np.array([[1.0, 0.0]])
        B = np.array([[0.0, 2.0]])
        with pytest.warns(UserWarning, match="balance"):
            cm = CostMatrices.from_supply_demand(C, B, balance_mode="warn")
        assert cm.balances.sum() == 1.0


class TestCsv:
    def write(self, tmp_path, text):
        path = tmp_path / "flows.csv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_round_trip(self, tmp_path):
        path = self.write(
            tmp_path,
            "year,reporter,partner,product,value\n"
            "2020,a,b,g,3\n"
            "2020,b,a,g,5\n",
        )
        tensors = read_flows_csv(path)
        cm = build_cost_matrices(tensors[2020])
        assert cm.C.tolist() == [[5.0, 3.0]]
        assert cm.B.tolist() == [[3.0, 5.0]]

    def test_empty_file(self, tmp_path):
        with pytest.raises(SchemaError):
            read_flows_csv(self.write(tmp_path, ""))

    def test_bad_header(self, tmp_path):
        with pytest.raises(SchemaError):
            read_flows_csv(self.write(tmp_path, "a,b,c,d,e\n1,2,3,4,5\n"))

    def test_bad_rows_reported_with_line_numbers(self, tmp_path):
        path = self.write(
            tmp_path,
            "year,reporter,partner,product,value\n"
            "2020,a,b,g,3\n"
            "2020,a,b,g,not-a-number\n"
            "2020,a,a,g,7\n",
        )
        with pytest.raises(SchemaError) as err:
            read_flows_csv(path)
        lines = [row[0] for row in err.value.rows]
        assert lines == [3, 4]

    def test_unknown_labels_collected(self, tmp_path):
        path = self.write(
            tmp_path,
            "year,reporter,partner,product,value\n"
            "2020,a,b,g,3\n"
            "2020,zz,b,g,1\n"
            "2020,a,b,qq,2\n",
        )
        with pytest.raises(SchemaError) as err:
            read_flows_csv(path, countries=["a", "b"], products=["g"])
        problems = dict(err.value.rows)
        assert "zz" in problems[3]
        assert "qq" in problems[4]

    def test_year_filter_and_duplicate_sum(self, tmp_path):
        path = self.write(
            tmp_path,
            "year,reporter,partner,product,value\n"
            "2019,a,b,g,1\n"
            "2020,a,b,g,2\n"
            "2020,a,b,g,3\n",
        )
        tensors = read_flows_csv(path, year=2020)
        assert list(tensors) == [2020]
        assert tensors[2020].flow[0, 1, 0] == 5.0
