import numpy as np
import pytest

from conftest import make_micro
from popforge.ingest import VariableBinning
from popforge.tables import (
    ContingencyTable,
    dump_table,
    fill_zero_cells,
    marginal_of,
    seed_from_microdata,
)

GENDER = VariableBinning("gender", "categorical", ("m", "f"))
SIZE = VariableBinning("hh_size", "ordinal", ("1-2", "3-4"), (1, 3, 5))


def micro_with(rows, weights=None):
    hh = []
    persons = []
    for i, (gender, size) in enumerate(rows):
        w = 1.0 if weights is None else weights[i]
        hh.append(
            {
                "record_id": f"H{i}",
                "household_serial": f"S{i}",
                "weight": w,
                "gender": gender,
                "hh_size": size,
            }
        )
        persons.append({"record_id": f"P{i}", "household_serial": f"S{i}"})
    schema = {
        "gender": {"type": "categorical", "categories": ["m", "f"]},
        "hh_size": {"type": "ordinal", "edges": [1, 3, 5], "categories": ["1-2", "3-4"]},
    }
    return make_micro(hh, persons, schema)


class TestSeedFromMicrodata:
    def test_four_households_one_cell(self):
        # four records with identical characteristics put mass 4 in one cell
        micro = micro_with([("m", 3)] * 4)
        table = seed_from_microdata(micro, ["gender", "hh_size"], [GENDER, SIZE])
        assert table.cells[0, 1] == 4.0
        assert table.n == 4.0
        assert table.cells.sum() == table.cells[0, 1]

    def test_weights_add(self):
        micro = micro_with([("f", 1), ("f", 1)], weights=[2.0, 3.0])
        table = seed_from_microdata(micro, ["gender", "hh_size"], [GENDER, SIZE])
        assert table.cells[1, 0] == 5.0

    def test_empty_microdata_rejected(self):
        micro = micro_with([("m", 1)])
        micro.households = micro.households.iloc[:0]
        with pytest.raises(ValueError):
            seed_from_microdata(micro, ["gender"], [GENDER])

    def test_unbinnable_value_names_record(self):
        micro = micro_with([("m", 9)])
        with pytest.raises(ValueError, match="H0"):
            seed_from_microdata(micro, ["gender", "hh_size"], [GENDER, SIZE])

    def test_total_equals_weight_sum(self):
        rng = np.random.default_rng(3)
        weights = rng.uniform(0.5, 4.0, size=10).tolist()
        rows = [("m" if rng.random() < 0.5 else "f", int(rng.integers(1, 5))) for _ in range(10)]
        micro = micro_with(rows, weights)
        table = seed_from_microdata(micro, ["gender", "hh_size"], [GENDER, SIZE])
        assert table.n == pytest.approx(sum(weights))


class TestMarginalOf:
    def table(self):
        return ContingencyTable(
            variables=("a", "b"),
            categories=(("a1", "a2"), ("b1", "b2")),
            cells=np.array([[1.0, 2.0], [3.0, 4.0]]),
        )

    def test_row_marginal(self):
        assert marginal_of(self.table(), 0).tolist() == [3.0, 7.0]

    def test_column_marginal(self):
        assert marginal_of(self.table(), 1).tolist() == [4.0, 6.0]

    def test_one_dimensional_identity(self):
        t = ContingencyTable(("a",), (("x", "y"),), np.array([2.0, 5.0]))
        assert marginal_of(t, 0).tolist() == [2.0, 5.0]

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            marginal_of(self.table(), 2)

    def test_conservation(self):
        rng = np.random.default_rng(8)
        cells = rng.uniform(0, 3, size=(3, 4, 2))
        t = ContingencyTable(
            ("a", "b", "c"),
            (("1", "2", "3"), ("1", "2", "3", "4"), ("1", "2")),
            cells,
        )
        for j in range(3):
            assert marginal_of(t, j).sum() == pytest.approx(t.n)


class TestFillZeroCells:
    def test_zeros_replaced(self):
        t = ContingencyTable(("a",), (("x", "y"),), np.array([0.0, 2.0]))
        out = fill_zero_cells(t, 0.01)
        assert out.cells.tolist() == [0.01, 2.0]

    def test_structural_zeros_kept(self):
        t = ContingencyTable(("a",), (("x", "y"),), np.array([0.0, 2.0]))
        out = fill_zero_cells(t, 0.01, structural=np.array([True, False]))
        assert out.cells.tolist() == [0.0, 2.0]

    def test_original_untouched(self):
        t = ContingencyTable(("a",), (("x", "y"),), np.array([0.0, 2.0]))
        fill_zero_cells(t, 0.01)
        assert t.cells.tolist() == [0.0, 2.0]


class TestDump:
    def test_debug_dump(self, tmp_path):
        t = ContingencyTable(
            ("a", "b"),
            (("a1", "a2"), ("b1", "b2")),
            np.array([[1.0, 2.0], [3.0, 4.0]]),
        )
        path = tmp_path / "table.csv"
        dump_table(t, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "a,b,value"
        assert lines[1] == "a1,b1,1.0"
        assert len(lines) == 5
