import numpy as np
import pytest

from conftest import make_micro
from popforge.ingest import MarginalTable, MicrodataRecord, VariableBinning
from popforge.ipf import (
    BeckmanParams,
    IpfConfig,
    ipf_fit,
    ipf_sample_region,
    beckman_distance,
)
from popforge.tables import ContingencyTable, fill_zero_cells, seed_from_microdata


def table_2x2(cells):
    return ContingencyTable(
        variables=("row", "col"),
        categories=(("r1", "r2"), ("c1", "c2")),
        cells=np.asarray(cells, dtype=float),
    )


def targets_2x2(rows, cols):
    return [
        MarginalTable("R", "row", ("r1", "r2"), tuple(rows)),
        MarginalTable("R", "col", ("c1", "c2"), tuple(cols)),
    ]


def manual_raking_2x2(cells, rows, cols, sweeps=200):
    """Independent scalar implementation of alternating proportional scaling."""
    p = [[cells[0][0], cells[0][1]], [cells[1][0], cells[1][1]]]
    total = sum(sum(r) for r in p)
    p = [[v / total for v in r] for r in p]
    for _ in range(sweeps):
        for i in range(2):
            s = p[i][0] + p[i][1]
            for j in range(2):
                p[i][j] *= rows[i] / s
        for j in range(2):
            s = p[0][j] + p[1][j]
            for i in range(2):
                p[i][j] *= cols[j] / s
    return np.array(p)


class TestIpfFit:
    def test_fixed_point(self):
        seed = table_2x2([[0.25, 0.25], [0.25, 0.25]])
        res = ipf_fit(seed, targets_2x2((0.5, 0.5), (0.5, 0.5)))
        assert res.converged
        assert res.iterations == 1
        assert res.max_deviation == 0.0
        assert np.allclose(res.table.cells, 0.25)

    def test_matches_manual_raking_and_preserves_odds_ratio(self):
        seed_cells = [[0.1, 0.2], [0.3, 0.4]]
        rows, cols = (0.3, 0.7), (0.4, 0.6)
        res = ipf_fit(table_2x2(seed_cells), targets_2x2(rows, cols))
        expected = manual_raking_2x2(seed_cells, rows, cols)
        assert np.abs(res.table.cells - expected).max() < 1e-9
        p = res.table.cells
        assert p[0].sum() == pytest.approx(0.3, abs=1e-6)
        assert p[1].sum() == pytest.approx(0.7, abs=1e-6)
        assert p[:, 0].sum() == pytest.approx(0.4, abs=1e-6)
        assert p[:, 1].sum() == pytest.approx(0.6, abs=1e-6)
        odds = (p[0, 0] * p[1, 1]) / (p[0, 1] * p[1, 0])
        seed_odds = (0.1 * 0.4) / (0.2 * 0.3)
        assert odds == pytest.approx(seed_odds, abs=1e-6)

    def test_marginals_within_tolerance_after_convergence(self):
        rng = np.random.default_rng(20250810)
        for _ in range(10):
            dims = tuple(rng.integers(3, 7, size=4))
            seed = ContingencyTable(
                variables=("v1", "v2", "v3", "v4"),
                categories=tuple(tuple(map(str, range(d))) for d in dims),
                cells=rng.uniform(0.1, 1.0, size=dims),
            )
            other = rng.uniform(0.1, 1.0, size=dims)
            targets = []
            for j, var in enumerate(seed.variables):
                axes = tuple(a for a in range(4) if a != j)
                totals = other.sum(axis=axes)
                targets.append(
                    MarginalTable("R", var, seed.categories[j], tuple(totals))
                )
            res = ipf_fit(seed, targets, IpfConfig(tolerance=1e-6, max_iterations=100))
            assert res.converged
            q = [np.asarray(t.totals) / t.n for t in targets]
            for j in range(4):
                axes = tuple(a for a in range(4) if a != j)
                marg = res.table.cells.sum(axis=axes)
                assert np.abs(marg - q[j]).max() < 1e-6
            # deviation should not grow between sweeps on all-positive seeds
            assert res.monotonicity_violations == 0

    def test_mass_is_one_after_each_fit(self):
        seed = table_2x2([[0.5, 0.1], [0.1, 0.3]])
        res = ipf_fit(seed, targets_2x2((0.6, 0.4), (0.5, 0.5)))
        assert res.table.n == pytest.approx(1.0, abs=1e-12)

    def test_unconverged_flag(self):
        seed = table_2x2([[0.5, 0.001], [0.001, 0.5]])
        res = ipf_fit(
            seed,
            targets_2x2((0.9, 0.1), (0.1, 0.9)),
            IpfConfig(tolerance=1e-12, max_iterations=1),
        )
        assert not res.converged
        assert res.iterations == 1

    def test_structural_zero_with_positive_target(self):
        seed = table_2x2([[0.5, 0.0], [0.5, 0.0]])
        with pytest.raises(ValueError, match="structurally zero"):
            ipf_fit(seed, targets_2x2((0.5, 0.5), (0.6, 0.4)))

    def test_epsilon_fill_unblocks_fit(self):
        seed = fill_zero_cells(table_2x2([[0.5, 0.0], [0.5, 0.0]]), 0.01)
        res = ipf_fit(seed, targets_2x2((0.5, 0.5), (0.6, 0.4)))
        assert res.converged

    def test_nonconformable_targets(self):
        seed = table_2x2([[0.25, 0.25], [0.25, 0.25]])
        with pytest.raises(ValueError, match="targets do not match"):
            ipf_fit(seed, [MarginalTable("R", "row", ("r1", "r2"), (0.5, 0.5))])

    def test_inconsistent_totals_rejected(self):
        seed = table_2x2([[0.25, 0.25], [0.25, 0.25]])
        targets = [
            MarginalTable("R", "row", ("r1", "r2"), (50.0, 50.0)),
            MarginalTable("R", "col", ("c1", "c2"), (60.0, 50.0)),
        ]
        with pytest.raises(ValueError, match="disagree"):
            ipf_fit(seed, targets)


class TestBeckmanDistance:
    def record(self, **chars):
        return MicrodataRecord("H1", "S1", "household", chars, weight=2.0)

    def test_exact_match_returns_weight(self):
        rec = self.record(tenure="own", age=45.0)
        params = BeckmanParams(alpha=0.0, numeric_variables=frozenset({"age"}))
        d = beckman_distance(rec, {"tenure": "own", "age": 45.0}, params, {"age": 80.0})
        assert d == 2.0

    def test_categorical_mismatch_zeroes(self):
        rec = self.record(tenure="own")
        params = BeckmanParams(alpha=0.0)
        assert beckman_distance(rec, {"tenure": "rent"}, params, {}) == 0.0

    def test_ordinal_formula(self):
        # direct evaluation: 1 - |(30 - 40)/100|^1 = 0.9
        rec = MicrodataRecord("H1", "S1", "household", {"age": 30.0}, weight=1.0)
        params = BeckmanParams(alpha=0.0, numeric_variables=frozenset({"age"}))
        d = beckman_distance(rec, {"age": 40.0}, params, {"age": 100.0})
        assert d == pytest.approx(0.9, abs=1e-12)

    def test_far_ordinal_clamped_to_zero(self):
        rec = MicrodataRecord("H1", "S1", "household", {"age": 0.0}, weight=1.0)
        params = BeckmanParams(alpha=0.0, numeric_variables=frozenset({"age"}))
        d = beckman_distance(rec, {"age": 200.0}, params, {"age": 100.0})
        assert d == 0.0

    def test_alpha_softens_mismatch(self):
        rec = self.record(tenure="own")
        params = BeckmanParams(alpha=0.2)
        # mismatch: 1 - (1 - alpha) = alpha
        assert beckman_distance(rec, {"tenure": "rent"}, params, {}) == pytest.approx(0.4)
        # match: 1 - alpha
        assert beckman_distance(rec, {"tenure": "own"}, params, {}) == pytest.approx(1.6)

    def test_missing_variable(self):
        rec = self.record(tenure="own")
        with pytest.raises(KeyError):
            beckman_distance(rec, {"age": 30}, BeckmanParams(), {})


def sampler_fixture():
    schema = {
        "tenure": {"type": "categorical", "categories": ["own", "rent"]},
        "hh_size": {"type": "ordinal", "edges": [1, 3, 5], "categories": ["1-2", "3-4"]},
    }
    hh = []
    persons = []
    combos = [("own", 1), ("own", 3), ("rent", 2), ("rent", 4)]
    for i, (tenure, size) in enumerate(combos):
        hh.append(
            {
                "record_id": f"H{i}",
                "household_serial": f"S{i}",
                "tenure": tenure,
                "hh_size": size,
            }
        )
        persons.append({"record_id": f"P{i}", "household_serial": f"S{i}"})
    micro = make_micro(hh, persons, schema)
    binnings = [
        VariableBinning("tenure", "categorical", ("own", "rent")),
        VariableBinning("hh_size", "ordinal", ("1-2", "3-4"), (1, 3, 5)),
    ]
    return micro, binnings


class TestIpfSampleRegion:
    def converged_fit(self, micro, binnings, row_t, col_t):
        seed = fill_zero_cells(
            seed_from_microdata(micro, ["tenure", "hh_size"], binnings), 0.01
        )
        targets = [
            MarginalTable("R", "tenure", ("own", "rent"), row_t),
            MarginalTable("R", "hh_size", ("1-2", "3-4"), col_t),
        ]
        return ipf_fit(seed, targets)

    def test_single_household_single_cell(self):
        schema = {"tenure": {"type": "categorical", "categories": ["own"]}}
        micro = make_micro(
            [{"record_id": "H1", "household_serial": "S1", "tenure": "own"}],
            [{"record_id": "P1", "household_serial": "S1"}],
            schema,
        )
        table = ContingencyTable(
            variables=("tenure",),
            categories=(("own",),),
            cells=np.array([1.0]),
            binnings=(VariableBinning("tenure", "categorical", ("own",)),),
        )
        from popforge.ipf import IpfResult

        fit = IpfResult(table, 1, True, 0.0, [0.0])
        out = ipf_sample_region(
            fit, micro, 5, BeckmanParams(), np.random.default_rng(0)
        )
        assert out.tolist() == ["H1"] * 5

    def test_quotas_sum_exactly(self):
        micro, binnings = sampler_fixture()
        fit = self.converged_fit(micro, binnings, (0.5, 0.5), (0.5, 0.5))
        params = BeckmanParams(numeric_variables=frozenset({"hh_size"}))
        for n in (1, 3, 17, 100):
            out = ipf_sample_region(fit, micro, n, params, np.random.default_rng(5))
            assert len(out) == n

    def test_zero_alpha_selects_exact_categorical_matches(self):
        micro, binnings = sampler_fixture()
        fit = self.converged_fit(micro, binnings, (0.6, 0.4), (0.3, 0.7))
        params = BeckmanParams(alpha=0.0, numeric_variables=frozenset({"hh_size"}))
        rng = np.random.default_rng(6)
        out = ipf_sample_region(fit, micro, 400, params, rng)
        tenure_of = {"H0": "own", "H1": "own", "H2": "rent", "H3": "rent"}
        own = sum(1 for r in out if tenure_of[r] == "own")
        # own quota comes from the fitted tenure marginal (0.6)
        assert own == pytest.approx(0.6 * 400, abs=2)

    def test_unconverged_requires_flag(self):
        micro, binnings = sampler_fixture()
        # seed with interaction (odds ratio 4) cannot converge in one sweep
        seed = ContingencyTable(
            variables=("tenure", "hh_size"),
            categories=(("own", "rent"), ("1-2", "3-4")),
            cells=np.array([[2.0, 1.0], [1.0, 2.0]]),
            binnings=tuple(binnings),
        )
        targets = [
            MarginalTable("R", "tenure", ("own", "rent"), (0.9, 0.1)),
            MarginalTable("R", "hh_size", ("1-2", "3-4"), (0.1, 0.9)),
        ]
        fit = ipf_fit(seed, targets, IpfConfig(tolerance=1e-13, max_iterations=1))
        assert not fit.converged
        params = BeckmanParams(numeric_variables=frozenset({"hh_size"}))
        with pytest.raises(ValueError, match="converge"):
            ipf_sample_region(fit, micro, 10, params, np.random.default_rng(7))
        out = ipf_sample_region(
            fit, micro, 10, params, np.random.default_rng(7), allow_unconverged=True
        )
        assert len(out) == 10

    def test_deterministic(self):
        micro, binnings = sampler_fixture()
        fit = self.converged_fit(micro, binnings, (0.5, 0.5), (0.5, 0.5))
        params = BeckmanParams(numeric_variables=frozenset({"hh_size"}))
        a = ipf_sample_region(fit, micro, 50, params, np.random.default_rng(8))
        b = ipf_sample_region(fit, micro, 50, params, np.random.default_rng(8))
        assert (a == b).all()
