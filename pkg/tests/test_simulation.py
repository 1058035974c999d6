"""Random substreams, Monte Carlo risk tables and the dominance scan."""

import math

import numpy as np
import pytest
from scipy import stats

from expo_entropy.errors import ContractError, DomainError, SimulationError
from expo_entropy.losses import linex_loss, squared_error_loss
from expo_entropy.numerics import trigamma
from expo_entropy.sampling import SchemeConfig
from expo_entropy.simulation import (
    SimulationPlan,
    dominance_scan,
    estimate_risk,
    pri_table,
    resolve_workers,
    scan_table,
)
from expo_entropy.streams import replication_exponentials, replication_uniforms, stream_key

GRID = [(0.1, 0.1), (0.5, 0.1), (0.8, 0.2)]


def worse_than_mrie(x, s, ctx):
    return np.log(s) + ctx.constants.q0 + 1.0


def broken(x, s, ctx):
    out = np.log(s) + ctx.constants.q0
    out[::7] = np.nan
    return out


def _plan(**kw):
    base = dict(
        scheme=SchemeConfig("iid", 2, 4),
        theta_grid=GRID,
        loss=squared_error_loss(),
        replications=4000,
        master_seed=3,
        chunk_size=1000,
    )
    base.update(kw)
    return SimulationPlan(**base)


class TestStreams:
    def test_chunking_invariant(self):
        key = stream_key(5, 2)
        whole = replication_uniforms(key, 0, 100, 7)
        parts = np.vstack([replication_uniforms(key, a, 25, 7) for a in (0, 25, 50, 75)])
        np.testing.assert_array_equal(whole, parts)

    def test_streams_differ(self):
        a = replication_uniforms(stream_key(5, 0), 0, 10, 4)
        b = replication_uniforms(stream_key(5, 1), 0, 10, 4)
        c = replication_uniforms(stream_key(6, 0), 0, 10, 4)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)

    def test_uniform_and_exponential_laws(self):
        key = stream_key(1, 0)
        u = replication_uniforms(key, 0, 50_000, 3)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert stats.kstest(u.ravel(), "uniform").pvalue > 1e-3
        e = replication_exponentials(key, 0, 50_000, 3)
        assert stats.kstest(e.ravel(), "expon").pvalue > 1e-3


class TestPlan:
    def test_requires_mrie(self):
        with pytest.raises(ContractError):
            _plan(estimators=("stein",))

    def test_bad_grid(self):
        with pytest.raises(DomainError):
            _plan(theta_grid=[(0.1, 0.2, 0.3)])

    def test_unknown_estimator(self):
        with pytest.raises(DomainError):
            _plan(estimators=("mrie", "lasso"))

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv("EXPO_ENTROPY_WORKERS", "3")
        assert resolve_workers() == 3
        assert resolve_workers(0) == 1


class TestRiskTable:
    def test_mrie_risk_exact(self):
        plan = _plan(replications=20_000, estimators=("mrie",))
        row = pri_table(plan, workers=1).rows[0]
        assert abs(row.risk - trigamma(6)) < 3 * row.std_err

    def test_pri_recomputed_from_risks(self):
        table = pri_table(_plan(), workers=1)
        for row in table.rows:
            r0 = table.baseline(row.theta).risk
            assert row.pri == (r0 - row.risk) / r0 * 100.0
        assert all(table.baseline(t).pri == 0.0 for t in GRID)

    def test_worker_and_chunk_invariance(self):
        one = pri_table(_plan(), workers=1)
        many = pri_table(_plan(), workers=3)
        rechunked = pri_table(_plan(chunk_size=700), workers=2)
        for a, b, c in zip(one.rows, many.rows, rechunked.rows):
            assert a.risk == b.risk == c.risk and a.std_err == b.std_err == c.std_err

    def test_common_random_numbers(self):
        table = pri_table(_plan(), workers=1)
        risks = [table.baseline(t).risk for t in GRID]
        # MRIE ignores theta, so CRN equalises its risk up to rounding of the shifted data
        np.testing.assert_allclose(risks, risks[0], rtol=1e-12)
        indep = pri_table(_plan(common_random_numbers=False), workers=1)
        assert len({indep.baseline(t).risk for t in GRID}) == len(GRID)

    def test_sigma_invariance(self):
        sigma = 3.0
        a = pri_table(_plan(replications=20_000), workers=1)
        b = pri_table(_plan(replications=20_000, sigma=sigma, theta_grid=[tuple(sigma * v for v in t) for t in GRID]), workers=1)
        for ra, rb in zip(a.rows, b.rows):
            assert abs(ra.risk - rb.risk) <= 2 * math.hypot(ra.std_err, rb.std_err) + 1e-12

    def test_single_replication(self):
        table = pri_table(_plan(replications=1), workers=1)
        assert all(math.isnan(r.std_err) for r in table.rows)
        assert all(math.isfinite(r.pri) for r in table.rows)

    def test_estimate_risk_matches_table(self):
        plan = _plan()
        table = pri_table(plan, workers=1)
        risk, se = estimate_risk(plan, GRID[1], "stein", workers=1)
        assert risk == table.cell(GRID[1], "stein").risk
        with pytest.raises(ContractError):
            estimate_risk(plan, (9.0, 9.0), "stein")

    def test_failed_replication_aborts(self):
        with pytest.raises(SimulationError):
            pri_table(_plan(estimators=("mrie", broken)), workers=1)


class TestDominance:
    @pytest.mark.parametrize("loss", [squared_error_loss(), linex_loss(1.0)], ids=["sq", "linex"])
    def test_iid_grid_clean(self, loss):
        assert dominance_scan(_plan(loss=loss, replications=20_000), workers=1).passed

    def test_adversarial_estimator_flagged(self):
        report = dominance_scan(_plan(estimators=("mrie", worse_than_mrie)), workers=1)
        assert len(report.flags) == len(GRID) == report.checked

    def test_scan_uses_combined_error(self):
        table = pri_table(_plan(), workers=1)
        assert scan_table(table, margin=1e9).passed


class TestSchemeEquivalence:
    def test_record_matches_iid_at_scaled_location(self):
        # (X, S) depends on theta only through c * theta, with c = n (iid) or 1 (record)
        n = 4
        rec = pri_table(_plan(scheme=SchemeConfig("record", 2, n), replications=40_000, master_seed=1), workers=1)
        iid = pri_table(
            _plan(theta_grid=[tuple(v / n for v in t) for t in GRID], replications=40_000, master_seed=2), workers=1
        )
        for a, b in zip(rec.rows, iid.rows):
            assert abs(a.risk - b.risk) <= 3 * math.hypot(a.std_err, b.std_err)
