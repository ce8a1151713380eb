"""The fused numba sweep must agree with the per-operation numpy path."""

import numpy as np
import pytest

from fabmix._fast import HAVE_NUMBA
from fabmix.fic import FabConfig
from fabmix.incremental import fit_incremental_em, resolve_engine
from fabmix.model import default_init
from fabmix.online import fit_fab_online

from conftest import sample_from_model, table1_style_model

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


class TestResolveEngine:
    def test_unknown_engine_rejected(self):
        with pytest.raises(ValueError):
            resolve_engine("fortran", "exact_stats")

    def test_numba_requires_exact_stats(self):
        if not HAVE_NUMBA:
            pytest.skip("numba not installed")
        with pytest.raises(ValueError):
            resolve_engine("numba", "paper_faithful")

    def test_auto_falls_back_for_paper_mode(self):
        assert resolve_engine("auto", "paper_faithful") is False


@needs_numba
class TestEngineAgreement:
    def test_incremental_em_trajectories_agree(self, gmm4_2d):
        data, _ = sample_from_model(gmm4_2d, 250, seed=3)
        init = default_init(data, 4, seed=3)
        m_np, t_np = fit_incremental_em(data, init, tol=0.0, max_sweeps=6, order_seed=3, engine="numpy")
        m_nb, t_nb = fit_incremental_em(data, init, tol=0.0, max_sweeps=6, order_seed=3, engine="numba")
        assert len(t_np) == len(t_nb)
        for a, b in zip(t_np.logliks, t_nb.logliks):
            assert a == pytest.approx(b, abs=1e-8)
        np.testing.assert_allclose(m_nb.weights, m_np.weights, atol=1e-10)
        np.testing.assert_allclose(m_nb.means, m_np.means, atol=1e-9)
        np.testing.assert_allclose(m_nb.covariances, m_np.covariances, atol=1e-9)

    def test_online_fab_trajectories_agree(self):
        truth = table1_style_model(dim=2, seed=88)
        data, _ = sample_from_model(truth, 300, seed=4)
        init = default_init(data, 5, seed=4)
        cfg = FabConfig.for_dim(2, tol=0.0, max_iters=6)
        m_np, t_np = fit_fab_online(data, init, cfg, order_seed=4, engine="numpy")
        m_nb, t_nb = fit_fab_online(data, init, cfg, order_seed=4, engine="numba")
        assert len(t_np) == len(t_nb)
        for a, b in zip(t_np.fics, t_nb.fics):
            assert a == pytest.approx(b, abs=1e-7)
        np.testing.assert_allclose(m_nb.means, m_np.means, atol=1e-9)

    def test_three_dimensional_data_agrees(self):
        truth = table1_style_model(dim=3, seed=91)
        data, _ = sample_from_model(truth, 200, seed=5)
        init = default_init(data, 3, seed=5)
        m_np, t_np = fit_incremental_em(data, init, tol=0.0, max_sweeps=4, order_seed=5, engine="numpy")
        m_nb, t_nb = fit_incremental_em(data, init, tol=0.0, max_sweeps=4, order_seed=5, engine="numba")
        for a, b in zip(t_np.logliks, t_nb.logliks):
            assert a == pytest.approx(b, abs=1e-8)
        np.testing.assert_allclose(m_nb.covariances, m_np.covariances, atol=1e-9)
