import numpy as np
import pytest
from scipy import stats

from dropsense.brownian import (KineticsError, KineticsParams, displacement_histogram, displacements, fit_diffusion,
                                fluorescence_trace, net_displacements, simulate, TrajectoryEnsemble)


def test_zero_diffusion_is_stationary():
    ens = simulate(KineticsParams(diffusion_coeff=0.0, n_particles=20, duration=5.0))
    assert np.all(displacements(ens, 1.0) == 0.0)
    h = displacement_histogram(ens, 1.0, 10)
    assert h.counts[0] == h.counts.sum() and np.count_nonzero(h.counts) == 1


def test_positions_stay_in_disc_and_count_conserved():
    p = KineticsParams(diffusion_coeff=50.0, droplet_radius=5.0, n_particles=300, dt_step=0.05, duration=10.0)
    ens = simulate(p, seed=1)
    r = np.hypot(ens.positions[..., 0], ens.positions[..., 1])
    assert r.max() <= p.droplet_radius + 1e-12
    assert ens.positions.shape == (p.n_steps + 1, 300, 2)
    assert np.all(np.isfinite(ens.positions))


def test_deterministic():
    p = KineticsParams(n_particles=10, duration=2.0)
    assert np.array_equal(simulate(p, 4).positions, simulate(p, 4).positions)


def test_coarse_step_rejected():
    with pytest.raises(KineticsError, match="time step too coarse"):
        simulate(KineticsParams(diffusion_coeff=100.0, droplet_radius=1.0, dt_step=1.0))


def test_msd_recovers_4D():
    # large droplet so the wall is never felt for t <= 3 s
    p = KineticsParams(diffusion_coeff=1.0, droplet_radius=500.0, n_particles=10_000, dt_step=0.1, duration=3.0)
    assert fit_diffusion(simulate(p, seed=0), 3.0) == pytest.approx(1.0, rel=0.05)


def test_rayleigh_ks():
    D, lag = 1.0, 0.1
    p = KineticsParams(diffusion_coeff=D, droplet_radius=500.0, n_particles=5000, dt_step=lag, duration=2.0)
    d = displacements(simulate(p, seed=2), lag)
    assert d.size >= 10**5
    ks = stats.kstest(d, stats.rayleigh(scale=np.sqrt(2 * D * lag)).cdf).statistic
    assert ks < 0.02


def test_heavy_tail_kurtosis():
    base = dict(diffusion_coeff=1.0, droplet_radius=500.0, n_particles=2000, dt_step=0.1, duration=5.0)
    g = displacements(simulate(KineticsParams(**base), 0), 0.1)
    h = displacements(simulate(KineticsParams(**base, heavy_tail_alpha=1.5), 0), 0.1)
    assert stats.kurtosis(h) > stats.kurtosis(g)


def test_net_displacement_tail():
    p = KineticsParams(diffusion_coeff=4.0, droplet_radius=25.0, n_particles=200, dt_step=0.1, duration=30.0)
    d = net_displacements(simulate(p, 0))
    assert d.max() > 5.0


def test_trace_constant_for_stationary_particles():
    pos = np.zeros((50, 1, 2))
    tr = fluorescence_trace(TrajectoryEnsemble(pos, 0.1, 25.0), 10.0)
    np.testing.assert_allclose(tr.samples, 1.0, rtol=0, atol=1e-15)
    pos2 = np.zeros((50, 2, 2))
    pos2[:, 0] = (3.0, 4.0)
    pos2[:, 1] = (-3.0, -4.0)
    tr2 = fluorescence_trace(TrajectoryEnsemble(pos2, 0.1, 25.0), 10.0)
    assert np.ptp(tr2.samples) < 1e-15


def test_trace_mean_one_and_positive():
    ens = simulate(KineticsParams(n_particles=30, duration=10.0), 0)
    tr = fluorescence_trace(ens, 10.0, sample_rate=100.0)
    assert tr.samples.min() > 0
    assert tr.samples.mean() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fluorescence_trace(ens, 30.0)


def test_trace_fluctuation_shrinks_with_particle_number():
    rel = []
    for n in (100, 1000, 10_000):
        ens = simulate(KineticsParams(n_particles=n, duration=20.0, dt_step=0.1), 0)
        rel.append(fluorescence_trace(ens, 10.0).samples.std())
    assert rel[0] > rel[1] > rel[2]
    # roughly 1/sqrt(n) per decade
    assert rel[0] / rel[2] == pytest.approx(10.0, rel=0.5)


def test_csv_exports(tmp_path):
    ens = simulate(KineticsParams(n_particles=3, duration=1.0), 0)
    ens.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "particle_id,t,x_um,y_um" and len(lines) == 1 + 3 * (ens.positions.shape[0])
    displacement_histogram(ens, 0.1, 5).to_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().startswith("bin_lo_um,bin_hi_um,count")


def test_slow_diffusion_median_two_um_tail_beyond_five():
    # D picked so the Rayleigh median of 30 s net displacement is ~2 um
    D = 2.0**2 / (2 * np.log(2.0)) / (2 * 30.0)
    p = KineticsParams(diffusion_coeff=D, droplet_radius=50.0, n_particles=200, dt_step=0.1, duration=30.0)
    d = net_displacements(simulate(p, 0))
    assert np.median(d) == pytest.approx(2.0, rel=0.15)
    assert d.max() > 5.0
