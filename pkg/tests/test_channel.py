import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relayfl.channel import (
    ChannelParams,
    compute_round_timings,
    draw_fading,
    link_gain,
    path_loss_db,
    relay_link_time,
)
from relayfl.errors import ConfigError, DomainError
from relayfl.rngtools import substream

from conftest import chain_positions, make_topology

# Independent high-precision evaluations (40-digit arithmetic), frozen.
PL_06_KM_DB = 119.758487014425
GAIN_1_KM = 1.548816618912481e-13
RELAY_TIME_TABLE1 = 4.983187394032659e-03


class TestPathLoss:
    def test_one_km(self):
        assert path_loss_db(1.0) == pytest.approx(128.1, abs=1e-12)

    def test_point_six_km(self):
        assert path_loss_db(0.6) == pytest.approx(PL_06_KM_DB, rel=1e-12)

    def test_one_decade_adds_slope(self):
        assert path_loss_db(10.0) == pytest.approx(165.7, abs=1e-12)

    def test_nonpositive_distance(self):
        with pytest.raises(DomainError):
            path_loss_db(0.0)
        with pytest.raises(DomainError):
            path_loss_db(-2.0)


class TestLinkGain:
    def test_deterministic_composition(self):
        params = ChannelParams()
        assert link_gain(1.0, params) == pytest.approx(GAIN_1_KM, rel=1e-12)

    def test_rayleigh_deterministic_under_seed(self):
        params = ChannelParams(fading="rayleigh")
        a = link_gain(0.5, params, substream(3, "g"))
        b = link_gain(0.5, params, substream(3, "g"))
        assert a == b

    def test_rayleigh_unit_mean(self):
        params = ChannelParams(fading="rayleigh")
        rng = substream(0, "mc")
        pl = 10.0 ** (-path_loss_db(1.0) / 10.0)
        draws = np.array([link_gain(1.0, params, rng) for _ in range(100_000)]) / pl
        assert 0.98 <= draws.mean() <= 1.02

    def test_rayleigh_requires_rng(self):
        with pytest.raises(DomainError):
            link_gain(1.0, ChannelParams(fading="rayleigh"), None)


class TestRelayLinkTime:
    def test_zero_payload(self):
        params = ChannelParams(model_size_bits=0)
        assert relay_link_time(1e-12, params) == 0.0

    def test_table_defaults_frozen_value(self):
        params = ChannelParams()  # M = 21840*32, B = 50 MHz, P = 5, p = 1, N0 = -174
        delta = link_gain(0.6, params)
        assert relay_link_time(delta, params) == pytest.approx(RELAY_TIME_TABLE1, rel=1e-9)

    def test_linear_in_payload(self):
        p1 = ChannelParams(model_size_bits=1e6)
        p2 = ChannelParams(model_size_bits=2e6)
        g = 1e-12
        assert relay_link_time(g, p2) == pytest.approx(2.0 * relay_link_time(g, p1), rel=1e-12)

    def test_nonpositive_gain(self):
        with pytest.raises(DomainError):
            relay_link_time(0.0, ChannelParams())

    @settings(max_examples=50, deadline=None)
    @given(
        g=st.floats(min_value=1e-14, max_value=1e-9),
        factor=st.floats(min_value=1.001, max_value=100.0),
    )
    def test_strictly_decreasing_in_gain(self, g, factor):
        params = ChannelParams()
        assert relay_link_time(g * factor, params) < relay_link_time(g, params)


class TestParams:
    def test_noise_converted_once(self):
        params = ChannelParams(noise_psd_dbm_hz=-174.0)
        assert params.noise_psd_w_hz == pytest.approx(10.0 ** (-20.4), rel=1e-12)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            ChannelParams(bandwidth_hz=0.0)
        with pytest.raises(ConfigError):
            ChannelParams(fading="nakagami")


def center_client_topology():
    # one client at each center (offset by 1 mm: placement allows exact center
    # too, the channel clamps range), lens clients for validity
    pts = [[0.0, 0.0], [600.0, 0.0], [300.0, 0.0]]
    return make_topology(2, pts, volumes=[100, 100, 100], epoch_times=[0.1, 0.1, 0.1])


class TestRoundTimings:
    def test_compute_dominates_for_center_client(self):
        topo = make_topology(1, [[0.0, 0.0]], epoch_times=[0.1])
        params = ChannelParams()
        t = compute_round_timings(topo, params, epochs=5)
        # five epochs at 0.1 s plus a sub-millisecond upload
        assert t.t_comp[0] == pytest.approx(0.5, abs=5e-3)

    def test_reflection_symmetry(self):
        # two cells, clients mirrored around the lens center
        pts = [[100.0, 50.0], [500.0, 50.0], [300.0, 0.0]]
        topo = make_topology(2, pts, epoch_times=[0.12, 0.12, 0.1])
        params = ChannelParams()
        t = compute_round_timings(topo, params, epochs=5)
        assert t.t_cast[0] == pytest.approx(t.t_cast[1], rel=1e-12)
        assert t.t_comp[0] == pytest.approx(t.t_comp[1], rel=1e-12)
        assert t.t_com_right[0] == pytest.approx(t.t_com_left[0], rel=1e-12)

    def test_uniform_split_upload_rate(self):
        # identical clients stacked at one point: upload time matches the
        # closed-form uniform-split rate
        n = 4
        pts = [[50.0, 0.0]] * n
        topo = make_topology(1, pts, epoch_times=[0.0] * n)
        params = ChannelParams()
        t = compute_round_timings(topo, params, epochs=1)
        d_km = 0.05
        gain = 10.0 ** (-path_loss_db(d_km) / 10.0)
        b, n0 = params.bandwidth_hz, params.noise_psd_w_hz
        snr = gain * params.client_power_w * 2 * n / (b * n0)
        expected = params.model_size_bits * 2 * n / (b * np.log2(1.0 + snr))
        assert t.t_comp[0] == pytest.approx(expected, rel=1e-9)

    def test_comp_nondecreasing_in_epochs(self):
        topo = make_topology(3, chain_positions(3))
        params = ChannelParams()
        t1 = compute_round_timings(topo, params, epochs=1)
        t5 = compute_round_timings(topo, params, epochs=5)
        assert np.all(t5.t_comp >= t1.t_comp)

    def test_relabeling_invariance(self):
        pts = chain_positions(2)
        topo_a = make_topology(2, pts)
        perm = list(reversed(range(len(pts))))
        topo_b = make_topology(2, pts[perm])
        params = ChannelParams()
        ta = compute_round_timings(topo_a, params, epochs=3)
        tb = compute_round_timings(topo_b, params, epochs=3)
        assert np.allclose(ta.t_cast, tb.t_cast)
        assert np.allclose(ta.t_comp, tb.t_comp)
        assert np.allclose(ta.t_com_right, tb.t_com_right)

    def test_t_max_is_worst_one_hop_round(self):
        topo = make_topology(3, chain_positions(3), epoch_times=[0.1] * 11)
        params = ChannelParams()
        t = compute_round_timings(topo, params, epochs=2)
        expected = 0.0
        for l in range(3):
            out = []
            if l < 2:
                out.append(t.t_com_right[l])
            if l > 0:
                out.append(t.t_com_left[l - 1])
            expected = max(expected, t.t_cast[l] + t.t_comp[l] + max(out))
        assert t.t_max == pytest.approx(expected, rel=1e-12)

    def test_all_timings_finite_nonnegative(self):
        topo = make_topology(5, chain_positions(5))
        params = ChannelParams(fading="rayleigh")
        t = compute_round_timings(topo, params, epochs=5, rng=substream(2, "c"))
        for arr in (t.t_cast, t.t_comp, t.t_com_right, t.t_com_left):
            assert np.all(np.isfinite(arr)) and np.all(arr >= 0)

    def test_fading_draw_counts_scheme_independent(self):
        topo = make_topology(3, chain_positions(3))
        params = ChannelParams(fading="rayleigh")
        h1 = draw_fading(topo, params, substream(5, "channel", 0))
        h2 = draw_fading(topo, params, substream(5, "channel", 0))
        for a, b in zip(h1, h2):
            assert np.array_equal(a, b)
