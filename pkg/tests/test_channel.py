import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wbansim.channel import (
    CcaResult,
    ChannelModel,
    ChannelParams,
    LinkClass,
    LinkErrorTable,
    LossReason,
    Radio,
    default_path_loss,
    link_class,
    path_loss_db,
    rx_power_dbm,
)
from wbansim.core import Frame, FrameKind, Placement, PlacementKind, TrafficClass

ORIGIN = Placement(PlacementKind.ON_BODY)


def on_body(x):
    return Placement(PlacementKind.ON_BODY, x, 0.0, 0.0)


def in_body(x, depth=0.05):
    return Placement(PlacementKind.IN_BODY, x, 0.0, 0.0, depth_m=depth)


def data_frame(src=1, dst=0, bits=800, seq=1):
    return Frame(FrameKind.DATA, src, dst, bits, TrafficClass.NORMAL_HIGH, 0, seq)


class TestPathLoss:
    def test_in_body_to_on_body_at_3m(self):
        # 60 + 45*log10(3) dB
        loss = path_loss_db(in_body(3.0), ORIGIN, default_path_loss())
        assert loss == pytest.approx(81.47, abs=0.005)

    def test_reference_distance_returns_reference_loss(self):
        loss = path_loss_db(on_body(1.0), ORIGIN, default_path_loss())
        assert loss == pytest.approx(40.0)

    def test_on_body_at_1_5m(self):
        loss = path_loss_db(on_body(1.5), ORIGIN, default_path_loss())
        assert loss == pytest.approx(43.52, abs=0.005)

    def test_sub_millimeter_clamped(self):
        near = path_loss_db(on_body(1e-9), ORIGIN, default_path_loss())
        at_clamp = path_loss_db(on_body(0.001), ORIGIN, default_path_loss())
        assert near == at_clamp

    def test_link_class_selection(self):
        assert link_class(ORIGIN, on_body(1)) is LinkClass.ON_BODY
        assert link_class(in_body(1), ORIGIN) is LinkClass.IN_TO_ON
        assert link_class(ORIGIN, in_body(1)) is LinkClass.IN_TO_ON
        assert link_class(in_body(1), in_body(2)) is LinkClass.IN_TO_IN

    @given(
        d1=st.floats(min_value=0.002, max_value=50.0),
        factor=st.floats(min_value=1.001, max_value=100.0),
    )
    def test_strictly_increasing_with_distance(self, d1, factor):
        params = default_path_loss()
        assert path_loss_db(on_body(d1 * factor), ORIGIN, params) > path_loss_db(
            on_body(d1), ORIGIN, params
        )


class TestRxPower:
    def test_in_body_source_at_3m(self):
        assert rx_power_dbm(-16.0, in_body(3.0), ORIGIN, default_path_loss()) == pytest.approx(
            -97.47, abs=0.005
        )

    def test_in_body_source_at_1_5m(self):
        assert rx_power_dbm(-16.0, in_body(1.5), ORIGIN, default_path_loss()) == pytest.approx(
            -83.92, abs=0.005
        )

    def test_reference_case(self):
        assert rx_power_dbm(0.0, on_body(1.0), ORIGIN, default_path_loss()) == pytest.approx(-40.0)


class TestCca:
    def make_channel_with_tx(self, src_placement, tx_power_dbm):
        ch = ChannelModel()
        frame = Frame(FrameKind.DATA, 1, 0, 800, TrafficClass.NORMAL_HIGH, 0, 1)
        ch.register_tx(frame, src_placement, 0, 1000, tx_power_dbm=tx_power_dbm)
        return ch

    def test_implant_invisible_at_3m_for_both_thresholds(self):
        ch = self.make_channel_with_tx(in_body(3.0), -16.0)
        listener = ORIGIN
        assert ch.cca_energy_detect(listener, -85.0, 500) is CcaResult.IDLE
        assert ch.cca_energy_detect(listener, -95.0, 500) is CcaResult.IDLE

    def test_implant_detected_at_1_5m(self):
        ch = self.make_channel_with_tx(in_body(1.5), -16.0)
        assert ch.cca_energy_detect(ORIGIN, -85.0, 500) is CcaResult.BUSY

    def test_idle_when_nothing_on_air(self):
        ch = ChannelModel()
        assert ch.cca_energy_detect(ORIGIN, -200.0, 0) is CcaResult.IDLE

    def test_powers_sum_in_linear_milliwatts(self):
        # two equal -90 dBm arrivals combine to ~-86.99 dBm, not -87 dB "sum"
        ch = ChannelModel()
        params = ch.params.path_loss
        # place two on-body sources so each arrives at -90 dBm: tx at -50 dBm, 1 m away
        for i, x in enumerate((1.0, -1.0)):
            ch.register_tx(data_frame(src=i + 1, seq=i + 1), on_body(x), 0, 1000,
                           tx_power_dbm=-50.0)
        total = ch.received_power_dbm(ORIGIN, 500)
        assert total == pytest.approx(-86.9897, abs=0.001)
        assert ch.cca_energy_detect(ORIGIN, -87.0, 500) is CcaResult.BUSY

    def test_lowering_threshold_never_flips_busy_to_idle(self):
        ch = self.make_channel_with_tx(on_body(1.0), 0.0)
        was_busy = ch.cca_energy_detect(ORIGIN, -85.0, 500) is CcaResult.BUSY
        assert was_busy
        for thr in (-90.0, -100.0, -120.0):
            assert ch.cca_energy_detect(ORIGIN, thr, 500) is CcaResult.BUSY

    def test_interval_boundaries_half_open(self):
        ch = self.make_channel_with_tx(on_body(1.0), 0.0)
        assert ch.cca_energy_detect(ORIGIN, -85.0, 0) is CcaResult.BUSY
        assert ch.cca_energy_detect(ORIGIN, -85.0, 1000) is CcaResult.IDLE


class TestDeliver:
    def test_lone_frame_ideal_link_delivered(self):
        ch = ChannelModel()
        tx = ch.register_tx(data_frame(), on_body(0.5), 0, 1000)
        assert ch.deliver(tx, ORIGIN, random.Random(1)) is None

    def test_symmetric_collision_loses_both(self):
        ch = ChannelModel()
        tx1 = ch.register_tx(data_frame(src=1, seq=1), on_body(0.5), 0, 1000)
        tx2 = ch.register_tx(data_frame(src=2, seq=2), on_body(-0.5), 0, 1000)
        rng = random.Random(1)
        assert ch.deliver(tx1, ORIGIN, rng) is LossReason.COLLISION
        assert ch.deliver(tx2, ORIGIN, rng) is LossReason.COLLISION

    def test_strong_frame_captures_over_weak_interferer(self):
        ch = ChannelModel()
        strong = ch.register_tx(data_frame(src=1, seq=1), on_body(0.5), 0, 1000)
        # interferer 15 dB below the frame of interest at the destination
        ch.register_tx(data_frame(src=2, seq=2), on_body(0.5), 0, 1000, tx_power_dbm=-15.0)
        rng = random.Random(1)
        assert ch.deliver(strong, ORIGIN, rng) is None

    def test_non_overlapping_transmissions_do_not_interfere(self):
        ch = ChannelModel()
        first = ch.register_tx(data_frame(src=1, seq=1), on_body(0.5), 0, 1000)
        second = ch.register_tx(data_frame(src=2, seq=2), on_body(0.5), 1000, 1000)
        assert first.interferers == []
        assert second.interferers == []

    def test_below_sensitivity_lost(self):
        ch = ChannelModel()
        tx = ch.register_tx(data_frame(), in_body(3.0), 0, 1000)  # -97.47 dBm < -95
        assert ch.deliver(tx, ORIGIN, random.Random(1)) is LossReason.BELOW_SENSITIVITY

    def test_collision_reported_before_sensitivity(self):
        ch = ChannelModel()
        weak = ch.register_tx(data_frame(src=1, seq=1), in_body(3.0), 0, 1000)
        ch.register_tx(data_frame(src=2, seq=2), on_body(0.5), 0, 1000)
        assert ch.deliver(weak, ORIGIN, random.Random(1)) is LossReason.COLLISION

    def test_link_error_rate_calibration(self):
        # ~84% success over 1e5 contention-free frames, within binomial noise
        table = LinkErrorTable({(1, 0): 0.84})
        ch = ChannelModel(link_errors=table)
        rng = random.Random(1234)
        n = 100_000
        delivered = 0
        for i in range(n):
            frame = data_frame(seq=i)
            tx = ch.register_tx(frame, on_body(0.5), i * 2000, 1000)
            if ch.deliver(tx, ORIGIN, rng) is None:
                delivered += 1
            ch.end_tx(tx)
        assert delivered / n == pytest.approx(0.84, abs=0.01)

    def test_deterministic_given_rng_state(self):
        table = LinkErrorTable({(1, 0): 0.5})
        outcomes = []
        for _ in range(2):
            ch = ChannelModel(link_errors=table)
            rng = random.Random(99)
            run = []
            for i in range(100):
                tx = ch.register_tx(data_frame(seq=i), on_body(0.5), i * 2000, 1000)
                run.append(ch.deliver(tx, ORIGIN, rng))
                ch.end_tx(tx)
            outcomes.append(run)
        assert outcomes[0] == outcomes[1]


class TestWakeupRadio:
    def test_wakeup_signal_must_use_wakeup_radio(self):
        ch = ChannelModel()
        sig = Frame(FrameKind.WAKEUP_SIGNAL, 1, 0, 8, None, 0, 1)
        with pytest.raises(ValueError):
            ch.register_tx(sig, ORIGIN, 0, 1000, radio=Radio.DATA)

    def test_ideal_by_default(self):
        ch = ChannelModel()
        sig = Frame(FrameKind.WAKEUP_SIGNAL, 1, 0, 8, None, 0, 1)
        tx = ch.register_tx(sig, in_body(3.0), 0, 1000, radio=Radio.WAKEUP)
        assert ch.deliver(tx, ORIGIN, random.Random(1)) is None

    def test_optional_loss_probability(self):
        params = ChannelParams(wakeup_loss_p=1.0)
        ch = ChannelModel(params)
        sig = Frame(FrameKind.WAKEUP_SIGNAL, 1, 0, 8, None, 0, 1)
        tx = ch.register_tx(sig, ORIGIN, 0, 1000, radio=Radio.WAKEUP)
        assert ch.deliver(tx, ORIGIN, random.Random(1)) is LossReason.RANDOM_ERROR

    def test_wakeup_and_data_radios_are_separate(self):
        ch = ChannelModel()
        sig = Frame(FrameKind.WAKEUP_SIGNAL, 1, 0, 8, None, 0, 1)
        ch.register_tx(sig, on_body(0.5), 0, 1000, radio=Radio.WAKEUP)
        assert ch.cca_energy_detect(ORIGIN, -120.0, 500) is CcaResult.IDLE
