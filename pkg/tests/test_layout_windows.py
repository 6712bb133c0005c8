import numpy as np
import pytest

from hint.data.motion import (
    INTERHUMAN_STYLE,
    INTERX_STYLE,
    ChannelSlice,
    FeatureLayout,
    MotionSequence,
    make_layout,
)
from hint.data.normalize import Normalizer
from hint.data.windows import extract_windows, foot_contacts, pad_history
from hint.errors import ConfigError, DataError


class TestLayout:
    def test_dims(self):
        assert make_layout(INTERHUMAN_STYLE, 22).d == 262
        assert make_layout(INTERHUMAN_STYLE, 8).d == 94
        assert make_layout(INTERX_STYLE, 55).d == 336
        assert make_layout(INTERX_STYLE, 8).d == 54

    def test_slices_tile_the_frame(self):
        for kind, nj in ((INTERHUMAN_STYLE, 8), (INTERHUMAN_STYLE, 22), (INTERX_STYLE, 55)):
            layout = make_layout(kind, nj)
            end = 0
            for s in layout.slices:
                assert s.offset == end
                end += s.width
            assert end == layout.d

    def test_gap_rejected(self):
        with pytest.raises(ConfigError):
            FeatureLayout(
                kind="x",
                joint_count=2,
                slices=(
                    ChannelSlice("a", "position", 0, 6),
                    ChannelSlice("b", "velocity", 7, 6),
                ),
            )

    def test_unknown_role_rejected(self):
        with pytest.raises(ConfigError):
            FeatureLayout(
                kind="x", joint_count=2, slices=(ChannelSlice("a", "quaternion", 0, 8),)
            )

    def test_unknown_kind_and_tiny_skeleton(self):
        with pytest.raises(ConfigError):
            make_layout("other", 8)
        with pytest.raises(ConfigError):
            make_layout(INTERHUMAN_STYLE, 1)

    def test_positions_view(self, layout8):
        frames = np.arange(2 * layout8.d, dtype=np.float64).reshape(2, layout8.d)
        pos = layout8.positions(frames)
        assert pos.shape == (2, 8, 3)
        assert np.array_equal(pos[0, 0], frames[0, :3])
        assert np.array_equal(layout8.root_position(frames[1]), frames[1, :3])

    def test_interx_root_position(self):
        layout = make_layout(INTERX_STYLE, 8)
        frames = np.arange(layout.d, dtype=np.float64)
        assert np.array_equal(layout.root_position(frames), frames[48:51])

    def test_round_trip_dict(self, layout8):
        again = FeatureLayout.from_dict(layout8.to_dict())
        assert again == layout8

    def test_contact_joints_8(self, layout8):
        assert layout8.contact_joints == (3, 3, 4, 4)
        assert make_layout(INTERHUMAN_STYLE, 22).contact_joints == (7, 10, 8, 11)

    def test_sequence_validation(self, layout8):
        with pytest.raises(DataError):
            MotionSequence(np.zeros((3, layout8.d + 1)), layout8)
        with pytest.raises(DataError):
            MotionSequence(np.zeros((0, layout8.d)), layout8)
        seq = MotionSequence(np.zeros((3, layout8.d)), layout8)
        seq.validate()
        bad = np.zeros((3, layout8.d))
        bad[1, -2] = 0.5  # non-binary contact
        with pytest.raises(DataError):
            MotionSequence(bad, layout8).validate()
        bad2 = np.zeros((3, layout8.d))
        bad2[0, 0] = np.inf
        with pytest.raises(DataError):
            MotionSequence(bad2, layout8).validate()


class TestWindows:
    def _seq(self, layout, t):
        frames = np.zeros((t, layout.d))
        frames[:, 0] = np.arange(t)  # root x marks the frame index
        return MotionSequence(frames, layout)

    def test_count_arithmetic(self, layout8):
        assert len(extract_windows(self._seq(layout8, 20), 4, 16)) == 1
        assert len(extract_windows(self._seq(layout8, 35), 4, 16)) == 1
        assert len(extract_windows(self._seq(layout8, 36), 4, 16)) == 2
        assert len(extract_windows(self._seq(layout8, 36), 4, 16, stride=8)) == 3
        assert len(extract_windows(self._seq(layout8, 21), 4, 16, stride=1)) == 2

    def test_windows_are_views(self, layout8):
        seq = self._seq(layout8, 36)
        ws = extract_windows(seq, 4, 16)
        assert ws[0].history.base is seq.frames
        assert np.array_equal(ws[0].history[:, 0], np.arange(4))
        assert np.array_equal(ws[0].future[:, 0], np.arange(4, 20))
        assert np.array_equal(ws[1].history[:, 0], np.arange(16, 20))
        assert np.array_equal(ws[1].future[:, 0], np.arange(20, 36))

    def test_short_sequence_pads_with_first_frame(self, layout8):
        seq = self._seq(layout8, 12)
        (w,) = extract_windows(seq, 4, 16)
        padded = w.total_frames
        assert padded == 20
        # 8 pad rows precede the original 12: history all pad, future starts
        # with 4 pads + original frame 0, then frames 1..11
        assert np.array_equal(w.history[:, 0], np.zeros(4))
        assert np.array_equal(w.future[:, 0], np.concatenate([np.zeros(5), np.arange(1, 12)]))

    def test_pad_disabled_raises(self, layout8):
        with pytest.raises(DataError):
            extract_windows(self._seq(layout8, 12), 4, 16, pad=False)

    def test_bad_params(self, layout8):
        with pytest.raises(ConfigError):
            extract_windows(self._seq(layout8, 30), 0, 16)
        with pytest.raises(ConfigError):
            extract_windows(self._seq(layout8, 30), 4, 16, stride=0)

    def test_text_span_selection_last_wins(self, layout8):
        seq = self._seq(layout8, 36)
        texts = [(0, 36, "base"), (0, 21, "override")]
        ws = extract_windows(seq, 4, 16, texts=texts)
        # first future frames: window 0 -> 4, window 1 -> 20; both inside both
        # spans, the later span in the list wins
        assert ws[0].text == "override"
        assert ws[1].text == "override"
        ws2 = extract_windows(seq, 4, 16, texts=[(0, 36, "base"), (0, 20, "early")])
        assert ws2[0].text == "early"
        assert ws2[1].text == "base"

    def test_text_span_uses_padded_indexing(self, layout8):
        seq = self._seq(layout8, 12)  # padded by 8 to 20 frames
        ws = extract_windows(seq, 4, 16, texts=[(0, 5, "head"), (5, 20, "tail")])
        assert ws[0].text == "head"  # first future frame is padded index 4

    def test_pad_history(self, layout8):
        frames = np.arange(6).reshape(2, 3).astype(float)
        out = pad_history(frames, 5)
        assert out.shape == (5, 3)
        assert np.array_equal(out[:4, 0], np.array([0.0, 0.0, 0.0, 0.0]))
        assert np.array_equal(out[4], frames[1])
        assert pad_history(frames, 2) is frames


class TestFootContacts:
    def test_threshold_rule(self):
        t = 6
        pos = np.zeros((t, 5, 3))
        pos[:, 1, 0] = np.arange(t) * 0.04  # under threshold
        pos[:, 2, 0] = np.arange(t) * 0.06  # over threshold
        labels = foot_contacts(pos, [1, 1, 2, 2], speed_threshold=0.05)
        assert labels.shape == (t, 4)
        assert np.all(labels[:, :2] == 1.0)
        assert np.all(labels[:, 2:] == 0.0)

    def test_frame_zero_copies_frame_one(self):
        pos = np.zeros((3, 4, 3))
        pos[1, 0, 0] = 1.0  # fast between frames 0->1, static 1->2
        labels = foot_contacts(pos, [0, 0, 1, 1])
        assert labels[0, 0] == labels[1, 0] == 0.0
        assert labels[2, 0] == 0.0  # moved back

    def test_exact_threshold_is_not_contact(self):
        pos = np.zeros((2, 4, 3))
        pos[1, 0, 0] = 0.05
        labels = foot_contacts(pos, [0, 0, 1, 1], speed_threshold=0.05)
        assert labels[1, 0] == 0.0

    def test_single_frame_defaults_to_contact(self):
        assert np.all(foot_contacts(np.zeros((1, 4, 3)), [0, 1, 2, 3]) == 1.0)

    def test_errors(self):
        with pytest.raises(DataError):
            foot_contacts(np.zeros((3, 4)), [0, 0, 1, 1])
        with pytest.raises(ConfigError):
            foot_contacts(np.zeros((3, 4, 3)), [0, 1])
        with pytest.raises(ConfigError):
            foot_contacts(np.zeros((3, 4, 3)), [0, 0, 1, 9])


class TestNormalizer:
    def test_round_trip_and_floor(self):
        rng = np.random.default_rng(0)
        frames = rng.normal(size=(100, 7)) * np.array([5, 1, 0.1, 1e-9, 2, 3, 4])
        norm = Normalizer.fit(frames)
        assert np.all(norm.std >= 1e-6)
        z = norm.apply(frames)
        assert np.max(np.abs(norm.invert(z) - frames)) < 1e-9
        live = np.abs(frames.std(axis=0)) > 1e-6
        assert np.allclose(z[:, live].mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(z[:, live].std(axis=0), 1.0, atol=1e-6)

    def test_constant_channel_survives(self):
        frames = np.ones((10, 3))
        norm = Normalizer.fit(frames)
        z = norm.apply(frames)
        assert np.allclose(z, 0.0)
        assert np.allclose(norm.invert(z), 1.0)

    def test_dict_round_trip(self):
        norm = Normalizer.fit(np.random.default_rng(1).normal(size=(20, 4)))
        again = Normalizer.from_dict(norm.to_dict())
        assert np.array_equal(norm.mean, again.mean)
        assert np.array_equal(norm.std, again.std)
