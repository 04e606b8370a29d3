from __future__ import annotations

import numpy as np
import pytest
import torch

from scribble_bench.raster import RasterError, ScribbleMap
from scribble_bench.refine import (
    RefineConfig,
    dump_log,
    init_session,
    log_entry,
    parse_log,
    refine_step,
)
from scribble_bench.toynet import NetConfig, ToyNet

CFG = NetConfig(input_side=16, embed_dim=8, attn_heads=2, groupnorm_groups=2, seed=4)


def scribble_with(shape, pos=(), neg=()):
    s = ScribbleMap.empty(*shape)
    for x, y in pos:
        s.positive[y, x] = True
    for x, y in neg:
        s.negative[y, x] = True
    return s


@pytest.fixture(scope="module")
def net():
    return ToyNet(CFG)


@pytest.fixture()
def image():
    return np.random.default_rng(0).random((16, 16, 3))


class TestInitSession:
    def test_fresh_state(self, net, image):
        s0 = scribble_with((16, 16), pos=[(3, 3)])
        st = init_session(image, s0, net, RefineConfig(net=CFG))
        assert st.t == 0
        assert st.memory is None
        assert st.prev_mask is None
        assert st.s_acc == s0 and st.s_latest == s0

    def test_empty_initial_scribble_is_valid(self, net, image):
        st = init_session(image, ScribbleMap.empty(16, 16), net, RefineConfig(net=CFG))
        mask, st = refine_step(st, None, net, RefineConfig(net=CFG))
        assert mask.shape == (16, 16)

    def test_image_features_deterministic(self, net, image):
        cfg = RefineConfig(net=CFG)
        s0 = ScribbleMap.empty(16, 16)
        a = init_session(image, s0, net, cfg)
        b = init_session(image, s0, net, cfg)
        assert torch.equal(a.f_img, b.f_img)

    def test_scribble_shape_checked(self, net, image):
        with pytest.raises(RasterError):
            init_session(image, ScribbleMap.empty(8, 8), net, RefineConfig(net=CFG))


class TestRefineStep:
    def test_round0_rejects_correction(self, net, image):
        cfg = RefineConfig(net=CFG)
        st = init_session(image, ScribbleMap.empty(16, 16), net, cfg)
        with pytest.raises(RasterError):
            refine_step(st, ScribbleMap.empty(16, 16), net, cfg)

    def test_later_rounds_require_correction(self, net, image):
        cfg = RefineConfig(net=CFG)
        st = init_session(image, ScribbleMap.empty(16, 16), net, cfg)
        _, st = refine_step(st, None, net, cfg)
        with pytest.raises(RasterError):
            refine_step(st, None, net, cfg)

    def test_empty_correction_keeps_accumulator(self, net, image):
        cfg = RefineConfig(net=CFG)
        s0 = scribble_with((16, 16), pos=[(2, 2), (3, 2)])
        st = init_session(image, s0, net, cfg)
        _, st = refine_step(st, None, net, cfg)
        _, st = refine_step(st, ScribbleMap.empty(16, 16), net, cfg)
        assert st.s_acc == s0
        assert st.s_latest == ScribbleMap.empty(16, 16)
        assert st.t == 2

    def test_memory_bank_holds_single_entry(self, net, image):
        cfg = RefineConfig(net=CFG)
        st = init_session(image, ScribbleMap.empty(16, 16), net, cfg)
        memories = []
        _, st = refine_step(st, None, net, cfg)
        memories.append(st.memory)
        for _ in range(3):
            _, st = refine_step(st, ScribbleMap.empty(16, 16), net, cfg)
            memories.append(st.memory)
        assert all(isinstance(m, torch.Tensor) for m in memories)
        assert memories[-1].shape == (1, CFG.embed_dim, CFG.embed_side, CFG.embed_side)

    def test_correction_accumulates_with_latest_wins(self, net, image):
        cfg = RefineConfig(net=CFG)
        s0 = scribble_with((16, 16), pos=[(4, 4)])
        st = init_session(image, s0, net, cfg)
        _, st = refine_step(st, None, net, cfg)
        corr = scribble_with((16, 16), neg=[(4, 4), (9, 9)])
        _, st = refine_step(st, corr, net, cfg)
        assert not st.s_acc.positive[4, 4]  # latest correction flipped it
        assert st.s_acc.negative[4, 4] and st.s_acc.negative[9, 9]
        assert st.s_latest == corr

    def test_track2_sees_only_latest_correction(self, net, image, monkeypatch):
        """Different accumulated histories, same correction: the fusion
        module must receive the same latest-scribble embedding."""
        cfg = RefineConfig(net=CFG, use_sgf=True, use_memory=False)
        seen = []
        orig = net.sgf.forward

        def spy(feat, e_s, g_h):
            seen.append(e_s.clone())
            return orig(feat, e_s, g_h)

        monkeypatch.setattr(net.sgf, "forward", spy)
        corr = scribble_with((16, 16), pos=[(8, 8)])
        for s0 in (
            scribble_with((16, 16), pos=[(1, 1)]),
            scribble_with((16, 16), pos=[(2, 5), (3, 5)], neg=[(12, 1)]),
        ):
            st = init_session(image, s0, net, cfg)
            _, st = refine_step(st, None, net, cfg)
            refine_step(st, corr, net, cfg)
        # calls: round0(A), round1(A), round0(B), round1(B)
        assert torch.equal(seen[1], seen[3])
        assert not torch.equal(seen[0], seen[2])

    def test_baseline_config_ignores_memory_and_latest(self, net, image):
        cfg = RefineConfig(net=CFG, use_sgf=False, use_memory=False)
        s0 = scribble_with((16, 16), pos=[(5, 5)])
        st = init_session(image, s0, net, cfg)
        _, st1 = refine_step(st, None, net, cfg)
        # poison the memory slot: baseline must not look at it
        poisoned = st1.memory + 100.0
        a, _ = refine_step(st1, scribble_with((16, 16), pos=[(6, 6)]), net, cfg)
        st1.memory = poisoned
        b, _ = refine_step(st1, scribble_with((16, 16), pos=[(6, 6)]), net, cfg)
        assert np.array_equal(a, b)

    def test_session_replay_reproduces_masks(self, net, image):
        cfg = RefineConfig(net=CFG)
        s0 = scribble_with((16, 16), pos=[(3, 3), (4, 3)])
        corrections = [
            scribble_with((16, 16), neg=[(10, 10)]),
            scribble_with((16, 16), pos=[(5, 8)]),
            ScribbleMap.empty(16, 16),
        ]

        def run():
            st = init_session(image, s0, net, cfg)
            masks = []
            m, st = refine_step(st, None, net, cfg)
            masks.append(m)
            for c in corrections:
                m, st = refine_step(st, c, net, cfg)
                masks.append(m)
            return masks

        for a, b in zip(run(), run()):
            assert np.array_equal(a, b)


class TestSessionLog:
    def test_roundtrip(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 1] = True
        corr = ScribbleMap.empty(4, 4)
        entries = [
            log_entry(0, None, mask, iou=0.5, dice=0.6667),
            log_entry(1, corr, mask),
        ]
        back = parse_log(dump_log(entries))
        assert back[0]["round"] == 0
        assert back[0]["correction"] is None
        assert back[0]["iou"] == 0.5
        assert "iou" not in back[1]
        assert back[1]["correction"]["w"] == 4

    def test_rejects_non_list(self):
        with pytest.raises(ValueError):
            parse_log("{}")
