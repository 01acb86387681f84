"""Coarse-to-fine blocks: composition oracles, receptive fields, fusion."""

import numpy as np
import pytest

from mrdiff import tensor as tz
from mrdiff.tensor import Tensor, ShapeError, grad_check
from mrdiff import blocks as B


def small_spec(channels=4, dilations=(2, 4, 8), groups=0):
    return B.BlockSpec(channels=channels, dilations=dilations, coarse_groups=groups)


class TestFineBranch:
    def test_footprint_is_exactly_3x3(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        masks = B.receptive_field_probe(lambda x: B.fine_branch(x, spec, w),
                                        (1, 4, 9, 9), seed=1)
        fp = B.center_footprint(masks[0])
        ii, jj = np.nonzero(fp)
        assert B.footprint_side(fp) == 3
        assert np.abs(ii - 4).max() <= 1 and np.abs(jj - 4).max() <= 1

    def test_constant_input_gives_constant_output(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        x = Tensor(np.full((1, 4, 6, 6), 0.8))
        out = B.fine_branch(x, spec, w).data
        for c in range(4):
            assert np.ptp(out[0, c]) < 1e-12

    def test_matches_primitive_composition(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        x = Tensor(rng.standard_normal((2, 4, 7, 7)))
        got = B.fine_branch(x, spec, w).data
        h = tz.layer_norm(x, w["ln1.scale"], w["ln1.shift"], eps=spec.ln_eps)
        h = tz.conv2d(h, w["dw.kernel"], w["dw.bias"], groups=4, padding="same")
        h = tz.simple_gate(h)
        h = tz.sca(h, w["sca.weight"], w["sca.bias"])
        want = tz.add(h, x).data
        assert np.array_equal(got, want)

    def test_odd_channels_rejected(self, rng):
        with pytest.raises(ValueError):
            small_spec(channels=5)


class TestCoarseBranch:
    def test_footprint_ladder_distances(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)

        def chain(x):
            f = B.fine_branch(x, spec, w)
            return (f,) + B.coarse_branch(f, spec, w)

        masks = B.receptive_field_probe(chain, (1, 4, 33, 33), seed=0)
        fp31 = B.center_footprint(masks[3])
        center = 16
        # Chebyshev distance 16 never reaches the center output
        ring16 = np.zeros_like(fp31)
        ring16[center - 16, :] = True
        ring16[:, center - 16] = True
        ring16[center + 16, :] = True
        ring16[:, center + 16] = True
        assert not (fp31 & ring16).any()
        # distance 15 along the dilation lattice does
        assert fp31[center - 15, center - 15]
        assert fp31[center + 15, center + 15]

    def test_zero_input_zero_bias_gives_zero(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        x = Tensor(np.zeros((1, 4, 12, 12)))
        for stage in B.coarse_branch(B.fine_branch(x, spec, w), spec, w):
            assert np.abs(stage.data).max() == 0.0

    def test_groups_equal_channels_is_depthwise(self, rng):
        spec = small_spec(groups=4)
        w = B.init_block_weights(spec, rng, zero_final=False)
        f = Tensor(rng.standard_normal((1, 4, 16, 16)))
        got = B.coarse_branch(f, spec, w)[0].data
        conv = tz.conv2d(f, w["coarse0.kernel"], w["coarse0.bias"],
                         dilation=2, groups=4, padding="same")
        assert w["coarse0.kernel"].shape == (4, 1, 3, 3)
        want = tz.add(conv, f).data
        assert np.array_equal(got, want)


class TestMafc:
    def test_gate_strictly_inside_unit_interval(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        f_fine = Tensor(rng.standard_normal((1, 4, 8, 8)) * 5)
        f_coarse = Tensor(rng.standard_normal((1, 4, 8, 8)) * 5)
        f_c2f = tz.add(f_coarse, f_fine)
        pooled = tz.concat_channels([tz.pool_reduce(f_c2f, "gap_s"),
                                     tz.pool_reduce(f_c2f, "gmp_s")])
        w_s = tz.conv2d(pooled, w["mafc.spatial.kernel"], w["mafc.spatial.bias"], padding="same")
        squeezed = tz.relu(tz.conv2d(tz.pool_reduce(f_c2f, "gap_c"), w["mafc.chan1.kernel"],
                                     w["mafc.chan1.bias"], padding=0))
        w_c = tz.conv2d(squeezed, w["mafc.chan2.kernel"], w["mafc.chan2.bias"], padding=0)
        gate = tz.sigmoid(tz.add(w_s, w_c)).data
        assert (gate > 0).all() and (gate < 1).all()

    def test_zero_attention_weights_give_exact_midpoint(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        for key in ("mafc.spatial.kernel", "mafc.spatial.bias", "mafc.chan1.kernel",
                    "mafc.chan1.bias", "mafc.chan2.kernel", "mafc.chan2.bias"):
            w[key] = Tensor(np.zeros_like(w[key].data))
        f_fine = Tensor(rng.standard_normal((1, 4, 6, 6)))
        f_coarse = Tensor(rng.standard_normal((1, 4, 6, 6)))
        got = B.mafc_fuse(f_fine, f_coarse, spec, w).data
        pix = tz.sigmoid(tz.conv2d(f_fine, w["mafc.pixel.kernel"], w["mafc.pixel.bias"], padding=0))
        refined = tz.mul(pix, f_fine)
        mid = tz.mul(tz.add(refined, f_coarse), 0.5)
        want = tz.conv2d(mid, w["mafc.fuse.kernel"], w["mafc.fuse.bias"], padding=0).data
        assert np.abs(got - want).max() < 1e-15

    @pytest.mark.parametrize("bias,expect_fine", [(50.0, True), (-50.0, False)])
    def test_saturated_gate_selects_one_branch(self, rng, bias, expect_fine):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        w["mafc.spatial.kernel"] = Tensor(np.zeros((1, 2, 7, 7)))
        w["mafc.spatial.bias"] = Tensor(np.array([bias]))
        for key in ("mafc.chan1.kernel", "mafc.chan1.bias", "mafc.chan2.kernel",
                    "mafc.chan2.bias"):
            w[key] = Tensor(np.zeros_like(w[key].data))
        f_fine = Tensor(rng.standard_normal((1, 4, 6, 6)))
        f_coarse = Tensor(rng.standard_normal((1, 4, 6, 6)))
        got = B.mafc_fuse(f_fine, f_coarse, spec, w).data
        pix = tz.sigmoid(tz.conv2d(f_fine, w["mafc.pixel.kernel"], w["mafc.pixel.bias"], padding=0))
        selected = tz.mul(pix, f_fine) if expect_fine else f_coarse
        want = tz.conv2d(selected, w["mafc.fuse.kernel"], w["mafc.fuse.bias"], padding=0).data
        assert np.array_equal(got, want)

    def test_matches_straight_line_composition(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        f_fine = Tensor(rng.standard_normal((2, 4, 6, 6)))
        f_coarse = Tensor(rng.standard_normal((2, 4, 6, 6)))
        got = B.mafc_fuse(f_fine, f_coarse, spec, w).data
        f_c2f = tz.add(f_coarse, f_fine)
        pooled = tz.concat_channels([tz.pool_reduce(f_c2f, "gap_s"),
                                     tz.pool_reduce(f_c2f, "gmp_s")])
        w_s = tz.conv2d(pooled, w["mafc.spatial.kernel"], w["mafc.spatial.bias"], padding="same")
        squeezed = tz.relu(tz.conv2d(tz.pool_reduce(f_c2f, "gap_c"), w["mafc.chan1.kernel"],
                                     w["mafc.chan1.bias"], padding=0))
        w_c = tz.conv2d(squeezed, w["mafc.chan2.kernel"], w["mafc.chan2.bias"], padding=0)
        gate = tz.sigmoid(tz.add(w_s, w_c))
        pix = tz.sigmoid(tz.conv2d(f_fine, w["mafc.pixel.kernel"], w["mafc.pixel.bias"], padding=0))
        refined = tz.mul(pix, f_fine)
        mixed = tz.add(tz.mul(refined, gate), tz.mul(f_coarse, 1.0 - gate))
        want = tz.conv2d(mixed, w["mafc.fuse.kernel"], w["mafc.fuse.bias"], padding=0).data
        assert np.array_equal(got, want)

    def test_branch_shape_mismatch_rejected(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        with pytest.raises(ShapeError):
            B.mafc_fuse(Tensor(np.zeros((1, 4, 6, 6))), Tensor(np.zeros((1, 4, 5, 5))), spec, w)


class TestC2fBlock:
    def test_shape_preserved(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        x = Tensor(rng.standard_normal((3, 4, 10, 10)))
        assert B.c2f_block(x, spec, w).shape == x.shape

    def test_zero_final_conv_is_identity(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=True)
        x = Tensor(rng.standard_normal((1, 4, 8, 8)))
        assert np.array_equal(B.c2f_block(x, spec, w).data, x.data)

    def test_grad_check_full_block(self, rng):
        spec = small_spec(channels=2)
        w = B.init_block_weights(spec, rng, zero_final=False)
        x = Tensor(rng.standard_normal((1, 2, 8, 8)))
        rep = grad_check(lambda a: tz.tensor_mean(tz.mul(B.c2f_block(a, spec, w),
                                                         B.c2f_block(a, spec, w))),
                         [x], tolerance=1e-3)
        assert rep.max_rel_err < 1e-3

    def test_outputs_finite_on_wide_inputs(self):
        """Property: outputs stay finite for inputs in [-10, 10] with
        unit-scale random weights (100 randomized trials)."""
        for trial in range(100):
            rng = np.random.default_rng(3000 + trial)
            spec = small_spec(channels=int(rng.choice([2, 4, 6])))
            w = B.init_block_weights(spec, rng, zero_final=False)
            x = Tensor(rng.uniform(-10, 10, (1, spec.channels, 6, 6)))
            out = B.c2f_block(x, spec, w)  # non-finite values would raise
            assert np.all(np.isfinite(out.data))


class TestReceptiveFieldProbe:
    def test_identity_function_single_pixel(self):
        masks = B.receptive_field_probe(lambda x: x, (1, 2, 7, 7))
        fp = B.center_footprint(masks[0])
        assert fp.sum() == 1 and fp[3, 3]

    def test_ladder_default_dilations(self, rng):
        spec = small_spec()
        w = B.init_block_weights(spec, rng, zero_final=False)
        assert B.footprint_ladder(spec, w, size=33) == [3, 7, 15, 31]

    def test_ladder_tampered_dilations(self, rng):
        spec = small_spec(dilations=(2, 4, 4))
        w = B.init_block_weights(spec, rng, zero_final=False)
        assert B.footprint_ladder(spec, w, size=33) == [3, 7, 15, 23]

    def test_footprint_side_empty(self):
        assert B.footprint_side(np.zeros((5, 5), dtype=bool)) == 0
