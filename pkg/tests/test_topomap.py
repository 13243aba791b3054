import numpy as np
import pytest

from mpeeg.synth import SynthConfig, generate
from mpeeg.topomap import (
    ELECTRODE_POSITIONS,
    electrode_position,
    interpolate_grid,
    render_topomap_svg,
    trial_averaged_values,
)
from mpeeg.types import DEFAULT_ANALYSIS_CHANNELS


#: the 62 scalp electrodes of the 64-channel cap (mastoids excluded)
CAP_62 = (
    "FP1 FPZ FP2 AF3 AF4 F7 F5 F3 F1 FZ F2 F4 F6 F8 "
    "FT7 FC5 FC3 FC1 FCZ FC2 FC4 FC6 FT8 T7 C5 C3 C1 CZ C2 C4 C6 T8 "
    "TP7 CP5 CP3 CP1 CPZ CP2 CP4 CP6 TP8 P7 P5 P3 P1 PZ P2 P4 P6 P8 "
    "PO7 PO5 PO3 POZ PO4 PO6 PO8 CB1 O1 OZ O2 CB2"
).split()


class TestLayout:
    def test_covers_62_scalp_electrodes(self):
        assert len(CAP_62) == 62
        for name in CAP_62:
            assert name in ELECTRODE_POSITIONS, name

    def test_analysis_channels_resolve(self):
        for name in DEFAULT_ANALYSIS_CHANNELS:
            x, y = electrode_position(name)
            assert x * x + y * y <= 1.0

    def test_all_positions_inside_disk(self):
        for name, (x, y) in ELECTRODE_POSITIONS.items():
            assert x * x + y * y <= 1.0 + 1e-9, name

    def test_landmarks(self):
        assert electrode_position("CZ") == (0.0, 0.0)
        x, y = electrode_position("T8")
        assert x == pytest.approx(0.8) and y == pytest.approx(0.0, abs=1e-12)
        x, y = electrode_position("C3")
        assert x == pytest.approx(-0.4) and y == pytest.approx(0.0, abs=1e-12)

    def test_unknown_listed(self):
        with pytest.raises(ValueError) as err:
            electrode_position("QQ7")
        assert "FC6" in str(err.value)


class TestInterpolation:
    def test_uniform_values_uniform_grid(self):
        values = {name: 2.5 for name in DEFAULT_ANALYSIS_CHANNELS}
        grid, _, _ = interpolate_grid(values, resolution=32)
        finite = grid[np.isfinite(grid)]
        np.testing.assert_allclose(finite, 2.5, atol=1e-9)

    def test_hot_channel_peak_at_electrode(self):
        values = {name: 0.0 for name in DEFAULT_ANALYSIS_CHANNELS}
        values["C3"] = 1.0
        grid, xs, ys = interpolate_grid(values, resolution=97)
        iy, ix = np.unravel_index(np.nanargmax(grid), grid.shape)
        ex, ey = electrode_position("C3")
        assert abs(xs[ix] - ex) < 0.05
        assert abs(ys[iy] - ey) < 0.05

    def test_outside_disk_is_nan(self):
        values = {name: 1.0 for name in DEFAULT_ANALYSIS_CHANNELS}
        grid, _, _ = interpolate_grid(values, resolution=16)
        assert np.isnan(grid[0, 0])


class TestSvg:
    def test_deterministic_bytes(self):
        values = {name: float(i) for i, name in
                  enumerate(DEFAULT_ANALYSIS_CHANNELS)}
        a = render_topomap_svg(values, resolution=24)
        b = render_topomap_svg(values, resolution=24)
        assert a == b
        assert a.startswith('<?xml version="1.0"')
        assert "<svg" in a and "</svg>" in a

    def test_bounds_printed(self):
        values = {name: float(i) for i, name in
                  enumerate(DEFAULT_ANALYSIS_CHANNELS)}
        svg = render_topomap_svg(values, resolution=16)
        assert ">9<" in svg or "9.0" in svg  # max bound label
        assert ">0<" in svg or "0.0" in svg  # min bound label


class TestTrialAverages:
    def test_phase_maps_similar_at_full_coupling(self):
        cfg = SynthConfig(
            num_subjects=2, trials_per_class=4, class_set="binary",
            sampling_rate=256.0, cross_phase_coupling=1.0,
            shared_mixing=True, noise_sigma=0.05, rng_seed=5,
            gain_range=(1.0, 1.0), onset_jitter=0.0,
        )
        recs = generate(cfg)
        vi = trial_averaged_values(recs, "pat", "imagined")
        vs = trial_averaged_values(recs, "pat", "spoken")
        gi, _, _ = interpolate_grid(vi, resolution=32)
        gs, _, _ = interpolate_grid(vs, resolution=32)
        mask = np.isfinite(gi)
        r = np.corrcoef(gi[mask], gs[mask])[0, 1]
        assert r > 0.9

    def test_unknown_prompt_lists_options(self):
        cfg = SynthConfig(num_subjects=1, trials_per_class=1,
                          sampling_rate=256.0, rng_seed=6)
        recs = generate(cfg)
        with pytest.raises(ValueError) as err:
            trial_averaged_values(recs, "nope", "imagined")
        assert "pat" in str(err.value)
