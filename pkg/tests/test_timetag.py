import tracemalloc

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqswap.config import load_config
from freqswap.errors import ConfigurationError, ContractViolation, FitError
from freqswap.timetag.coincidence import CoincidenceFinder, find_coincidences, select
from freqswap.timetag.histograms import (
    analyze_file,
    default_binning,
    expected_pjk,
    histograms_from_tags,
    js_divergence,
)
from freqswap.timetag.records import TagWriter, from_csv, iter_chunks, read_meta, read_tags, to_csv
from freqswap.timetag.synth import (
    CoincidenceConfig,
    class_probabilities,
    default_tofs,
    map_to_tags,
    synth_timetags,
)
from freqswap.timetag.tofs import TofsConfig, calibrate_dispersion, synth_calibration_scan


@pytest.fixture(scope="module")
def cfg():
    return load_config()


@pytest.fixture(scope="module")
def big_swap(cfg, tmp_path_factory):
    """10^7-pulse swap run on disk; shared by the slower checks."""
    path = tmp_path_factory.mktemp("tags") / "swap.bin"
    synth_timetags(cfg.params(), cfg.tofs("swap"), cfg.coincidence(), 10_000_000, 3, "swap", out_path=path)
    return path


# -- spectrometers and calibration ---------------------------------------------


def test_tofs_validation():
    with pytest.raises(ConfigurationError):
        TofsConfig(0.0)
    with pytest.raises(ConfigurationError):
        TofsConfig(944.0, jitter_fwhm=-1)
    with pytest.raises(ConfigurationError):
        TofsConfig(944.0, offset_ps=13000)


def test_monochromatic_line_no_jitter():
    t = TofsConfig(944.0, 830.0, 0.0)
    pulses = np.arange(1000)
    tags = map_to_tags(t, pulses, np.full(1000, 831.25), np.random.default_rng(0))
    offs = tags - pulses * t.rep_period
    assert np.all(offs == offs[0])
    assert offs[0] == round(6250 + 944 * 1.25)


def test_wavelength_inverse():
    t = TofsConfig(-54.0)
    lam = np.linspace(820, 840, 11)
    np.testing.assert_allclose(t.wavelength(t.delay(lam)), lam, rtol=1e-14)


def test_calibration_noiseless():
    lam = np.linspace(820, 840, 40)
    r = calibrate_dispersion(np.column_stack([lam, 100 + 944 * (lam - 830)]))
    assert r.dispersion == pytest.approx(944.0, abs=1e-9)
    assert r.rms_residual < 1e-9


def test_calibration_rank_deficient():
    with pytest.raises(FitError):
        calibrate_dispersion([(830, 1.0), (830, 2.0), (831, 3.0)])


@pytest.mark.parametrize(
    "slope,tol,sigma",
    [(944.0, 4.0, 30.0), (-54.0, 1.0, 30.0 / 2.3548200450309493)],
)
def test_calibration_monte_carlo(slope, tol, sigma):
    """40 single-tag points over 20 nm; pass rate over 200 seeds."""
    t = TofsConfig(slope, jitter_fwhm=0.0)
    lam = np.linspace(820, 840, 40)
    ok = 0
    for seed in range(200):
        scan, _ = synth_calibration_scan(t, lam, 1, 0.0, seed, timing_sigma=sigma)
        ok += abs(calibrate_dispersion(scan).dispersion - slope) <= tol
    assert ok / 200 >= 0.99


def test_calibration_closure():
    t = TofsConfig(944.0, jitter_fwhm=30.0)
    lam = np.linspace(825, 835, 30)
    scan, truth = synth_calibration_scan(t, lam, 50, 1.0, seed=4)
    cal = calibrate_dispersion(scan)
    rms = np.sqrt(np.mean((cal.wavelength(scan[:, 1]) - truth) ** 2))
    assert rms < t.jitter_fwhm / abs(t.dispersion)


# -- storage --------------------------------------------------------------------


def test_record_round_trip(tmp_path, rng):
    t = np.sort(rng.integers(0, 10**12, 5000))
    c = rng.integers(0, 4, 5000)
    p = tmp_path / "x.bin"
    with TagWriter(p) as w:
        w.write(c[:2000], t[:2000])
        w.write(c[2000:], t[2000:])
    assert p.stat().st_size == 9 * 5000
    c2, t2 = read_tags(p)
    np.testing.assert_array_equal(c2, c)
    np.testing.assert_array_equal(t2, t)
    assert sum(len(x) for x, _ in iter_chunks(p, 777)) == 5000
    assert to_csv(p, tmp_path / "x.csv") == 5000
    from_csv(tmp_path / "x.csv", tmp_path / "y.bin")
    assert (tmp_path / "y.bin").read_bytes() == p.read_bytes()


def test_writer_rejects_unsorted(tmp_path):
    with TagWriter(tmp_path / "u.bin") as w:
        w.write([0, 1], [10, 20])
        with pytest.raises(ValueError):
            w.write([0], [5])


def test_truncated_file(tmp_path):
    p = tmp_path / "t.bin"
    p.write_bytes(b"\x00" * 13)
    with pytest.raises(ValueError, match="truncated"):
        read_tags(p)


# -- synthesis --------------------------------------------------------------------


def test_class_probabilities():
    p = class_probabilities(0.04, "swap")
    assert p.sum() == pytest.approx(1.0)
    assert p[4] / (p[3] + p[4] + p[5]) == pytest.approx(0.25)
    b = class_probabilities(0.04, "fringe", block_source2=True)
    assert b[2] == b[3] == b[5] == 0
    assert b[1] == pytest.approx(0.04 + 0.04**2)


def test_synth_deterministic(cfg, tmp_path):
    for name in ("a", "b"):
        synth_timetags(cfg.params(), cfg.tofs("fringe"), cfg.coincidence(), 50_000, 9, "fringe", [0.0, 3.0], out_path=tmp_path / f"{name}.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert read_meta(tmp_path / "a.bin") == read_meta(tmp_path / "b.bin")


def test_synth_config_errors(cfg):
    with pytest.raises(ConfigurationError):
        synth_timetags(cfg.params(), cfg.tofs(), cfg.coincidence(), 10, 1, "bogus")
    tofs = cfg.tofs()
    tofs.pop("idler_d")
    with pytest.raises(ConfigurationError):
        synth_timetags(cfg.params(), tofs, cfg.coincidence(), 10, 1)
    with pytest.raises(ConfigurationError):
        CoincidenceConfig(window=0)
    with pytest.raises(ConfigurationError):
        CoincidenceConfig(efficiencies={"signal1": 1.5})


def test_efficiency_bookkeeping(cfg):
    eff = {"signal1": 0.8, "signal2": 0.7, "idler_c": 0.9, "idler_d": 0.6}
    cc = CoincidenceConfig(12500.0, efficiencies=eff)
    res = synth_timetags(cfg.params(), cfg.tofs("swap"), cc, 2_000_000, 5, "swap")
    ev = find_coincidences((res.channels, res.times), cc, order=4)
    expect = res.meta["fourfold_pre_efficiency"] * np.prod(list(eff.values()))
    assert abs(len(ev) - expect) <= 3 * np.sqrt(expect)


# -- coincidences ---------------------------------------------------------------


def test_identical_times_pair():
    cc = CoincidenceConfig(100.0)
    t = np.arange(10) * 12500 + 500
    ev = find_coincidences({2: t, 3: t}, cc, order=2)
    assert len(ev) == 10


def test_offset_beyond_window():
    cc = CoincidenceConfig(100.0)
    t = np.arange(10) * 12500 + 500
    assert len(find_coincidences({2: t, 3: t + 150}, cc, order=2)) == 0


def test_unsorted_rejected():
    cc = CoincidenceConfig(100.0)
    with pytest.raises(ContractViolation):
        find_coincidences({2: [30, 10]}, cc, order=2)
    f = CoincidenceFinder(cc)
    f.feed([0, 0], [10, 20])
    with pytest.raises(ContractViolation):
        f.feed([0], [5])
    with pytest.raises(ContractViolation):
        select(f.flush(), 3, cc)


def test_delays_applied():
    cc = CoincidenceConfig(50.0, delays={"idler_d": 300.0})
    t = np.arange(5) * 12500 + 1000
    assert len(find_coincidences({2: t, 3: t + 300}, cc, order=2)) == 5


@given(st.integers(1, 5000), st.integers(0, 2**31))
def test_prop_chunking_independent(chunk, seed):
    r = np.random.default_rng(seed)
    n = 3000
    t = np.sort(r.integers(0, 12500 * 400, n))
    c = r.integers(0, 4, n)
    cc = CoincidenceConfig(12500.0)
    whole = find_coincidences((c, t), cc, order=None)
    parts = [(c[a:a + chunk], t[a:a + chunk]) for a in range(0, n, chunk)]
    split = find_coincidences(iter(parts), cc, order=None)
    np.testing.assert_array_equal(whole.pulse, split.pulse)
    np.testing.assert_array_equal(whole.counts, split.counts)
    np.testing.assert_array_equal(whole.times, split.times)


# -- histograms -------------------------------------------------------------------


def test_empty_histograms(cfg):
    ev = find_coincidences((np.zeros(0, int), np.zeros(0, int)), cfg.coincidence())
    b = default_binning(cfg.params())
    for mode in ("swap", "source", "fringe"):
        h = histograms_from_tags(ev, cfg.tofs(mode), b, mode)
        assert h.p_counts.sum() == h.signal_jsi.sum() == h.source_jsi.sum() == 0


def test_expected_pjk_mass(cfg):
    b = default_binning(cfg.params())
    m, out = expected_pjk(cfg.params(), *(default_tofs()[r] for r in ("idler_c", "idler_d")), b)
    assert m.sum() + out == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(m, m.T, rtol=1e-9, atol=1e-15)


def test_js_divergence_bounds(rng):
    p = rng.random(50)
    assert js_divergence(p, p) == pytest.approx(0.0, abs=1e-12)
    q = np.zeros(50)
    q[0] = 1
    assert 0 < js_divergence(p, q) <= 1


def test_out_of_range_reported(big_swap, cfg):
    h = analyze_file(big_swap, default_binning(cfg.params()))
    counted = h.p_counts.sum()
    assert counted + h.out_of_range["idler"] == h.n_events["fourfold"]
    assert h.out_of_range["idler"] > 0


def test_diagonal_suppression(big_swap, cfg):
    h = analyze_file(big_swap, default_binning(cfg.params()))
    c = h.p_counts + h.p_counts.T
    n = len(c)
    for j in range(1, n - 1):
        assert c[j, j] < 0.5 * (c[j, j - 1] + c[j, j + 1])


def test_histograms_chunk_independent(big_swap, cfg):
    b = default_binning(cfg.params())
    h1 = analyze_file(big_swap, b, chunk=1 << 12)
    h2 = analyze_file(big_swap, b, chunk=1 << 20)
    np.testing.assert_array_equal(h1.p_counts, h2.p_counts)
    np.testing.assert_array_equal(h1.signal_jsi, h2.signal_jsi)


def test_streaming_memory_bound(big_swap, cfg, tmp_path):
    small = tmp_path / "small.bin"
    synth_timetags(cfg.params(), cfg.tofs("swap"), cfg.coincidence(), 100_000, 3, "swap", out_path=small)
    b = default_binning(cfg.params())
    peaks = []
    for path in (small, big_swap):
        tracemalloc.start()
        analyze_file(path, b, chunk=1 << 12)
        peaks.append(tracemalloc.get_traced_memory()[1])
        tracemalloc.stop()
    assert peaks[1] < 1.1 * peaks[0]


def test_synth_memory_bounded(cfg, tmp_path):
    peaks = []
    for n in (1_000_000, 5_000_000):
        tracemalloc.start()
        synth_timetags(cfg.params(), cfg.tofs("swap"), cfg.coincidence(), n, 3, "swap", out_path=tmp_path / f"{n}.bin")
        peaks.append(tracemalloc.get_traced_memory()[1])
        tracemalloc.stop()
    assert peaks[1] < 1.1 * peaks[0]
