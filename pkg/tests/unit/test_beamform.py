"""波束形成模块单元测试"""

import numpy as np
import pytest

from fm_das.beamform import (
    ApodizationSpec,
    BeamformedImage,
    RfDataSet,
    _interp_channel,
    beamform_image,
    das_beamform,
    envelope_detect,
    log_compress,
    preprocess_sos,
    receive_apodization,
    transmit_gate,
)
from fm_das.delays import GeometricDelayProvider, make_transmit_events
from fm_das.errors import ConfigError, DataMismatchError, ImageError
from fm_das.medium import Grid2D, SosMap
from fm_das.phantom import Phantom, TargetRegistry
from fm_das.rfsim import PulseSpec, SimConfig, pulse_waveform, simulate_rf
from tests.fixtures.builders import MM, homogeneous_sos, small_array, small_grid


@pytest.fixture
def tiny():
    """4 阵元、2 次发射、随机射频的极小实例"""
    array = small_array(n_elements=4)
    events = make_transmit_events(array, 2, 3 * MM)
    rng = np.random.default_rng(3)
    rf = RfDataSet(
        samples=rng.standard_normal((2, 4, 200)), fs=20e6, t0=0.5e-6, array=array,
        events=tuple(events),
    )
    pixel_grid = Grid2D.from_extent(-0.5 * MM, 0.5 * MM, 2 * MM, 2.4 * MM, 0.25 * MM, 0.1 * MM)
    return rf, GeometricDelayProvider(array, events), pixel_grid


def reference_das(rf, provider, pixel_grid, f_number):
    """逐像素、逐发射、逐阵元的直接求和"""
    out = np.zeros(pixel_grid.shape)
    n_t = rf.n_samples
    for a, x in enumerate(pixel_grid.x):
        for b, z in enumerate(pixel_grid.z):
            total = 0.0
            for j in range(rf.n_transmits):
                for i in range(rf.array.n_elements):
                    xi = rf.array.element_x[i]
                    half = z / (2.0 * f_number)
                    u = (xi - x) / half
                    if abs(u) > 1.0:
                        continue
                    w = 0.5 * (1.0 + np.cos(np.pi * u))
                    idx = (float(provider.delay(j, i, x, z)) - rf.t0) * rf.fs
                    if idx < 0 or idx > n_t - 1:
                        continue
                    k = min(int(np.floor(idx)), n_t - 2)
                    frac = idx - k
                    s = rf.samples[j, i]
                    total += w * (s[k] * (1.0 - frac) + s[k + 1] * frac)
            out[a, b] = total
    return out


class TestRfDataSet:
    """射频数据集测试"""

    def test_shape_mismatch(self, tiny):
        """测试通道数与阵元数不一致"""
        rf, _, _ = tiny
        with pytest.raises(DataMismatchError):
            RfDataSet(samples=np.zeros((2, 3, 200)), fs=rf.fs, t0=0.0, array=rf.array,
                      events=rf.events)

    def test_nyquist(self, tiny):
        """测试采样率不满足奈奎斯特条件"""
        rf, _, _ = tiny
        with pytest.raises(DataMismatchError):
            RfDataSet(samples=rf.samples, fs=5e6, t0=0.0, array=rf.array, events=rf.events)

    def test_non_finite(self, tiny):
        """测试非有限采样"""
        rf, _, _ = tiny
        samples = rf.samples.copy()
        samples[0, 0, 0] = np.nan
        with pytest.raises(DataMismatchError):
            RfDataSet(samples=samples, fs=rf.fs, t0=0.0, array=rf.array, events=rf.events)


class TestApodization:
    """变迹测试"""

    def test_receive_window(self):
        """测试动态接收汉宁窗"""
        z = np.array([4 * MM, 4 * MM, 4 * MM, 0.0])
        x = np.array([0.0, 0.5 * MM, 1.5 * MM, 0.0])
        w = receive_apodization(0.0, x, z, f_number=2.0)

        # 半孔径 = 4 mm / (2·2) = 1 mm
        assert w[0] == pytest.approx(1.0)
        assert w[1] == pytest.approx(0.5)
        assert w[2] == 0.0
        assert w[3] == 0.0

    def test_spec_validation(self):
        """测试变迹配置校验"""
        with pytest.raises(ConfigError):
            ApodizationSpec(f_number=0.0)
        with pytest.raises(ConfigError):
            ApodizationSpec(window="tukey")

    def test_transmit_gate(self):
        """测试沙漏形发射门控在焦点处最窄"""
        array = small_array()
        event = make_transmit_events(array, 1, 7 * MM)[0]
        x = np.array([0.0, 1.0 * MM, 1.0 * MM])
        z = np.array([7 * MM, 7 * MM, 1 * MM])
        gate = transmit_gate(event, array, x, z, lateral_step=0.3 * MM)

        assert gate.tolist() == [True, False, True]


class TestInterpolation:
    """射频插值测试"""

    def test_linear(self):
        """测试两点线性插值"""
        signal = np.array([0.0, 2.0, 4.0, 1.0])
        out = _interp_channel(signal, np.array([0.5, 1.25, 3.0]))
        np.testing.assert_allclose(out, [1.0, 2.5, 1.0])

    def test_out_of_range_is_zero(self):
        """测试采样范围外为 0"""
        signal = np.ones(4)
        out = _interp_channel(signal, np.array([-0.1, 3.01, 10.0]))
        np.testing.assert_array_equal(out, 0.0)


class TestDasBeamform:
    """延迟叠加测试"""

    def test_matches_reference_loop(self, tiny):
        """测试与直接求和一致"""
        rf, provider, pixel_grid = tiny
        apod = ApodizationSpec(f_number=1.0)
        out = das_beamform(rf, provider, apod, pixel_grid)
        expected = reference_das(rf, provider, pixel_grid, 1.0)

        assert np.any(expected != 0.0)
        np.testing.assert_allclose(out, expected, rtol=1e-10, atol=1e-12)

    def test_thread_count_invariance(self):
        """测试确定性模式下结果与线程数逐位一致"""
        array = small_array()
        events = make_transmit_events(array, 12, 7 * MM)
        rng = np.random.default_rng(5)
        rf = RfDataSet(samples=rng.standard_normal((12, 16, 300)), fs=20e6, t0=0.0,
                       array=array, events=tuple(events))
        provider = GeometricDelayProvider(array, events)
        pixel_grid = Grid2D.from_extent(-1 * MM, 1 * MM, 4 * MM, 8 * MM, 0.2 * MM, 0.1 * MM)
        apod = ApodizationSpec()

        serial = das_beamform(rf, provider, apod, pixel_grid, threads=1)
        parallel = das_beamform(rf, provider, apod, pixel_grid, threads=4)
        loose = das_beamform(rf, provider, apod, pixel_grid, threads=4, deterministic=False)

        np.testing.assert_array_equal(serial, parallel)
        np.testing.assert_allclose(loose, serial, rtol=1e-10, atol=1e-12)

    def test_linearity(self, tiny):
        """测试延迟与变迹固定时成像对射频数据线性"""
        rf, provider, pixel_grid = tiny
        rng = np.random.default_rng(11)
        other = rng.standard_normal(rf.samples.shape)
        a, b = 2.5, -0.75

        def image_of(samples):
            data = RfDataSet(samples=samples, fs=rf.fs, t0=rf.t0, array=rf.array, events=rf.events)
            return das_beamform(data, provider, ApodizationSpec(f_number=1.0), pixel_grid)

        combined = image_of(a * rf.samples + b * other)
        expected = a * image_of(rf.samples) + b * image_of(other)

        scale = np.abs(expected).max()
        np.testing.assert_allclose(combined, expected, rtol=1e-9, atol=1e-9 * scale)

    def test_array_mismatch(self, tiny):
        """测试射频阵列与提供者阵列不一致"""
        rf, _, pixel_grid = tiny
        other = small_array(n_elements=6)
        provider = GeometricDelayProvider(other, make_transmit_events(other, 2, 3 * MM))
        with pytest.raises(DataMismatchError):
            das_beamform(rf, provider, ApodizationSpec(), pixel_grid)

    def test_point_scatterer_is_focused(self):
        """测试单个点散射子的包络峰值位于散射子处"""
        grid = small_grid()
        array = small_array()
        events = make_transmit_events(array, 8, 7 * MM)
        registry = TargetRegistry(point_targets=[(0.3 * MM, 7 * MM)])
        phantom = Phantom(
            scenario="M1", seed=0, sos=homogeneous_sos(grid),
            scatterers=np.array([[0.3 * MM, 7 * MM, 1.0]]), registry=registry,
        )
        rf = simulate_rf(phantom, array, events, PulseSpec(f0=3e6),
                         SimConfig(truth_delay_model="geometric_constant_c"))
        pixel_grid = Grid2D.from_extent(-2 * MM, 2 * MM, 4 * MM, 10 * MM, 0.1 * MM, 0.05 * MM)
        image = beamform_image(rf, GeometricDelayProvider(array, events), ApodizationSpec(),
                               pixel_grid)

        a, b = np.unravel_index(np.argmax(image.envelope), image.envelope.shape)
        assert abs(pixel_grid.x[a] - 0.3 * MM) <= 0.3 * MM
        assert abs(pixel_grid.z[b] - 7 * MM) <= 0.2 * MM
        assert image.log_db.max() == 0.0


class TestEnvelopeAndLog:
    """包络检测与对数压缩测试"""

    def test_envelope_bounds_signal(self):
        """测试包络不小于信号幅值"""
        z = np.arange(200)
        rf_sum = np.outer(np.ones(3), np.exp(-((z - 100) / 20.0) ** 2) * np.cos(0.6 * z))
        env = envelope_detect(rf_sum)

        assert env.shape == rf_sum.shape
        assert np.all(env >= np.abs(rf_sum) - 1e-12)
        assert env[1, 100] == pytest.approx(1.0, abs=0.02)

    def test_cosine_column_has_unit_envelope(self):
        """测试纯余弦列的包络在两端 5% 以外恒为 1"""
        z = np.arange(1000)
        rf_sum = np.outer(np.ones(3), np.cos(2 * np.pi * 0.05 * z))
        env = envelope_detect(rf_sum)

        np.testing.assert_allclose(env[:, 50:950], 1.0, atol=0.02)

    def test_gaussian_tone_peak_at_center(self):
        """测试高斯调制脉冲的包络峰值位于高斯中心一个像素以内"""
        pulse = PulseSpec(f0=3e6)
        fs = 20e6
        center = 10.013e-6
        t = np.arange(400) / fs
        rf_sum = np.outer(np.ones(2), pulse_waveform(pulse, t - center))
        env = envelope_detect(rf_sum)

        assert abs(int(np.argmax(env[0])) - center * fs) <= 1.0

    def test_envelope_too_short(self):
        """测试轴向像素过少"""
        with pytest.raises(ImageError):
            envelope_detect(np.ones((5, 3)))

    def test_log_compress(self):
        """测试最大值为 0 dB 并截断到 −DR"""
        env = np.array([[1.0, 0.1], [1e-5, 0.0]])
        log_db = log_compress(env, 60.0)

        assert log_db[0, 0] == 0.0
        assert log_db[0, 1] == pytest.approx(-20.0)
        assert log_db[1, 0] == -60.0
        assert log_db[1, 1] == -60.0

    def test_log_compress_all_zero(self):
        """测试包络全零"""
        with pytest.raises(ImageError):
            log_compress(np.zeros((4, 4)))

    def test_image_from_envelope(self):
        """测试由包络构造图像"""
        grid = Grid2D(origin_x=0.0, origin_z=0.0, dx=1.0, dz=1.0, nx=2, nz=4)
        env = np.arange(8, dtype=float).reshape(2, 4) + 1.0
        image = BeamformedImage.from_envelope(grid, env, 40.0)

        assert image.log_db.max() == 0.0
        assert image.log_db.min() >= -40.0
        assert image.dynamic_range_db == 40.0


class TestPreprocess:
    """声速图预处理测试"""

    def test_homogeneous_unchanged(self):
        """测试均匀声速图保持不变"""
        sos = homogeneous_sos()
        out = preprocess_sos(sos, 2, 4.0)

        assert out.grid == sos.grid
        np.testing.assert_allclose(out.c, 1540.0)

    def test_median_removes_spike(self):
        """测试中值滤波去除孤立尖峰"""
        grid = small_grid()
        c = np.full(grid.shape, 1540.0)
        c[20, 40] = 3000.0
        out = preprocess_sos(SosMap(grid=grid, c=c), 1, 0.0)

        np.testing.assert_allclose(out.c, 1540.0)

    def test_smoothing_preserves_range(self):
        """测试平滑后声速位于原范围内"""
        grid = small_grid()
        _, Z = grid.mesh()
        c = np.where(Z < 5 * MM, 1400.0, 1540.0)
        out = preprocess_sos(SosMap(grid=grid, c=c), 1, 2.0)

        assert out.c_min >= 1400.0 - 1e-9
        assert out.c_max <= 1540.0 + 1e-9
        assert out.c[30, 49] > 1400.0

    def test_step_edge_matches_direct_convolution(self):
        """测试阶跃边缘的平滑结果等于与采样高斯核的直接卷积"""
        grid = small_grid()
        _, Z = grid.mesh()
        c = np.where(Z < 5 * MM, 1400.0, 1540.0)
        sigma = 2.0
        out = preprocess_sos(SosMap(grid=grid, c=c), 0, sigma)

        radius = int(4 * sigma + 0.5)
        offsets = np.arange(-radius, radius + 1)
        kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
        kernel /= kernel.sum()
        column = c[0]
        padded = np.concatenate([np.full(radius, column[0]), column, np.full(radius, column[-1])])
        expected = np.convolve(padded, kernel, mode="valid")

        for i in (0, grid.nx // 2, grid.nx - 1):
            np.testing.assert_allclose(out.c[i], expected, rtol=1e-12)
        profile = out.c[grid.nx // 2]
        assert np.all(np.diff(profile) >= -1e-9)
        edge = int(round(5 * MM / grid.dz))
        assert profile[edge - radius - 2] == pytest.approx(1400.0)
        assert profile[edge + radius + 1] == pytest.approx(1540.0)

    def test_negative_parameters(self):
        """测试负参数"""
        with pytest.raises(ConfigError):
            preprocess_sos(homogeneous_sos(), -1, 1.0)
