"""OFDM sensing chain: frame generation, echo synthesis, DFT estimation.

The processing path is: QPSK frame -> delay/Doppler/steering channel ->
element-wise equalization -> IDFT range profile per receive antenna ->
DFT angle spectrum per detected range bin -> bin-to-physical conversion.

Conventions
-----------
* ``C0 = 3e8`` m/s so that derived bin widths match the documented values
  (e.g. 0.12207 m range bins at N=10240, delta_f=120 kHz).
* The uniform linear array lies along the sensor x-axis; a target at
  relative bearing theta produces the per-element phase progression
  exp(j*k*Omega) with Omega = (2*pi*d/lambda)*cos(theta).  Because cos is
  even, only bearings in (0, pi) are observable without ambiguity; the
  pipeline restricts its field of view accordingly.
* A single complex exponential peaks at the DFT bin nearest its fractional
  frequency.  The range interval convention [I*w, (I+1)*w) is therefore
  tight only for ranges in the lower half of a bin; see the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from etslam.scans import Scan
from etslam.scene import Pose, Scene, ground_truth_scan

C0 = 3.0e8


class InvisibleRegionError(ValueError):
    """An angle bin maps outside the visible region of the array (|cos| > 1)."""


@dataclass(frozen=True)
class WaveformConfig:
    """OFDM numerology plus the sensing-array geometry.

    ``d`` is the element spacing in meters; None selects half-wavelength.
    ``snr_db`` is received-echo power over noise power; None disables noise.
    """

    fc: float            # carrier frequency [Hz]
    delta_f: float       # subcarrier spacing [Hz]
    n_symbols: int       # M
    n_subcarriers: int   # N
    tp: float            # elementary symbol duration [s]
    tc: float            # guard interval [s]
    t_sym: float         # total symbol duration [s]
    n_tx: int = 32
    n_rx: int = 32
    d: Optional[float] = None
    snr_db: Optional[float] = None

    def __post_init__(self):
        if min(self.n_symbols, self.n_subcarriers, self.n_tx, self.n_rx) < 1:
            raise ValueError("N, M, N_t, N_r must all be >= 1")
        if abs(self.t_sym - (self.tp + self.tc)) > 1e-9:
            raise ValueError("t_sym must equal tp + tc (within 1e-9 s)")
        if abs(self.tp * self.delta_f - 1.0) > 1e-6:
            raise ValueError("tp * delta_f must equal 1 (within 1e-6)")
        if self.d is None:
            object.__setattr__(self, "d", self.wavelength / 2.0)
        if not self.d > 0:
            raise ValueError("antenna spacing d must be > 0")

    @property
    def wavelength(self) -> float:
        return C0 / self.fc

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.delta_f

    @property
    def range_bin_width(self) -> float:
        return C0 / (2.0 * self.n_subcarriers * self.delta_f)

    @property
    def unambiguous_range(self) -> float:
        return C0 / (2.0 * self.delta_f)

    @property
    def velocity_bin_width(self) -> float:
        return C0 / (2.0 * self.fc * self.n_symbols * self.t_sym)

    @property
    def unambiguous_velocity(self) -> float:
        return C0 / (2.0 * self.fc * self.t_sym)

    @property
    def snr_linear(self) -> Optional[float]:
        return None if self.snr_db is None else 10.0 ** (self.snr_db / 10.0)

    @classmethod
    def from_mapping(cls, doc: dict) -> "WaveformConfig":
        """Build from config-file keys (fc, delta_f, M, N, Tp, Tc, T, B, Nt, Nr, ...)."""
        cfg = cls(
            fc=float(doc["fc"]),
            delta_f=float(doc["delta_f"]),
            n_symbols=int(doc["M"]),
            n_subcarriers=int(doc["N"]),
            tp=float(doc["Tp"]),
            tc=float(doc["Tc"]),
            t_sym=float(doc["T"]),
            n_tx=int(doc.get("Nt", 32)),
            n_rx=int(doc.get("Nr", 32)),
            snr_db=None if doc.get("snr_db") is None else float(doc["snr_db"]),
            d=None,
        )
        if "d_over_lambda" in doc:
            cfg = dataclass_replace(cfg, d=float(doc["d_over_lambda"]) * cfg.wavelength)
        if "B" in doc:
            b = float(doc["B"])
            if abs(b - cfg.bandwidth) > 0.01 * cfg.bandwidth:
                raise ValueError(
                    f"configured bandwidth B={b:g} inconsistent with N*delta_f={cfg.bandwidth:g}"
                )
        return cfg


def dataclass_replace(cfg: WaveformConfig, **kw) -> WaveformConfig:
    import dataclasses

    return dataclasses.replace(cfg, **kw)


@dataclass(frozen=True)
class EchoPath:
    range_m: float
    velocity: float = 0.0
    amplitude: complex = 1.0 + 0.0j
    bearing: float = math.pi / 2.0  # broadside by default

    def __post_init__(self):
        if self.range_m < 0:
            raise ValueError("path range must be >= 0")
        if abs(self.amplitude) <= 0:
            raise ValueError("path amplitude must be nonzero")


@dataclass(frozen=True)
class ProfileSpectrum:
    magnitudes: np.ndarray
    bin_semantics: str  # "range" | "velocity" | "angle"
    config: WaveformConfig

    def __len__(self) -> int:
        return len(self.magnitudes)

    def peak_index(self) -> int:
        return int(np.argmax(self.magnitudes))


def generate_frame(cfg: WaveformConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform random QPSK payload, shape (M, N); all entries unit magnitude."""
    sym = rng.integers(0, 4, size=(cfg.n_symbols, cfg.n_subcarriers))
    return np.exp(1j * (np.pi / 4.0 + sym * np.pi / 2.0))


def _path_arrays(paths: Sequence[EchoPath]):
    r = np.array([p.range_m for p in paths], dtype=float)
    v = np.array([p.velocity for p in paths], dtype=float)
    a = np.array([p.amplitude for p in paths], dtype=complex)
    th = np.array([p.bearing for p in paths], dtype=float)
    return r, v, a, th


def _check_windows(cfg: WaveformConfig, r: np.ndarray, v: np.ndarray):
    if np.any(r >= cfg.unambiguous_range):
        raise ValueError("path range outside unambiguous window c0/(2*delta_f)")
    if np.any(np.abs(v) >= cfg.unambiguous_velocity / 2.0):
        raise ValueError("path velocity outside unambiguous window")


def _noise(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    return math.sqrt(sigma2 / 2.0) * (
        rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )


def synthesize_echo(
    cfg: WaveformConfig,
    frame: np.ndarray,
    paths: Sequence[EchoPath],
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Received matrix Y, shape (n_rx, M, N).

    Each path multiplies the frame by a delay phase across subcarriers, a
    Doppler phase across symbols, and a steering phase across rx elements.
    Noise variance is calibrated so total echo power / noise power equals
    the configured linear SNR (reference power 1 when there are no paths).
    """
    m_idx = np.arange(cfg.n_symbols)
    n_idx = np.arange(cfg.n_subcarriers)
    k_idx = np.arange(cfg.n_rx)
    y = np.zeros((cfg.n_rx, cfg.n_symbols, cfg.n_subcarriers), dtype=complex)
    if paths:
        r, v, a, th = _path_arrays(paths)
        _check_windows(cfg, r, v)
        omega = (2.0 * np.pi * cfg.d / cfg.wavelength) * np.cos(th)
        delay = np.exp(-2j * np.pi * np.outer(2.0 * r / C0 * cfg.delta_f, n_idx))  # (L, N)
        doppler = np.exp(2j * np.pi * np.outer(2.0 * v * cfg.fc / C0 * cfg.t_sym, m_idx))  # (L, M)
        steer = np.exp(1j * np.outer(omega, k_idx))  # (L, n_rx)
        y = np.einsum("lk,lm,ln->kmn", steer * a[:, None], doppler, delay)
        y *= frame[None, :, :]
    if cfg.snr_db is not None:
        ref = float(np.mean(np.abs(y) ** 2)) if paths else 1.0
        sigma2 = ref / cfg.snr_linear
        if rng is None:
            raise ValueError("rng required when noise is enabled")
        y = y + _noise(rng, y.shape, sigma2)
    return y


def equalize(y: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Element-wise division Y / X; broadcasts over a leading antenna axis."""
    y = np.asarray(y)
    if y.shape[-2:] != frame.shape:
        raise ValueError(f"shape mismatch: Y {y.shape} vs X {frame.shape}")
    return y / frame


def range_profile(s_g: np.ndarray, m: int) -> np.ndarray:
    """Magnitude of the length-N inverse DFT of symbol row ``m``."""
    s_g = np.atleast_2d(s_g)
    if not 0 <= m < s_g.shape[0]:
        raise IndexError(f"symbol index {m} out of range")
    return np.abs(np.fft.ifft(s_g[m, :]))


def velocity_profile(s_g: np.ndarray, n: int) -> np.ndarray:
    """Magnitude of the length-M forward DFT of subcarrier column ``n``."""
    s_g = np.atleast_2d(s_g)
    if not 0 <= n < s_g.shape[1]:
        raise IndexError(f"subcarrier index {n} out of range")
    return np.abs(np.fft.fft(s_g[:, n]))


def angle_spectrum(snapshot: np.ndarray, n_elements: Optional[int] = None) -> np.ndarray:
    """Magnitude of the forward DFT of a per-element snapshot."""
    snapshot = np.asarray(snapshot)
    if n_elements is not None and len(snapshot) != n_elements:
        raise ValueError(f"snapshot length {len(snapshot)} != array size {n_elements}")
    return np.abs(np.fft.fft(snapshot))


def bin_to_range(i: int, cfg: WaveformConfig) -> tuple[float, float]:
    """Half-open range interval [lo, hi) for peak bin ``i``."""
    if not 0 <= i < cfg.n_subcarriers:
        raise IndexError("range bin out of range")
    w = cfg.range_bin_width
    return (i * w, (i + 1) * w)


def bin_to_angle(i: int, cfg: WaveformConfig) -> tuple[float, float]:
    """Bearing interval (radians, lo < hi) for angle-DFT peak bin ``i``.

    The bin index is unwrapped to a signed index i' in [-N_t/2, N_t/2);
    the interval endpoints are arccos(lambda*i'/(d*N_t)) and
    arccos(lambda*(i'+1)/(d*N_t)), reported in ascending order.
    """
    nt = cfg.n_tx
    if not 0 <= i < nt:
        raise IndexError("angle bin out of range")
    ip = i if i < nt / 2 else i - nt
    scale = cfg.wavelength / (cfg.d * nt)
    a0 = ip * scale
    a1 = (ip + 1) * scale
    if not (-1.0 <= a0 <= 1.0) or not (-1.0 <= a1 <= 1.0):
        raise InvisibleRegionError(f"angle bin {i} maps outside the visible region")
    lo, hi = sorted((math.acos(a0), math.acos(a1)))
    return (lo, hi)


@dataclass(frozen=True)
class PeakPolicy:
    threshold_db: float = 12.0   # relative to the spectrum median
    max_peaks: Optional[int] = None


def detect_peaks(magnitudes: np.ndarray, policy: PeakPolicy = PeakPolicy()) -> np.ndarray:
    """Local maxima above median * 10^(threshold_db/20), sorted by magnitude."""
    mag = np.asarray(magnitudes, dtype=float)
    if mag.size == 0:
        raise ValueError("empty spectrum")
    thr = float(np.median(mag)) * 10.0 ** (policy.threshold_db / 20.0)
    left = np.empty_like(mag)
    right = np.empty_like(mag)
    left[0], left[1:] = -np.inf, mag[:-1]
    right[-1], right[:-1] = -np.inf, mag[1:]
    is_peak = (mag >= left) & (mag >= right) & (mag > thr) & (mag > 0.0)
    idx = np.flatnonzero(is_peak)
    if idx.size == 0:
        return idx
    order = idx[np.argsort(-mag[idx], kind="stable")]
    kept: list[int] = []
    for i in order:
        if all(abs(i - j) > 1 for j in kept):
            kept.append(int(i))
        if policy.max_peaks is not None and len(kept) >= policy.max_peaks:
            break
    return np.array(kept, dtype=int)


@dataclass(frozen=True)
class OfdmSensor:
    """5G-signal sensing backend.

    The uniform linear array lies along the direction of travel, so the
    cone angle measured from the array axis coincides with the sensor-frame
    bearing; the unambiguous band away from endfire restricts the field of
    view to bearings in (20 deg, 160 deg).  Casts ground-truth rays across
    that field of view, synthesizes the equalized response analytically
    (one symbol column suffices for static paths), and emits one Detection
    per (range peak, angle peak) pair.
    """

    cfg: WaveformConfig
    fov: tuple[float, float] = (math.radians(20.0), math.radians(160.0))
    n_rays: int = 71
    range_policy: PeakPolicy = PeakPolicy(threshold_db=12.0, max_peaks=64)
    angle_policy: PeakPolicy = PeakPolicy(threshold_db=6.0, max_peaks=4)

    def bearings(self) -> np.ndarray:
        return np.linspace(self.fov[0], self.fov[1], self.n_rays)

    def __call__(self, scene: Scene, pose: Pose, rng: np.random.Generator) -> Scan:
        return sense(scene, pose, self.cfg, rng, sensor=self)


def _equalized_column(
    cfg: WaveformConfig,
    ranges: np.ndarray,
    omegas: np.ndarray,
    amps: np.ndarray,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """Equalized symbol-0 response per rx element, shape (n_rx, N).

    Identical in distribution to equalize(synthesize_echo(...))[..., 0, :]
    for zero-Doppler paths: equalization of unit-modulus QPSK leaves the
    noise statistics unchanged.
    """
    n_idx = np.arange(cfg.n_subcarriers)
    k_idx = np.arange(cfg.n_rx)
    delay = np.exp(-2j * np.pi * np.outer(2.0 * ranges / C0 * cfg.delta_f, n_idx))
    steer = np.exp(1j * np.outer(omegas, k_idx))
    col = (steer * amps[:, None]).T @ delay  # (n_rx, N)
    if cfg.snr_db is not None:
        ref = float(np.mean(np.abs(col) ** 2)) if len(ranges) else 1.0
        if rng is None:
            raise ValueError("rng required when noise is enabled")
        col = col + _noise(rng, col.shape, ref / cfg.snr_linear)
    return col


def sense(
    scene: Scene,
    pose: Pose,
    cfg: WaveformConfig,
    rng: np.random.Generator,
    sensor: Optional[OfdmSensor] = None,
) -> Scan:
    """Full OFDM sensing pipeline producing a sensor-frame Scan."""
    sensor = sensor or OfdmSensor(cfg=cfg)
    if cfg.n_tx != cfg.n_rx:
        raise ValueError("monostatic processing assumes n_tx == n_rx")
    gt = ground_truth_scan(scene, pose, sensor.bearings())
    if len(gt) == 0 and cfg.snr_db is None:
        return Scan.empty()
    _check_windows(cfg, gt.ranges, np.zeros(len(gt)))
    omegas = (2.0 * np.pi * cfg.d / cfg.wavelength) * np.cos(gt.bearings)
    col = _equalized_column(cfg, gt.ranges, omegas, np.ones(len(gt), dtype=complex), rng)
    profiles = np.fft.ifft(col, axis=1)  # (n_rx, N)
    mean_mag = np.mean(np.abs(profiles), axis=0)
    range_peaks = detect_peaks(mean_mag, sensor.range_policy)
    r_ints, b_ints = [], []
    for ri in sorted(range_peaks):
        snapshot = profiles[:, ri]
        spec = angle_spectrum(snapshot, cfg.n_tx)
        for ai in sorted(detect_peaks(spec, sensor.angle_policy)):
            try:
                b_lo, b_hi = bin_to_angle(int(ai), cfg)
            except InvisibleRegionError:
                continue
            r_ints.append(bin_to_range(int(ri), cfg))
            b_ints.append((b_lo, b_hi))
    if not r_ints:
        return Scan.empty()
    return Scan.from_intervals(np.array(r_ints), np.array(b_ints))
