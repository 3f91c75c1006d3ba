import logging
from typing import List, Optional, Tuple

import numpy as np

from ..config import ANALYSIS_DEFAULTS
from ..exceptions import AnalysisError, SeriesTooShortError
from ..models.analysis import DecayFit, EnergySeries

logger = logging.getLogger(__name__)


def _window_arrays(series: EnergySeries, window: Optional[Tuple[float, float]]):
    if window is None:
        window = (float(series.times[0]), float(series.times[-1]))
    t1, t2 = window
    if t2 <= t1:
        raise AnalysisError(f"empty fit window [{t1}, {t2}]")
    times, values = series.window(t1, t2)
    if times.size < ANALYSIS_DEFAULTS["min_points"]:
        raise SeriesTooShortError(
            f"{times.size} samples in [{t1:.4g}, {t2:.4g}], need at least {ANALYSIS_DEFAULTS['min_points']}"
        )
    if np.any(values <= ANALYSIS_DEFAULTS["floor"]):
        raise AnalysisError(f"non-positive energy (<= {ANALYSIS_DEFAULTS['floor']:g}) inside the fit window")
    return (t1, t2), times, values


def _line_fit(x: np.ndarray, y: np.ndarray):
    """最小二乘直线，返回 (slope, intercept, r², residual rms)"""
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_squared, float(np.sqrt(ss_res / y.size))


def _sub_window_slopes(x: np.ndarray, y: np.ndarray, count: int) -> List[float]:
    slopes = []
    for chunk_x, chunk_y in zip(np.array_split(x, count), np.array_split(y, count)):
        if chunk_x.size >= 2:
            slopes.append(float(np.polyfit(chunk_x, chunk_y, 1)[0]))
    return slopes


def _flags(r_squared: float, slopes: List[float]) -> List[str]:
    flags = []
    if r_squared < ANALYSIS_DEFAULTS["poor_fit_r_squared"]:
        flags.append("poor_fit")
    if not _slope_stable(slopes):
        flags.append("unstable_slope")
    return flags


def fit_exponential(series: EnergySeries, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """log E = log C₁ - C₂ t"""
    window, times, values = _window_arrays(series, window)
    log_values = np.log(values)
    slope, intercept, r_squared, rms = _line_fit(times, log_values)
    slopes = [-s for s in _sub_window_slopes(times, log_values, ANALYSIS_DEFAULTS["sub_windows"])]
    fit = DecayFit(
        model="exponential",
        rate=-slope,
        prefactor=float(np.exp(intercept)),
        fit_window=window,
        r_squared=r_squared,
        residual_rms=rms,
        sub_window_slopes=slopes,
        flags=_flags(r_squared, slopes),
    )
    if fit.flags:
        logger.warning(f"exponential fit on [{window[0]:.4g}, {window[1]:.4g}] flagged {fit.flags}: r^2={fit.r_squared:.4f}")
    return fit


def fit_polynomial(series: EnergySeries, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """log E = log C - p log t"""
    window, times, values = _window_arrays(series, window)
    if times[0] <= 0:
        raise AnalysisError("polynomial fit needs t1 > 0")
    log_times = np.log(times)
    log_values = np.log(values)
    slope, intercept, r_squared, rms = _line_fit(log_times, log_values)
    slopes = [-s for s in _sub_window_slopes(log_times, log_values, ANALYSIS_DEFAULTS["sub_windows"])]
    fit = DecayFit(
        model="polynomial",
        rate=-slope,
        prefactor=float(np.exp(intercept)),
        fit_window=window,
        r_squared=r_squared,
        residual_rms=rms,
        sub_window_slopes=slopes,
        flags=_flags(r_squared, slopes),
    )
    if fit.flags:
        logger.warning(f"polynomial fit on [{window[0]:.4g}, {window[1]:.4g}] flagged {fit.flags}: r^2={fit.r_squared:.4f}")
    return fit


def extinction_time(series: EnergySeries, threshold: Optional[float] = None) -> Optional[float]:
    """此后所有样本都低于 threshold·E(0) 的最早样本时刻"""
    threshold = ANALYSIS_DEFAULTS["extinction_threshold"] if threshold is None else threshold
    if threshold <= 0:
        raise AnalysisError(f"extinction threshold must be positive, got {threshold}")
    level = threshold * series.reference_energy
    above = np.nonzero(series.values >= level)[0]
    if above.size == 0:
        return float(series.times[0])
    last = int(above[-1])
    if last == series.times.size - 1:
        return None
    return float(series.times[last + 1])


def _slope_stable(slopes: List[float]) -> bool:
    if len(slopes) < 2:
        return False
    reference = abs(np.mean(slopes))
    if reference == 0.0:
        return False
    return (max(slopes) - min(slopes)) <= ANALYSIS_DEFAULTS["slope_tolerance"] * reference


def default_window(series: EnergySeries) -> Tuple[float, float]:
    """[t_transit + 5, 0.9 T]，终点截在能量跌破 fit_floor·E(0) 之前的最后一个样本"""
    transit = series.meta.transit_time or 0.0
    start = max(transit + ANALYSIS_DEFAULTS["transit_offset"], float(series.times[0]))
    end = ANALYSIS_DEFAULTS["window_end_fraction"] * float(series.times[-1])
    level = ANALYSIS_DEFAULTS["fit_floor"] * series.reference_energy
    below = np.nonzero((series.times > start) & (series.values < level))[0]
    if below.size:
        end = min(end, float(series.times[below[0] - 1]))
    return start, end


def window_ladder(window: Tuple[float, float], rungs: Optional[int] = None) -> List[Tuple[float, float]]:
    """终点固定、起点逐级后移的候选窗口；最后一级仍覆盖原窗口的一半以上"""
    rungs = ANALYSIS_DEFAULTS["window_ladder"] if rungs is None else rungs
    t1, t2 = window
    step = (t2 - t1) / (2 * rungs)
    return [(t1 + k * step, t2) for k in range(rungs)]


def empties_in_finite_time(series: EnergySeries, t_ext: float) -> bool:
    """跌破阈值的时刻是否落在出射时刻的容差内；未知出射时刻时直接认可"""
    exit_time = series.meta.exit_time
    if exit_time is None:
        return True
    return t_ext <= exit_time * (1.0 + ANALYSIS_DEFAULTS["exit_slack"])


def _judge(series: EnergySeries, window: Tuple[float, float]) -> DecayFit:
    if window[1] <= window[0]:
        raise SeriesTooShortError(f"fit window [{window[0]:.4g}, {window[1]:.4g}] is empty; extend T")
    _, values = series.window(*window)
    if values.size and values.min() > 0 and values.max() / values.min() < 10.0:
        raise SeriesTooShortError(
            f"less than one decade of decay inside [{window[0]:.4g}, {window[1]:.4g}]; extend T"
        )

    exponential = fit_exponential(series, window)
    polynomial = fit_polynomial(series, window)
    ratio = ANALYSIS_DEFAULTS["residual_ratio"]

    def wins(candidate: DecayFit, other: DecayFit) -> bool:
        return (
            candidate.residual_rms * ratio <= other.residual_rms
            and _slope_stable(candidate.sub_window_slopes)
            and candidate.rate > 0
        )

    if wins(exponential, polynomial):
        return exponential
    if wins(polynomial, exponential):
        return polynomial
    return DecayFit(
        model="inconclusive",
        fit_window=window,
        r_squared=max(exponential.r_squared, polynomial.r_squared),
        residual_rms=min(exponential.residual_rms, polynomial.residual_rms),
        flags=["exponential_rms=%r" % exponential.residual_rms, "polynomial_rms=%r" % polynomial.residual_rms],
    )


def classify(
    series: EnergySeries,
    window: Optional[Tuple[float, float]] = None,
    extinction_threshold: Optional[float] = None,
) -> DecayFit:
    """extinct / exponential / polynomial / inconclusive

    能量在出射时刻附近跌破阈值并保持才算消亡；尾部缓慢跌破的序列照常拟合。
    两种模型各自拟合，残差 RMS 不超过对方一半、子窗口斜率稳定（相对 10%）
    且速率为正者胜出。未指定窗口时沿 window_ladder 后移起点，取第一个
    有结论的梯级。
    """
    label = series.meta.run_id or "-"
    t_ext = extinction_time(series, extinction_threshold)
    if t_ext is not None:
        if empties_in_finite_time(series, t_ext):
            logger.info(f"series {label}: extinct at t={t_ext:.4g}")
            return DecayFit(
                model="extinct", fit_window=(t_ext, float(series.times[-1])), r_squared=1.0, extinction_time=t_ext,
            )
        logger.info(f"series {label}: below threshold only from t={t_ext:.4g}, after exit at {series.meta.exit_time:.4g}")

    if window is not None:
        verdict = _judge(series, window)
        logger.info(f"series {label}: verdict {verdict.model}, rate={verdict.rate}")
        return verdict

    first: Optional[DecayFit] = None
    error: Optional[SeriesTooShortError] = None
    for rung in window_ladder(default_window(series)):
        try:
            verdict = _judge(series, rung)
        except SeriesTooShortError as e:
            error = error or e
            continue
        if verdict.model != "inconclusive":
            logger.info(f"series {label}: verdict {verdict.model} on [{rung[0]:.4g}, {rung[1]:.4g}], rate={verdict.rate}")
            return verdict
        first = first or verdict
    if first is None:
        raise error
    logger.info(f"series {label}: verdict inconclusive")
    return first
