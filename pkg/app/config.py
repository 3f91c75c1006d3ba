import os
from dotenv import load_dotenv
from pathlib import Path

# 获取当前文件所在目录
current_dir = Path(__file__).parent
# 加载环境变量，指定.env文件的路径
load_dotenv(current_dir / ".env")

DATA_DIR = Path(os.getenv("CONE_LAB_DATA_DIR", "data"))
OUTPUT_DIR = Path(os.getenv("CONE_LAB_OUTPUT_DIR", "runs"))
LOG_LEVEL = os.getenv("CONE_LAB_LOG_LEVEL", "INFO")
DEFAULT_WORKERS = int(os.getenv("CONE_LAB_WORKERS", "1"))

# 度量检查的数值默认值
METRIC_DEFAULTS = {
    # 计算 F(y) 上确界时的角度采样数，按维数区分
    "angular_samples": {2: 256, 3: 1024},
    "angular_samples_high_dim": 4096,
    "h_r_factor": 1e-4,
    "h_r_floor": 1e-6,
    "h_g": 1e-3,
    "cone_tolerance": 1e-10,
    "assumption_c_tolerance": 1e-8,
    "assumption_a_growth_fraction": 0.95,
    # 倍增阶梯的最多级数
    "assumption_a_ladder": 12,
    "pole_margin": 1e-3,
    "q_check_directions": 16,
    "quadrature_tolerance": 1e-12,
    "quadrature_grid_step": 0.05,
}

# 径向求解器
RADIAL_DEFAULTS = {
    "n_cells": 4000,
    "cfl": 0.5,
    "front_margin_cells": 20,
    # 截断边界外留出的网格数，大于 front_margin_cells
    "padding_cells": 32,
    "energy_growth_guard": 0.01,
    "weight_exponent_cap": 700.0,
}

# 平面（二维极坐标）求解器
PLANAR_DEFAULTS = {
    "n_r": 200,
    "n_theta": 128,
    "cfl": 0.4,
    "energy_growth_guard": 0.01,
    # 外半径在 T 时刻波前外留出的网格数，大于 front_check_cells
    "front_margin_cells": 32,
    # 有限传播速度检查在波前外留出的网格数
    "front_check_cells": 20,
}

# 衰减分析
ANALYSIS_DEFAULTS = {
    "floor": 1e-30,
    "min_points": 8,
    "residual_ratio": 2.0,
    "slope_tolerance": 0.10,
    "extinction_threshold": 1e-8,
    "poor_fit_r_squared": 0.99,
    "sub_windows": 3,
    "transit_offset": 5.0,
    "window_end_fraction": 0.9,
    # 跌破消亡阈值的时刻须 ≤ (1 + exit_slack)·出射时刻
    "exit_slack": 0.5,
    # 相对 E(0) 的数值噪声底，拟合窗口在此之前截止
    "fit_floor": 1e-10,
    "window_ladder": 4,
}
