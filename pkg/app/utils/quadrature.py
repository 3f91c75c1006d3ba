import threading
from typing import Callable, Dict

from scipy import integrate

from ..exceptions import MetricError


class CumulativeIntegral:
    """H(r) = ∫_{r0}^{r} h(y) dy，在等距半径节点上缓存

    节点之间的值 = 最近下方节点的缓存值 + 局部求积。局部区间很短，
    Gauss-Kronrod 在第一轮就收敛，所以 H 对 r 是光滑的，可以做有限差分。
    """

    def __init__(self, integrand: Callable[[float], float], r0: float, step: float = 0.05, tolerance: float = 1e-12):
        self.integrand = integrand
        self.r0 = float(r0)
        self.step = float(step)
        self.tolerance = tolerance
        self._nodes: Dict[int, float] = {0: 0.0}
        self._top = 0
        self._lock = threading.Lock()

    def _segment(self, a: float, b: float) -> float:
        value, _ = integrate.quad(self.integrand, a, b, epsabs=self.tolerance, epsrel=self.tolerance, limit=200)
        return value

    def _node_value(self, k: int) -> float:
        with self._lock:
            while self._top < k:
                a = self.r0 + self._top * self.step
                self._nodes[self._top + 1] = self._nodes[self._top] + self._segment(a, a + self.step)
                self._top += 1
            return self._nodes[k]

    def __call__(self, r: float) -> float:
        if r < self.r0 * (1.0 - 1e-12):
            raise MetricError(f"integral requested below r0: r={r}")
        k = max(0, int((r - self.r0) // self.step))
        base = self.r0 + k * self.step
        value = self._node_value(k)
        if r > base:
            value += self._segment(base, r)
        return value

    def prefill(self, r_max: float) -> None:
        """并行使用前预先填充缓存"""
        self._node_value(int((r_max - self.r0) // self.step) + 1)
