import time
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
import psutil
from loguru import logger

from src.errors import ResourceError


class ResourceMonitor:
    """Process resource tracking and the memory guard for large levels."""

    def __init__(self, config):
        self.config = config
        self.max_level = config.get("bench.max_level", 9)
        self.process = psutil.Process()
        self.start_time = time.time()

        self.metrics = {
            "rss_bytes": 0,
            "available_bytes": 0,
            "memory_usage": 0.0,
            "cpu_count": psutil.cpu_count(logical=True) or 1,
            "uptime": 0.0,
        }

    def update_system_metrics(self) -> Dict[str, Any]:
        """Update process and system memory metrics."""
        memory = psutil.virtual_memory()
        self.metrics["rss_bytes"] = self.process.memory_info().rss
        self.metrics["available_bytes"] = memory.available
        self.metrics["memory_usage"] = memory.percent
        self.metrics["uptime"] = time.time() - self.start_time
        return self.get_metrics()

    @staticmethod
    def estimate_level_bytes(J: int) -> int:
        """Rough footprint of a Gauss-Legendre level J transform: Legendre tables plus sequences."""
        n_lat = 2 ** J + 1
        L = 2 ** (J - 1)
        N = 2 * n_lat * n_lat
        tables = 3 * 8 * n_lat * (L + 1) * (L + 2) // 2
        sequences = 4 * 3 * 16 * N
        return int(tables + sequences)

    def check_level(self, J: int, force: bool = False) -> None:
        """Refuse levels beyond the configured maximum or the available memory unless forced."""
        self.update_system_metrics()
        needed = self.estimate_level_bytes(J)
        available = self.metrics["available_bytes"]
        if J > self.max_level and not force:
            logger.error(f"Level {J} exceeds the guarded maximum {self.max_level}")
            raise ResourceError(f"Level J={J} is above {self.max_level}; pass --force to run it anyway")
        if needed > available:
            if not force:
                raise ResourceError(
                    f"Level J={J} needs about {needed / 2**30:.2f} GiB, {available / 2**30:.2f} GiB available"
                )
            logger.warning(f"Forcing level {J}: estimate {needed / 2**30:.2f} GiB exceeds available memory")
        elif needed > 0.5 * available:
            logger.warning(f"Level {J} uses more than half of the available memory")

    def get_metrics(self) -> Dict[str, Any]:
        """Get current metrics."""
        return self.metrics.copy()

    def log_performance(self, label: str):
        """Log the current memory picture."""
        self.update_system_metrics()
        logger.info(
            f"{label}: RSS={self.metrics['rss_bytes'] / 2**20:.1f} MiB, "
            f"available={self.metrics['available_bytes'] / 2**20:.0f} MiB, "
            f"memory={self.metrics['memory_usage']:.1f}%"
        )


def timed(fn: Callable[[], Any], repeats: int = 3, warmup: int = 1) -> Tuple[float, List[float], Any]:
    """Wall-clock median over repeats after discarded warmup runs; returns (median, samples, last result)."""
    result = None
    for _ in range(warmup):
        result = fn()
    samples = []
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        result = fn()
        samples.append(time.perf_counter() - start)
    return float(np.median(samples)), samples, result
