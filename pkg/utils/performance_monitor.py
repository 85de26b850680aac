import logging
import time
from typing import Dict, Any
from datetime import datetime

logger = logging.getLogger(__name__)

class PerformanceMonitor:
    """Count and time named pipeline stages (forward passes, iterations, evaluations)"""

    def __init__(self, window: int = 1000):
        """Initialize performance monitor"""
        self.window = window
        self.reset_metrics()
        logger.debug("Performance monitor initialized")

    def track(self, stage: str, start_time: float) -> float:
        """Record one completed stage started at start_time; returns its duration in seconds"""
        duration = time.perf_counter() - start_time

        stats = self.metrics['stage_stats'].setdefault(stage, {
            'count': 0,
            'total_time': 0.0,
            'recent_times': [],
        })
        stats['count'] += 1
        stats['total_time'] += duration
        stats['recent_times'].append(duration)
        if len(stats['recent_times']) > self.window:  # keep the last `window` samples
            stats['recent_times'] = stats['recent_times'][-self.window:]

        return duration

    def count(self, stage: str) -> int:
        """Number of completed occurrences of a stage"""
        stats = self.metrics['stage_stats'].get(stage)
        return stats['count'] if stats else 0

    def get_metrics(self) -> Dict[str, Any]:
        """Get current performance metrics"""
        uptime = time.perf_counter() - self.metrics['start_time']
        return {
            'uptime_seconds': round(uptime, 3),
            'stage_stats': {
                stage: {
                    'count': stats['count'],
                    'average_ms': round(
                        sum(stats['recent_times']) / len(stats['recent_times']) * 1000, 3
                    ) if stats['recent_times'] else 0.0,
                    'total_seconds': round(stats['total_time'], 3),
                }
                for stage, stats in self.metrics['stage_stats'].items()
            },
            'timestamp': datetime.now().isoformat(),
        }

    def reset_metrics(self):
        """Reset all performance metrics"""
        self.metrics = {
            'start_time': time.perf_counter(),
            'stage_stats': {},
        }
