"""Extended-target SLAM simulator and mapping-error metric library.

Subpackages cover the world model (:mod:`etslam.scene`), the two sensing
backends (:mod:`etslam.ofdm`, :mod:`etslam.parametric`), occupancy-grid SLAM
(:mod:`etslam.slam`), DBSCAN target recognition (:mod:`etslam.clustering`),
the ET-GOSPA / GOSPA metrics (:mod:`etslam.metrics`), and the Monte Carlo
experiment harness (:mod:`etslam.harness`).
"""

from etslam.metrics import MetricParams, et_gospa, gospa_baseline

__all__ = ["MetricParams", "et_gospa", "gospa_baseline"]
__version__ = "0.1.0"
