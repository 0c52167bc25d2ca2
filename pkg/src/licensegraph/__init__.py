"""License incompatibility detection and remediation for Python dependency graphs."""

from __future__ import annotations

from .detector import CompatibilityLabel, Detection, detect, ecosystem_stats
from .index import PackageIndex, load_index
from .licensing import LicenseInfo, load_matrix
from .model import ReleaseId
from .remediator import remediate
from .resolver import DependencyGraph, resolve

__version__ = "0.1.0"

__all__ = [
    "CompatibilityLabel", "DependencyGraph", "Detection", "LicenseInfo", "PackageIndex",
    "ReleaseId", "detect", "ecosystem_stats", "load_index", "load_matrix", "remediate", "resolve",
]
