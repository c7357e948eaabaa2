"""Conditional-independence tests and the shared p-value cache."""

from .base import CiOutcome, CiTest, CiTestError, Dataset, canonical_query
from .cache import CiCache, cached_ci
from .gcm import GCM, RegressorSpec, gcm_test
from .kci import KCI, kci_test
from .oracle import DSeparationOracle
from .pcorr import PartialCorrelation, pcorr_test

TEST_NAMES = ("pcorr", "gcm", "kci")


def make_test(name: str, regressor: RegressorSpec | None = None, **options) -> CiTest:
    if name == "pcorr":
        return PartialCorrelation()
    if name == "gcm":
        return GCM(regressor)
    if name == "kci":
        return KCI(**options)
    raise ValueError(f"unknown CI test {name!r}; expected one of {TEST_NAMES}")


__all__ = [
    "CiCache", "CiOutcome", "CiTest", "CiTestError", "DSeparationOracle", "Dataset", "GCM",
    "KCI", "PartialCorrelation", "RegressorSpec", "TEST_NAMES", "cached_ci", "canonical_query",
    "gcm_test", "kci_test", "make_test", "pcorr_test",
]
