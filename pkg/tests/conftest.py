import numpy as np
import pytest

from tailrisk import LogNormalParams, from_lognormal, reference_model

# acceptance criteria register their PASS/FAIL lines here; printed at the end
ACCEPTANCE_RESULTS: list[tuple[str, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, desc, passed, detail in ACCEPTANCE_RESULTS:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {cid:>2}: {verdict}  {desc}"
                                    + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def bench_model():
    """The d = 10 benchmark model (mu_i = i - 10, sigma2_i = i), rho = 0."""
    return reference_model(0.0)


def two_risk_model(rho=0.0, sigma2=(1.0, 1.0), mu=(0.0, 0.0)):
    return from_lognormal(LogNormalParams(mu=np.array(mu, dtype=float),
                                          sigma2=np.array(sigma2, dtype=float),
                                          rho=rho))


def run_mean_se(values):
    """Sample mean and its standard error."""
    values = np.asarray(values)
    return values.mean(), values.std(ddof=1) / np.sqrt(values.size)
