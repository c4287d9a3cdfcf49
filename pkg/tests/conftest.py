import pytest

from radex.corpus import Report

# Text of the worked example report (Indiana chest X-ray collection).
WORKED_FINDINGS = (
    "The cardiomediastinal silhouette is within normal limits for size and contour. "
    "The lungs are normally inflated without evidence of focal airspace disease, "
    "pleural effusion, or pneumothorax. Stable calcified granuloma within the right "
    "upper lung. No acute bone abnormality."
)
WORKED_IMPRESSION = "No acute cardiopulmonary process."

EXAMPLE1_FINDINGS = (
    "Moderate cardiomegaly. Mild bilateral costophrenic XXXX blunting and fissural "
    "thickening, interstitial opacities greatest in the central lungs and bases with "
    "indistinct vascular margination. Dense right lower lobe nodule and right hilar "
    "calcifications suggest a previous granulomatous process."
)
EXAMPLE1_IMPRESSION = (
    "1. Cardiomegaly and small bilateral pleural effusions 2. Abnormal pulmonary "
    "opacities most suggestive of pulmonary edema, primary differential diagnosis "
    "atypical infection and inflammation"
)

EXAMPLE3_FINDINGS = (
    "The lungs and pleural spaces show no acute abnormality. XXXX scar in the right "
    "lateral midlung. Adjacent focal pleural thickening is noted. Chronic blunting of "
    "both lateral costophrenic XXXX. Heart size and pulmonary vascularity within "
    "normal limits. Tortuous, ectatic thoracic aorta, unchanged. XXXX sternotomy "
    "XXXX intact."
)
EXAMPLE3_IMPRESSION = "No acute pulmonary abnormality."
EXAMPLE3_GOLD = ("Aorta, Thoracic", "Cicatrix", "Costophrenic Angle", "Thickening")


@pytest.fixture
def worked_report():
    return Report("worked_example", WORKED_FINDINGS, WORKED_IMPRESSION, ("Calcified Granuloma",))


@pytest.fixture
def example1_report():
    return Report(
        "example1", EXAMPLE1_FINDINGS, EXAMPLE1_IMPRESSION,
        ("Calcinosis", "Cardiomegaly", "Costophrenic Angle", "Density", "Nodule",
         "Opacity", "Pleural Effusion", "Pulmonary Congestion", "Pulmonary Edema",
         "Thickening"),
    )


@pytest.fixture
def example3_report():
    return Report("example3", EXAMPLE3_FINDINGS, EXAMPLE3_IMPRESSION, EXAMPLE3_GOLD)


# One summary line per acceptance criterion, printed after the run.
_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    if call.excinfo is None:
        status = "PASS"
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        status = "SKIP"
    else:
        status = "FAIL"
    _criteria.append((number, status, title))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title in sorted(_criteria):
        terminalreporter.write_line(f"AC{number} {status:4} {title}")
