"""Bundled synthetic cohort shaped like a phylum-level American Gut extract.

The CSVs are produced by ``microbiome.synthetic_cohort`` with the parameters
below; ``python -m aggko.data`` rewrites them.
"""

from importlib import resources
from pathlib import Path

FIXTURE_PARAMS = dict(n_samples=400, n_taxa=55, n_signal=5, effect=1.0, seed=2018, prefix="phylum")
COUNTS_FILE = "agp_fixture_counts.csv"
METADATA_FILE = "agp_fixture_metadata.csv"


def fixture_paths():
    root = resources.files(__name__)
    return Path(str(root / COUNTS_FILE)), Path(str(root / METADATA_FILE))


def write_fixture(directory=None):
    from ..microbiome import synthetic_cohort, write_table

    directory = Path(directory) if directory else Path(__file__).parent
    table, metadata, signal = synthetic_cohort(**FIXTURE_PARAMS)
    write_table(table, metadata, directory / COUNTS_FILE, directory / METADATA_FILE)
    return signal
