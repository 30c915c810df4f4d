"""Narrative classification and evidence-grounded explanation for news articles."""
from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def data_path(*parts: str) -> Path:
    """Location of a bundled data file (synthetic corpora, demo config)."""
    return Path(str(resources.files(__name__).joinpath("data", *parts)))
