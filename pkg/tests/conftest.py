import pytest


@pytest.fixture(autouse=True)
def _isolated_symbol_cache(monkeypatch, tmp_path_factory):
    """Keep symbol cache files inside the test tree, shared per session."""
    cache = tmp_path_factory.getbasetemp() / "symbol-cache"
    monkeypatch.setenv("GPE_CACHE_DIR", str(cache))
