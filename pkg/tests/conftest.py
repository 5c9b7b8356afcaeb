"""
Shared fixtures: the sextic potential with one gap and the Ginibre ensemble.
"""
import pytest

from config import settings
from services.droplet import solve_droplet
from services.potential import RadialPotential

SEXTIC = [1.8, -0.8, 0.1]
GINIBRE = [1.0]


@pytest.fixture(autouse=True, scope="session")
def isolated_cache(tmp_path_factory):
    """Point the table cache at a throwaway directory"""
    root = tmp_path_factory.mktemp("cache")
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(settings, "CACHE", root)
        mp.setattr(settings, "THREADS", 1)
        yield root


@pytest.fixture(scope="session")
def sextic():
    return RadialPotential(SEXTIC)


@pytest.fixture(scope="session")
def sextic_geometry(sextic):
    return solve_droplet(sextic)


@pytest.fixture(scope="session")
def sextic_gap(sextic_geometry):
    return sextic_geometry.gap


@pytest.fixture(scope="session")
def ginibre():
    return RadialPotential(GINIBRE)


@pytest.fixture(scope="session")
def ginibre_geometry(ginibre):
    return solve_droplet(ginibre)


@pytest.fixture
def write_config(tmp_path):
    """Writes a run file and returns its path"""
    def _write(text: str, name: str = "run.cfg"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write
